//! JSON interchange format for networks.
//!
//! ```json
//! {
//!   "input_dim": 2,
//!   "output_dim": 1,
//!   "layers": [
//!     {"type": "affine", "w": [["0x1p+0", "0x0p+0"]], "b": ["-0x1p+0"]},
//!     {"type": "act", "kinds": ["relu"]},
//!     {"type": "pool"}
//!   ],
//!   "final_bias": ["0x0p+0"]
//! }
//! ```
//!
//! Weights are hex-float strings for exact round-trips. Large sparse layers
//! use `"w_sparse": {"nrows", "ncols", "entries": [[row, col, "hex"], ...]}`
//! instead of `"w"`; readers accept either form.

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::hexfloat::{format_hex, parse_hex};
use crate::linalg::{SparseMatrix, Weights};
use crate::network::{Layer, Network};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct NetDoc {
    input_dim: usize,
    output_dim: usize,
    layers: Vec<LayerDoc>,
    final_bias: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LayerDoc {
    Affine {
        #[serde(skip_serializing_if = "Option::is_none")]
        w: Option<Vec<Vec<String>>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        w_sparse: Option<SparseDoc>,
        b: Vec<String>,
    },
    Act {
        kinds: Vec<ActivationKind>,
    },
    Pool,
}

#[derive(Serialize, Deserialize)]
struct SparseDoc {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, String)>,
}

fn hex_vec(v: &DVector<f64>) -> Vec<String> {
    v.iter().map(|&x| format_hex(x)).collect()
}

fn parse_f64(s: &str, path: &str) -> Result<f64> {
    let v = parse_hex(s).map_err(|e| Error::parse(path, e))?;
    if !v.is_finite() {
        return Err(Error::parse(path, "non-finite value"));
    }
    Ok(v)
}

fn parse_vec(strings: &[String], path: &str) -> Result<DVector<f64>> {
    let mut out = Vec::with_capacity(strings.len());
    for (i, s) in strings.iter().enumerate() {
        out.push(parse_f64(s, &format!("{path}[{i}]"))?);
    }
    Ok(DVector::from_vec(out))
}

pub fn to_json(net: &Network) -> String {
    let layers = net
        .layers()
        .iter()
        .map(|layer| match layer {
            Layer::Affine { weights, bias } => {
                let (w, w_sparse) = match weights {
                    Weights::Dense(m) => {
                        let rows = (0..m.nrows())
                            .map(|r| (0..m.ncols()).map(|c| format_hex(m[(r, c)])).collect())
                            .collect();
                        (Some(rows), None)
                    }
                    Weights::Sparse(m) => {
                        let entries = m
                            .triplets()
                            .map(|(r, c, v)| (r, c, format_hex(v)))
                            .collect();
                        (
                            None,
                            Some(SparseDoc {
                                nrows: m.nrows(),
                                ncols: m.ncols(),
                                entries,
                            }),
                        )
                    }
                };
                LayerDoc::Affine {
                    w,
                    w_sparse,
                    b: hex_vec(bias),
                }
            }
            Layer::Activation { kinds } => LayerDoc::Act {
                kinds: kinds.clone(),
            },
            Layer::Pool => LayerDoc::Pool,
        })
        .collect();
    let doc = NetDoc {
        input_dim: net.input_dim(),
        output_dim: net.output_dim(),
        layers,
        final_bias: hex_vec(net.final_bias()),
    };
    serde_json::to_string(&doc).expect("network document serializes")
}

pub fn from_json(text: &str) -> Result<Network> {
    let doc: NetDoc =
        serde_json::from_str(text).map_err(|e| Error::parse("document", e.to_string()))?;
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (i, layer) in doc.layers.iter().enumerate() {
        let path = format!("layers[{i}]");
        let layer = match layer {
            LayerDoc::Affine { w, w_sparse, b } => {
                let bias = parse_vec(b, &format!("{path}.b"))?;
                let weights = match (w, w_sparse) {
                    (Some(rows), None) => {
                        let nrows = rows.len();
                        let ncols = rows.first().map_or(0, |r| r.len());
                        if rows.iter().any(|r| r.len() != ncols) {
                            return Err(Error::parse(&path, "ragged weight matrix"));
                        }
                        let mut m = DMatrix::zeros(nrows, ncols);
                        for (r, row) in rows.iter().enumerate() {
                            for (c, s) in row.iter().enumerate() {
                                m[(r, c)] = parse_f64(s, &format!("{path}.w[{r}][{c}]"))?;
                            }
                        }
                        Weights::Dense(m)
                    }
                    (None, Some(sp)) => {
                        let mut trips = Vec::with_capacity(sp.entries.len());
                        for (k, (r, c, s)) in sp.entries.iter().enumerate() {
                            trips.push((
                                *r,
                                *c,
                                parse_f64(s, &format!("{path}.w_sparse.entries[{k}]"))?,
                            ));
                        }
                        Weights::Sparse(
                            SparseMatrix::from_triplets(sp.nrows, sp.ncols, &trips)
                                .map_err(|e| Error::parse(&path, e))?,
                        )
                    }
                    _ => {
                        return Err(Error::parse(
                            &path,
                            "affine layer needs exactly one of w / w_sparse",
                        ))
                    }
                };
                Layer::Affine { weights, bias }
            }
            LayerDoc::Act { kinds } => Layer::Activation {
                kinds: kinds.clone(),
            },
            LayerDoc::Pool => Layer::Pool,
        };
        layers.push(layer);
    }
    let final_bias = parse_vec(&doc.final_bias, "final_bias")?;
    let net = Network::new(doc.input_dim, layers, final_bias)?;
    if net.output_dim() != doc.output_dim {
        return Err(Error::parse(
            "output_dim",
            format!("declared {} but layers produce {}", doc.output_dim, net.output_dim()),
        ));
    }
    Ok(net)
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(net))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    let text = std::fs::read_to_string(&path)?;
    from_json(&text)
}
