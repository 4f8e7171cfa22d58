use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::linalg::Weights;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub enum Layer {
    Affine { weights: Weights, bias: DVector<f64> },
    Activation { kinds: Vec<ActivationKind> },
    /// Half-split bilinear pooling: a width-2m vector y maps to
    /// (y_i * y_{m+i}) for i = 1..m. Iterating on a width-2^k vector yields
    /// the product of all coordinates.
    Pool,
}

impl Layer {
    pub fn affine(weights: DMatrix<f64>, bias: DVector<f64>) -> Layer {
        Layer::Affine {
            weights: Weights::Dense(weights),
            bias,
        }
    }

    pub fn relu(width: usize) -> Layer {
        Layer::Activation {
            kinds: vec![ActivationKind::Relu; width],
        }
    }

    /// Output width given the input width, or the structural error.
    fn out_width(&self, layer_idx: usize, in_width: usize) -> Result<usize> {
        match self {
            Layer::Affine { weights, bias } => {
                if weights.ncols() != in_width {
                    return Err(Error::DimensionMismatch {
                        layer: layer_idx,
                        expected: weights.ncols(),
                        got: in_width,
                    });
                }
                if weights.nrows() != bias.len() {
                    return Err(Error::invalid(format!(
                        "layer {layer_idx}: {} weight rows vs {} bias entries",
                        weights.nrows(),
                        bias.len()
                    )));
                }
                Ok(weights.nrows())
            }
            Layer::Activation { kinds } => {
                if kinds.len() != in_width {
                    return Err(Error::DimensionMismatch {
                        layer: layer_idx,
                        expected: kinds.len(),
                        got: in_width,
                    });
                }
                Ok(in_width)
            }
            Layer::Pool => {
                if in_width % 2 != 0 || in_width == 0 {
                    return Err(Error::OddPoolWidth {
                        layer: layer_idx,
                        got: in_width,
                    });
                }
                Ok(in_width / 2)
            }
        }
    }
}

/// Feedforward network: input x, a chain of affine / activation / pooling
/// layers, and a final constant offset c added to the last layer's output.
#[derive(Clone, Debug)]
pub struct Network {
    input_dim: usize,
    output_dim: usize,
    layers: Vec<Layer>,
    final_bias: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureStats {
    /// Maximum layer output width.
    pub width: usize,
    /// Number of activation layers. Affine layers between activations are
    /// free, matching the usual convention of one unit of depth per
    /// affine+activation stage; pooling is counted separately.
    pub depth: usize,
    pub pool_count: usize,
    /// Stored weight and bias entries (nonzeros for sparse layers).
    pub param_count: usize,
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<Layer>, final_bias: DVector<f64>) -> Result<Network> {
        if input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        let mut width = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            width = layer.out_width(i, width)?;
            match layer {
                Layer::Affine { weights, bias } => {
                    if weights.iter_values().any(|v| !v.is_finite())
                        || bias.iter().any(|v| !v.is_finite())
                    {
                        return Err(Error::invalid(format!(
                            "layer {i}: non-finite affine parameter"
                        )));
                    }
                }
                Layer::Activation { kinds } => {
                    for k in kinds {
                        k.validate()?;
                    }
                }
                Layer::Pool => {}
            }
        }
        if width != final_bias.len() {
            return Err(Error::invalid(format!(
                "final width {width} does not match final_bias length {}",
                final_bias.len()
            )));
        }
        if final_bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite final bias"));
        }
        Ok(Network {
            input_dim,
            output_dim: final_bias.len(),
            layers,
            final_bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn final_bias(&self) -> &DVector<f64> {
        &self.final_bias
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                layer: 0,
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Affine { weights, bias } => {
                    let mut out = DVector::zeros(weights.nrows());
                    weights.apply_into(&cur, bias, &mut out);
                    out
                }
                Layer::Activation { kinds } => {
                    let mut out = cur;
                    for (v, k) in out.iter_mut().zip(kinds) {
                        *v = k.apply(*v);
                    }
                    out
                }
                Layer::Pool => {
                    let m = cur.len() / 2;
                    DVector::from_fn(m, |i, _| cur[i] * cur[m + i])
                }
            };
        }
        Ok(cur + &self.final_bias)
    }

    pub fn stats(&self) -> ArchitectureStats {
        let mut width = 0usize;
        let mut depth = 0usize;
        let mut pool_count = 0usize;
        let mut param_count = 0usize;
        let mut w = self.input_dim;
        for (i, layer) in self.layers.iter().enumerate() {
            w = layer.out_width(i, w).expect("validated at construction");
            width = width.max(w);
            match layer {
                Layer::Affine { weights, bias } => {
                    param_count += weights.param_count() + bias.len()
                }
                Layer::Activation { .. } => depth += 1,
                Layer::Pool => pool_count += 1,
            }
        }
        ArchitectureStats {
            width: width.max(1),
            depth,
            pool_count,
            param_count,
        }
    }

    /// True when every activation is relu or identity; the exact-support
    /// constructions refuse anything else.
    pub fn exactness_safe(&self) -> bool {
        self.layers.iter().all(|l| match l {
            Layer::Activation { kinds } => kinds.iter().all(|k| k.exactness_safe()),
            _ => true,
        })
    }

    /// First activation kind that is not relu/identity, for error messages.
    pub fn first_analytic_kind(&self) -> Option<String> {
        self.layers.iter().find_map(|l| match l {
            Layer::Activation { kinds } => kinds
                .iter()
                .find(|k| !k.exactness_safe())
                .map(|k| k.name()),
            _ => None,
        })
    }

    /// Width of every layer output, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut ws = vec![self.input_dim];
        let mut w = self.input_dim;
        for (i, layer) in self.layers.iter().enumerate() {
            w = layer.out_width(i, w).expect("validated at construction");
            ws.push(w);
        }
        ws
    }
}
