//! Target functions for approximation experiments.
//!
//! A target is anything `Evaluable`: the built-in catalog (`bump`, `boxdist`,
//! hinge sums, constants), a tabulated grid loaded from CSV, or a [`Network`]
//! itself. Catalog entries carry a *claimed* Lipschitz constant that is an
//! upper bound for the true one, so interpolation error bounds computed from
//! it are valid.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::network::Network;

/// A function ℝᵈ → ℝᴰ that can be sampled pointwise.
pub trait Evaluable {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    /// Callers must pass a vector of length `dim_in()`.
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
}

impl Evaluable for Network {
    fn dim_in(&self) -> usize {
        self.input_dim()
    }

    fn dim_out(&self) -> usize {
        self.output_dim()
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self.evaluate(x).expect("input dimension checked by caller")
    }
}

type EvalFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A catalog target: evaluator plus the metadata the pipeline needs.
#[derive(Clone)]
pub struct FunctionSpec {
    pub label: String,
    pub dim_in: usize,
    pub dim_out: usize,
    /// Claimed Lipschitz constant (Euclidean-to-Euclidean), an upper bound.
    pub lipschitz: f64,
    /// Axis-aligned box known to contain the support (or, for targets that
    /// are not compactly supported, the domain of interest).
    pub support_box: BoundingBox,
    evaluator: EvalFn,
}

impl FunctionSpec {
    pub fn new(
        label: impl Into<String>,
        dim_in: usize,
        dim_out: usize,
        lipschitz: f64,
        support_box: BoundingBox,
        evaluator: EvalFn,
    ) -> FunctionSpec {
        FunctionSpec { label: label.into(), dim_in, dim_out, lipschitz, support_box, evaluator }
    }
}

impl Evaluable for FunctionSpec {
    fn dim_in(&self) -> usize {
        self.dim_in
    }

    fn dim_out(&self) -> usize {
        self.dim_out
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.dim_in);
        (self.evaluator)(x)
    }
}

impl fmt::Debug for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionSpec")
            .field("label", &self.label)
            .field("dim_in", &self.dim_in)
            .field("dim_out", &self.dim_out)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

/// Radial bump 2·max(0, 1 − ‖x‖₂): Lipschitz 2, support the unit ball.
pub fn bump(d: usize) -> FunctionSpec {
    FunctionSpec::new(
        "bump",
        d,
        1,
        2.0,
        BoundingBox::symmetric(d, 1.0),
        Arc::new(|x: &DVector<f64>| {
            let v = 2.0 * (1.0 - x.norm()).max(0.0);
            DVector::from_element(1, v)
        }),
    )
}

/// max(0, min_i (1 − |x_i|)): Lipschitz 1, support [−1, 1]^d.
pub fn boxdist(d: usize) -> FunctionSpec {
    FunctionSpec::new(
        "boxdist",
        d,
        1,
        1.0,
        BoundingBox::symmetric(d, 1.0),
        Arc::new(|x: &DVector<f64>| {
            let m = x.iter().map(|&xi| 1.0 - xi.abs()).fold(f64::INFINITY, f64::min);
            DVector::from_element(1, m.max(0.0))
        }),
    )
}

/// Seeded sum of L¹ hinges Σ c_j·max(0, r_j − ‖x − a_j‖₁).
///
/// Claimed Lipschitz constant √d·Σ|c_j| (each ‖·‖₁ hinge is √d-Lipschitz in
/// the Euclidean norm). Support sits inside [−1.4, 1.4]^d by construction.
pub fn hinge_sum(d: usize, terms: usize, seed: u64) -> FunctionSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Vec::with_capacity(terms);
    let mut radii = Vec::with_capacity(terms);
    let mut coeffs = Vec::with_capacity(terms);
    for _ in 0..terms {
        centers.push(DVector::from_fn(d, |_, _| rng.gen_range(-0.6..0.6)));
        radii.push(rng.gen_range(0.3..0.8));
        let mag = rng.gen_range(0.3..1.0);
        coeffs.push(if rng.gen::<bool>() { mag } else { -mag });
    }
    let lip = (d as f64).sqrt() * coeffs.iter().map(|c: &f64| c.abs()).sum::<f64>();
    FunctionSpec::new(
        format!("hinges[{terms},seed={seed}]"),
        d,
        1,
        lip,
        BoundingBox::symmetric(d, 1.4),
        Arc::new(move |x: &DVector<f64>| {
            let mut acc = 0.0;
            for ((a, &r), &c) in centers.iter().zip(&radii).zip(&coeffs) {
                let dist: f64 = x.iter().zip(a.iter()).map(|(xi, ai)| (xi - ai).abs()).sum();
                acc += c * (r - dist).max(0.0);
            }
            DVector::from_element(1, acc)
        }),
    )
}

/// Constant function with value `c` in every output coordinate.
pub fn constant(d: usize, dim_out: usize, c: f64) -> FunctionSpec {
    FunctionSpec::new(
        format!("const:{c}"),
        d,
        dim_out,
        0.0,
        BoundingBox::symmetric(d, 1.0),
        Arc::new(move |_x: &DVector<f64>| DVector::from_element(dim_out, c)),
    )
}

/// The zero function.
pub fn zero(d: usize, dim_out: usize) -> FunctionSpec {
    let mut spec = constant(d, dim_out, 0.0);
    spec.label = "zero".into();
    spec
}

/// Resolve a target by CLI name.
///
/// Accepted: `bump`, `boxdist`, `hinges`, `hinges:<seed>`, `zero`,
/// `const:<value>`, `csv:<path>`.
pub fn by_name(name: &str, d: usize) -> Result<FunctionSpec> {
    if d == 0 {
        return Err(Error::invalid("target dimension must be positive"));
    }
    match name {
        "bump" => return Ok(bump(d)),
        "boxdist" => return Ok(boxdist(d)),
        "hinges" => return Ok(hinge_sum(d, 4, 7)),
        "zero" => return Ok(zero(d, 1)),
        _ => {}
    }
    if let Some(rest) = name.strip_prefix("hinges:") {
        let seed: u64 = rest
            .parse()
            .map_err(|_| Error::invalid(format!("bad hinges seed {rest:?}")))?;
        return Ok(hinge_sum(d, 4, seed));
    }
    if let Some(rest) = name.strip_prefix("const:") {
        let c: f64 = rest
            .parse()
            .map_err(|_| Error::invalid(format!("bad constant value {rest:?}")))?;
        return Ok(constant(d, 1, c));
    }
    if let Some(path) = name.strip_prefix("csv:") {
        return from_csv(Path::new(path), d);
    }
    Err(Error::invalid(format!(
        "unknown target {name:?}; expected bump, boxdist, hinges[:seed], zero, const:<v>, csv:<path>"
    )))
}

/// Tabulated target on a full tensor grid, loaded from CSV.
///
/// Each row holds `d` coordinates followed by the output values; the rows
/// must cover the full product of the per-axis coordinate sets. Evaluation is
/// multilinear inside the grid hull and exactly zero outside it.
pub fn from_csv(path: &Path, d: usize) -> Result<FunctionSpec> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path.display().to_string(), e))?;
        let mut row = Vec::with_capacity(record.len());
        let mut ok = true;
        for field in record.iter() {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            if i == 0 {
                continue; // header line
            }
            return Err(Error::parse(
                path.display().to_string(),
                format!("row {} contains a non-numeric field", i + 1),
            ));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path.display().to_string(), "no data rows"));
    }
    let ncols = rows[0].len();
    if ncols <= d {
        return Err(Error::parse(
            path.display().to_string(),
            format!("rows have {ncols} columns but d={d} coordinates were requested"),
        ));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::parse(
            path.display().to_string(),
            format!("row {} has {} columns, expected {ncols}", bad + 1, rows[bad].len()),
        ));
    }
    let dim_out = ncols - d;

    // Per-axis sorted node sets. Grid files are expected to repeat exact
    // float values, so dedup by bit pattern.
    let mut axes: Vec<Vec<f64>> = vec![Vec::new(); d];
    for row in &rows {
        for (ax, &v) in row[..d].iter().enumerate() {
            if !axes[ax].iter().any(|&u| u == v) {
                axes[ax].push(v);
            }
        }
    }
    for axis in &mut axes {
        axis.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    }
    let counts: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total: usize = counts.iter().product();
    if total != rows.len() {
        return Err(Error::parse(
            path.display().to_string(),
            format!(
                "grid is not a full tensor product: {} rows vs {} expected from axis counts {:?}",
                rows.len(),
                total,
                counts
            ),
        ));
    }
    if counts.iter().any(|&c| c < 2) {
        return Err(Error::parse(
            path.display().to_string(),
            "each axis needs at least 2 distinct coordinates",
        ));
    }

    // Lexicographic value table (last axis fastest), filled by locating each
    // row's multi-index.
    let mut values: Vec<Option<Vec<f64>>> = vec![None; total];
    for (rownum, row) in rows.iter().enumerate() {
        let mut flat = 0usize;
        for ax in 0..d {
            let v = row[ax];
            let k = axes[ax]
                .iter()
                .position(|&u| u == v)
                .expect("coordinate collected from this row");
            flat = flat * counts[ax] + k;
        }
        if values[flat].is_some() {
            return Err(Error::parse(
                path.display().to_string(),
                format!("row {} duplicates a grid point", rownum + 1),
            ));
        }
        values[flat] = Some(row[d..].to_vec());
    }
    let values: Vec<Vec<f64>> = values.into_iter().map(|v| v.expect("counted")).collect();

    // Claimed Lipschitz constant: per-axis max difference quotient over grid
    // edges, combined as the Euclidean norm of the per-axis bounds. Valid for
    // the multilinear interpolant on the hull.
    let mut lip_sq = 0.0;
    let strides = lex_strides(&counts);
    for ax in 0..d {
        let mut lmax: f64 = 0.0;
        for flat in 0..total {
            let k = flat / strides[ax] % counts[ax];
            if k + 1 < counts[ax] {
                let gap = axes[ax][k + 1] - axes[ax][k];
                let a = &values[flat];
                let b = &values[flat + strides[ax]];
                let dv: f64 =
                    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
                lmax = lmax.max(dv / gap);
            }
        }
        lip_sq += lmax * lmax;
    }

    let lo: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    let hi: Vec<f64> = axes.iter().map(|a| *a.last().expect("nonempty")).collect();
    let support_box = BoundingBox::from_corners(
        &DVector::from_vec(lo.clone()),
        &DVector::from_vec(hi.clone()),
    )?;
    let label = format!("csv:{}", path.display());
    Ok(FunctionSpec::new(
        label,
        d,
        dim_out,
        lip_sq.sqrt(),
        support_box,
        Arc::new(move |x: &DVector<f64>| {
            for (ax, &xi) in x.iter().enumerate() {
                if xi < lo[ax] || xi > hi[ax] {
                    return DVector::zeros(dim_out);
                }
            }
            // Locate the cell and accumulate the 2^d corner blend.
            let mut cell = Vec::with_capacity(d);
            let mut frac = Vec::with_capacity(d);
            for (ax, &xi) in x.iter().enumerate() {
                let nodes = &axes[ax];
                let mut k = match nodes.binary_search_by(|u| u.partial_cmp(&xi).expect("finite")) {
                    Ok(k) => k,
                    Err(k) => k.saturating_sub(1),
                };
                if k + 1 >= nodes.len() {
                    k = nodes.len() - 2;
                }
                cell.push(k);
                frac.push((xi - nodes[k]) / (nodes[k + 1] - nodes[k]));
            }
            let mut out = DVector::zeros(dim_out);
            for corner in 0..(1usize << d) {
                let mut w = 1.0;
                let mut flat = 0usize;
                for ax in 0..d {
                    let up = corner >> ax & 1 == 1;
                    w *= if up { frac[ax] } else { 1.0 - frac[ax] };
                    flat += (cell[ax] + up as usize) * strides[ax];
                }
                if w != 0.0 {
                    let v = &values[flat];
                    for (o, &vi) in out.iter_mut().zip(v) {
                        *o += w * vi;
                    }
                }
            }
            out
        }),
    ))
}

fn lex_strides(counts: &[usize]) -> Vec<usize> {
    let d = counts.len();
    let mut strides = vec![1usize; d];
    for ax in (0..d.saturating_sub(1)).rev() {
        strides[ax] = strides[ax + 1] * counts[ax + 1];
    }
    strides
}
