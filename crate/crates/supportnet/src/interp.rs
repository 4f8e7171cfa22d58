//! Tent interpolation of Lipschitz targets on a box, realized as a relu
//! network whose tensor bumps are multiplied out by pooling layers.
//!
//! The univariate pieces reuse the hat pattern from the mask module:
//! T_j(x) = relu(1 − K_{j−1}·relu(x_j − x) − K_j·relu(x − x_j)) with
//! K_j = safe_recip(x_{j+1} − x_j), so T_j is exactly 1 at its own node and
//! exactly 0 at every other node. A product of one tent per axis (one
//! arrangement affine plus log₂(d) pools) gives the multilinear bump basis;
//! the readout weights are the target's node values, which the basis then
//! reproduces bit-for-bit at the nodes.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::linalg::{SparseMatrix, Weights};
use crate::mask::safe_recip;
use crate::network::{Layer, Network};
use crate::targets::{Evaluable, FunctionSpec};

/// Default cap on tensor-grid node counts N^d.
pub const NODE_BUDGET: u128 = 4_000_000;

/// Affine normalization onto [0,1]^d derived from Jung's theorem.
#[derive(Debug, Clone)]
pub struct JungMap {
    /// Diagonal of the (isotropic) scaling matrix.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Multiplier the map applies to Lipschitz constants:
    /// √(d+1)/(diam·d·√2) = 1/(2ρ). Infinite in the degenerate case.
    pub lip_factor: f64,
    /// Jung center x̄.
    pub center: DVector<f64>,
    /// Halfwidth ρ = d·diam/√(2d+2) of the box mapped onto [0,1]^d.
    pub rho: f64,
    /// diam(X) = 0: identity scale centered at x̄, lip_factor infinite.
    pub degenerate: bool,
}

impl JungMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }
}

fn jung_from_center_diam(center: DVector<f64>, diam: f64) -> JungMap {
    let d = center.len();
    if diam == 0.0 {
        let b = DVector::from_fn(d, |i, _| 0.5 - center[i]);
        return JungMap {
            a: DMatrix::identity(d, d),
            b,
            lip_factor: f64::INFINITY,
            center,
            rho: 0.0,
            degenerate: true,
        };
    }
    // X sits in B₂(x̄, diam·√d/√(2d+2)); enclose that ball by the cube of
    // halfwidth ρ = √d · radius so the advertised Lip factor 1/(2ρ) equals
    // √(d+1)/(diam·d·√2).
    let df = d as f64;
    let rho = df * diam / (2.0 * df + 2.0).sqrt();
    let scale = 1.0 / (2.0 * rho);
    let a = DMatrix::from_diagonal(&DVector::from_element(d, scale));
    let b = DVector::from_fn(d, |i, _| (rho - center[i]) * scale);
    JungMap { a, b, lip_factor: scale, center, rho, degenerate: false }
}

/// Normalization of a box-shaped X: Jung center is the box center, diam the
/// full diagonal.
pub fn jung_normalize(xbox: &BoundingBox) -> JungMap {
    let diam = 2.0 * xbox.halfwidths.norm();
    jung_from_center_diam(xbox.center.clone(), diam)
}

/// Normalization of a sampled X: center of the tight bounding box (within
/// diam/2 of every sample, hence inside the Jung ball's enclosing cube).
pub fn jung_normalize_points(points: &[DVector<f64>]) -> Result<JungMap> {
    if points.is_empty() {
        return Err(Error::invalid("jung_normalize_points on an empty set"));
    }
    let diam = crate::geometry::diameter(points)?;
    let d = points[0].len();
    let mut lo = points[0].clone();
    let mut hi = points[0].clone();
    for p in points {
        if p.len() != d {
            return Err(Error::invalid("points of mixed dimension"));
        }
        for ax in 0..d {
            lo[ax] = lo[ax].min(p[ax]);
            hi[ax] = hi[ax].max(p[ax]);
        }
    }
    let center = DVector::from_fn(d, |i, _| 0.5 * (lo[i] + hi[i]));
    Ok(jung_from_center_diam(center, diam))
}

/// Geometry chosen for one interpolant build.
#[derive(Debug, Clone)]
pub struct InterpolationPlan {
    /// Nodes per axis, N ≥ 2.
    pub grid_points_per_axis: usize,
    /// Normalized spacing h = 1/(N−1).
    pub spacing: f64,
    /// Affine map (A, b) sending the target's support box onto [0,1]^d.
    pub normalization_a: DMatrix<f64>,
    pub normalization_b: DVector<f64>,
    /// Lipschitz constant of the normalized target: claimed L times the
    /// widest box side.
    pub lip_normalized: f64,
    /// lip_normalized · √d · h.
    pub predicted_sup_error: f64,
    /// The Jung factor 1/(2ρ) for the same box, reported for
    /// comparison with the tight-box normalization actually used.
    pub jung_lip_factor: f64,
}

/// Per-axis node coordinates over the support box, bit-identical wherever
/// they appear in the network (first-layer biases and readout evaluation).
fn axis_nodes(support: &BoundingBox, n: usize) -> Result<Vec<Vec<f64>>> {
    let d = support.dim();
    let lo = support.lo();
    let steps = (n - 1) as f64;
    let mut nodes = Vec::with_capacity(d);
    for ax in 0..d {
        let side = 2.0 * support.halfwidths[ax];
        if side == 0.0 {
            return Err(Error::Degenerate(format!(
                "support box is flat along axis {ax}; tent grid needs positive width"
            )));
        }
        let mut axis = Vec::with_capacity(n);
        for j in 0..n {
            axis.push(lo[ax] + (j as f64 / steps) * side);
        }
        if axis.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Degenerate(format!(
                "grid nodes collapsed along axis {ax} (N={n} too fine for the box width)"
            )));
        }
        nodes.push(axis);
    }
    Ok(nodes)
}

/// Digit `ax` of node `idx` in the lexicographic order (last axis fastest).
/// Arrangement affines and readouts must walk nodes in this same order.
pub(crate) fn tent_digit(idx: usize, ax: usize, n: usize, d: usize) -> usize {
    let mut rest = idx;
    for _ in ax + 1..d {
        rest /= n;
    }
    rest % n
}

/// Raw pieces of the tent construction: the two sparse relu stages and the
/// node-value readout, before any arrangement/pooling choice. The pipeline
/// reuses these to fuse a support mask into the same network.
pub(crate) struct TentParts {
    pub n: usize,
    /// N^d total nodes.
    pub m: usize,
    /// Stage 1, 2dN rows: interleaved relu(x_i − node), relu(node − x_i).
    pub t1: Vec<(usize, usize, f64)>,
    pub b1: DVector<f64>,
    /// Stage 2, dN rows: the hats, bias 1.
    pub t2: Vec<(usize, usize, f64)>,
    pub b2: DVector<f64>,
    /// dim_out × N^d node values.
    pub readout: DMatrix<f64>,
}

pub(crate) fn tent_parts(spec: &FunctionSpec, n: usize) -> Result<TentParts> {
    let d = spec.dim_in;
    if d == 0 || !d.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { what: "input dimension", got: d });
    }
    if n < 2 {
        return Err(Error::invalid("tent grid needs at least 2 nodes per axis"));
    }
    let node_count = (n as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if node_count > NODE_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "tent grid has {node_count} nodes (cap {NODE_BUDGET})"
        )));
    }
    let m = node_count as usize;
    let nodes = axis_nodes(&spec.support_box, n)?;

    // Layer 1: u_{i,j} = relu(x_i − node), v_{i,j} = relu(node − x_i),
    // interleaved per axis block.
    let mut t1 = Vec::with_capacity(2 * d * n);
    let mut b1 = DVector::zeros(2 * d * n);
    for (ax, axis) in nodes.iter().enumerate() {
        for (j, &node) in axis.iter().enumerate() {
            let u = ax * 2 * n + 2 * j;
            t1.push((u, ax, 1.0));
            b1[u] = -node;
            t1.push((u + 1, ax, -1.0));
            b1[u + 1] = node;
        }
    }

    // Layer 2: hats. Row ax·N + j reads its own node's u and v.
    let mut t2 = Vec::with_capacity(2 * d * n);
    let b2 = DVector::from_element(d * n, 1.0);
    for (ax, axis) in nodes.iter().enumerate() {
        let slopes: Vec<f64> =
            axis.windows(2).map(|w| safe_recip(w[1] - w[0])).collect();
        for j in 0..n {
            let row = ax * n + j;
            if j > 0 {
                // Left shoulder: drop from 1 over [x_{j−1}, x_j].
                t2.push((row, ax * 2 * n + 2 * j + 1, -slopes[j - 1]));
            }
            if j + 1 < n {
                t2.push((row, ax * 2 * n + 2 * j, -slopes[j]));
            }
        }
    }

    // Readout: node values, evaluated at the exact node coordinates used in
    // the first layer.
    let dd = spec.dim_out;
    let mut readout = DMatrix::zeros(dd, m);
    let mut node = DVector::zeros(d);
    for idx in 0..m {
        for ax in 0..d {
            node[ax] = nodes[ax][tent_digit(idx, ax, n, d)];
        }
        let value = spec.eval(&node);
        if value.len() != dd || value.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!(
                "target evaluation failed at grid node {idx}"
            )));
        }
        readout.set_column(idx, &value);
    }

    Ok(TentParts { n, m, t1, b1, t2, b2, readout })
}

/// Interpolate `spec` on its support box with N nodes per axis.
///
/// Output network: sparse ±1 layer (2dN rows) feeding the hat layer (dN
/// rows), an arrangement affine repeating the tents factor-major (d·N^d
/// rows), log₂(d) pools, and a dense readout of node values. Depth 2.
pub fn build_tent_interpolant(spec: &FunctionSpec, n: usize) -> Result<Network> {
    let d = spec.dim_in;
    let parts = tent_parts(spec, n)?;
    let TentParts { n, m, t1, b1, t2, b2, readout, .. } = parts;

    let mut layers = vec![
        Layer::Affine {
            weights: Weights::Sparse(SparseMatrix::from_triplets(2 * d * n, d, &t1)?),
            bias: b1,
        },
        Layer::relu(2 * d * n),
        Layer::Affine {
            weights: Weights::Sparse(SparseMatrix::from_triplets(d * n, 2 * d * n, &t2)?),
            bias: b2,
        },
        Layer::relu(d * n),
    ];

    if d > 1 {
        // Factor-major arrangement: pooled entry m ends up as Π_t tent(t, j_t(m)).
        let mut sel = Vec::with_capacity(d * m);
        for t in 0..d {
            for idx in 0..m {
                sel.push((t * m + idx, t * n + tent_digit(idx, t, n, d), 1.0));
            }
        }
        layers.push(Layer::Affine {
            weights: Weights::Sparse(SparseMatrix::from_triplets(d * m, d * n, &sel)?),
            bias: DVector::zeros(d * m),
        });
        for _ in 0..d.trailing_zeros() {
            layers.push(Layer::Pool);
        }
    }

    let dd = readout.nrows();
    layers.push(Layer::Affine { weights: Weights::Dense(readout), bias: DVector::zeros(dd) });

    Network::new(d, layers, DVector::zeros(dd))
}

/// Pick N from the interpolation bound lip_normalized·√d·h ≤ target and
/// build the interpolant. `target_sup_error` may be infinite ("any"), giving
/// the coarsest plan N = 2. The constructed network is spot-checked against
/// the bound by seeded sampling.
pub fn approximate_lipschitz(
    spec: &FunctionSpec,
    target_sup_error: f64,
) -> Result<(Network, InterpolationPlan)> {
    if !(target_sup_error > 0.0) {
        return Err(Error::invalid("target sup error must be positive"));
    }
    if !(spec.lipschitz >= 0.0) {
        return Err(Error::invalid("claimed Lipschitz constant must be non-negative"));
    }
    let d = spec.dim_in;
    let df = d as f64;
    let max_side = 2.0 * spec.support_box.max_halfwidth();
    let lip_normalized = spec.lipschitz * max_side;

    let n = if lip_normalized == 0.0 || target_sup_error.is_infinite() {
        2
    } else {
        let ratio = lip_normalized * df.sqrt() / target_sup_error;
        1 + (ratio.ceil() as usize).max(1)
    };
    let node_count = (n as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if node_count > NODE_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "target sup error {target_sup_error} needs N={n} per axis ({node_count} nodes, cap {NODE_BUDGET})"
        )));
    }

    let net = build_tent_interpolant(spec, n)?;
    let h = 1.0 / (n - 1) as f64;
    let predicted = lip_normalized * df.sqrt() * h;

    // Plan normalization: the tight map support box -> [0,1]^d.
    let lo = spec.support_box.lo();
    let mut a = DMatrix::zeros(d, d);
    let mut b = DVector::zeros(d);
    for ax in 0..d {
        let side = 2.0 * spec.support_box.halfwidths[ax];
        if side == 0.0 {
            return Err(Error::Degenerate(format!("support box is flat along axis {ax}")));
        }
        a[(ax, ax)] = 1.0 / side;
        b[ax] = -lo[ax] / side;
    }
    let plan = InterpolationPlan {
        grid_points_per_axis: n,
        spacing: h,
        normalization_a: a,
        normalization_b: b,
        lip_normalized,
        predicted_sup_error: predicted,
        jung_lip_factor: jung_normalize(&spec.support_box).lip_factor,
    };

    // Spot check: sampled error must respect the bound (up to fp slack).
    if predicted.is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x1e9f);
        let mut worst = 0.0f64;
        for _ in 0..2000 {
            let x = spec.support_box.sample(&mut rng);
            worst = worst.max((spec.eval(&x) - net.eval(&x)).norm());
        }
        if worst > predicted * 1.0001 + 1e-12 {
            return Err(Error::Degenerate(format!(
                "sampled sup error {worst} exceeds predicted bound {predicted}; \
                 the claimed Lipschitz constant is likely too small"
            )));
        }
    }
    Ok((net, plan))
}
