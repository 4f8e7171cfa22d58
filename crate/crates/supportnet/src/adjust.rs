//! Support adjustment: multiply a relu network by the cube mask so the
//! result keeps f's values on the inner cube, vanishes bit-exactly outside
//! the certified outer cube, and spends at most epsilon of L1 error on the
//! transition annulus.
//!
//! The mask is not built standalone and glued on with a generic parallel
//! composition; that would carry f's channels as relu pairs while the mask
//! stages run, doubling them and overshooting the width budget on
//! shallow operands. Instead the mask rides inside f's own layer sequence:
//! its two affine stages merge into f's first two activation stages (with
//! identity channels padding whichever side has nothing to do), its pooling
//! tree runs level by level alongside f's pooling layers, and one trailing
//! pool pairs the mask scalar with every output channel.

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::linalg::{SparseMatrix, Weights};
use crate::mask::{delta_for_epsilon, outer_halfwidth, safe_recip, stage1_rows, stage2_rows};
use crate::network::{ArchitectureStats, Layer, Network};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// What `adjust_support` promises about its output, with the architecture
/// accounting needed to check the construction against the width and depth budgets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdjustmentCertificate {
    pub inner_n: f64,
    pub delta: f64,
    /// Certified cube halfwidth: the output is the bit-exact zero vector
    /// whenever ||x||_inf >= outer_halfwidth. Equals inner_n + delta up to
    /// one rounding.
    pub outer_halfwidth: f64,
    /// The epsilon budgeted for the L1 gap over the transition annulus.
    pub l1_budget: f64,
    pub sup_bound_used: f64,
    /// "caller" when sup_bound was supplied, "sampled" when it came from the
    /// boundary-shell grid estimate.
    pub sup_bound_source: String,
    pub stats_before: ArchitectureStats,
    pub stats_after: ArchitectureStats,
}

/// Width budget for the adjusted network: max{d(d-1)+2, D} + w_f.
pub fn width_bound(d: usize, out_dim: usize, width_before: usize) -> usize {
    (d * (d - 1) + 2).max(out_dim) + width_before
}

/// Depth budget for the adjusted network: 2 + 3d + depth_f.
pub fn depth_bound(d: usize, depth_before: usize) -> usize {
    2 + 3 * d + depth_before
}

/// Mask work still to be scheduled, in order.
enum MaskOp {
    /// Affine stage: triplets, bias, output width.
    Stage(Vec<(usize, usize, f64)>, Vec<f64>, usize),
    Relu,
    TreeLevel,
}

enum FSide<'a> {
    Carry(&'a Weights, &'a DVector<f64>),
    Identity,
}

/// Builder for the merged layer list. The running vector is the
/// concatenation [f block | mask block]; before the first affine both
/// blocks alias the network input.
struct Fuser {
    layers: Vec<Layer>,
    split: bool,
    input_dim: usize,
    fw: usize,
    mw: usize,
}

impl Fuser {
    fn affine(&mut self, f: FSide, m: Option<(&[(usize, usize, f64)], &[f64], usize)>) {
        let f_out = match &f {
            FSide::Carry(w, _) => w.nrows(),
            FSide::Identity => self.fw,
        };
        let m_out = match m {
            Some((_, _, out)) => out,
            None => self.mw,
        };
        let mcol0 = if self.split { self.fw } else { 0 };
        let ncols = if self.split {
            self.fw + self.mw
        } else {
            self.input_dim
        };
        let mut trips = Vec::new();
        let mut bias = Vec::with_capacity(f_out + m_out);
        match f {
            FSide::Carry(w, b) => {
                match w {
                    Weights::Dense(a) => {
                        for r in 0..a.nrows() {
                            for c in 0..a.ncols() {
                                let v = a[(r, c)];
                                if v != 0.0 {
                                    trips.push((r, c, v));
                                }
                            }
                        }
                    }
                    Weights::Sparse(a) => trips.extend(a.triplets()),
                }
                bias.extend(b.iter().copied());
            }
            FSide::Identity => {
                for i in 0..self.fw {
                    trips.push((i, i, 1.0));
                    bias.push(0.0);
                }
            }
        }
        match m {
            Some((mt, mb, _)) => {
                for &(r, c, v) in mt {
                    trips.push((f_out + r, mcol0 + c, v));
                }
                bias.extend_from_slice(mb);
            }
            None => {
                for i in 0..self.mw {
                    trips.push((f_out + i, mcol0 + i, 1.0));
                    bias.push(0.0);
                }
            }
        }
        let w = SparseMatrix::from_triplets(f_out + m_out, ncols, &trips).expect("fused affine");
        self.layers.push(Layer::Affine {
            weights: Weights::Sparse(w),
            bias: DVector::from_vec(bias),
        });
        self.split = true;
        self.fw = f_out;
        self.mw = m_out;
    }

    /// Merged activation; identity on whichever block has no work. Identity
    /// channels are what keeps the carried side exact at zero width cost.
    fn act(&mut self, f_kinds: Option<&[ActivationKind]>, mask_relu: bool) {
        let mut kinds = Vec::with_capacity(self.fw + self.mw);
        match f_kinds {
            Some(ks) => kinds.extend(ks.iter().cloned()),
            None => kinds.extend(std::iter::repeat(ActivationKind::Identity).take(self.fw)),
        }
        let mk = if mask_relu {
            ActivationKind::Relu
        } else {
            ActivationKind::Identity
        };
        kinds.extend(std::iter::repeat(mk).take(self.mw));
        self.layers.push(Layer::Activation { kinds });
    }

    fn push_arranged_pool(&mut self, trips: Vec<(usize, usize, f64)>, bias: Vec<f64>) {
        let w = SparseMatrix::from_triplets(bias.len(), self.fw + self.mw, &trips)
            .expect("pool arrangement");
        self.layers.push(Layer::Affine {
            weights: Weights::Sparse(w),
            bias: DVector::from_vec(bias),
        });
        self.layers.push(Layer::Pool);
    }

    /// f pools and a mask tree level runs in the same pooling layer. The
    /// arrangement keeps f's own pairing (i, fw/2 + i) bit-for-bit.
    fn pool_sync(&mut self) {
        let (q, mk) = (self.fw / 2, self.mw / 2);
        let mut trips = Vec::with_capacity(2 * (q + mk));
        let mut row = 0;
        for i in 0..q {
            trips.push((row, i, 1.0));
            row += 1;
        }
        for i in 0..mk {
            trips.push((row, self.fw + i, 1.0));
            row += 1;
        }
        for i in 0..q {
            trips.push((row, q + i, 1.0));
            row += 1;
        }
        for i in 0..mk {
            trips.push((row, self.fw + mk + i, 1.0));
            row += 1;
        }
        let bias = vec![0.0; row];
        self.push_arranged_pool(trips, bias);
        self.fw = q;
        self.mw = mk;
    }

    /// f pools; the finished mask channels ride multiplied by the constant 1.
    fn pool_ride(&mut self) {
        let q = self.fw / 2;
        let mut trips = Vec::new();
        let mut bias = Vec::new();
        for i in 0..q {
            trips.push((bias.len(), i, 1.0));
            bias.push(0.0);
        }
        for i in 0..self.mw {
            trips.push((bias.len(), self.fw + i, 1.0));
            bias.push(0.0);
        }
        for i in 0..q {
            trips.push((bias.len(), q + i, 1.0));
            bias.push(0.0);
        }
        for _ in 0..self.mw {
            bias.push(1.0);
        }
        self.push_arranged_pool(trips, bias);
        self.fw = q;
    }

    /// Mask tree level after f has ended; f's outputs ride against 1.
    fn pool_tail(&mut self) {
        let mk = self.mw / 2;
        let mut trips = Vec::new();
        let mut bias = Vec::new();
        for i in 0..self.fw {
            trips.push((bias.len(), i, 1.0));
            bias.push(0.0);
        }
        for i in 0..mk {
            trips.push((bias.len(), self.fw + i, 1.0));
            bias.push(0.0);
        }
        for _ in 0..self.fw {
            bias.push(1.0);
        }
        for i in 0..mk {
            trips.push((bias.len(), self.fw + mk + i, 1.0));
            bias.push(0.0);
        }
        self.push_arranged_pool(trips, bias);
        self.mw = mk;
    }

    /// Final pairing: each output channel against a copy of the mask
    /// scalar, with f's final bias folded into the arrangement so the
    /// single rounded addition matches f's own evaluation.
    fn finish(&mut self, fb: &DVector<f64>) {
        let dd = self.fw;
        let mut trips = Vec::with_capacity(2 * dd);
        let mut bias = Vec::with_capacity(2 * dd);
        for i in 0..dd {
            trips.push((i, self.fw, 1.0));
            bias.push(0.0);
        }
        for i in 0..dd {
            trips.push((dd + i, i, 1.0));
            bias.push(fb[i]);
        }
        self.push_arranged_pool(trips, bias);
        self.fw = dd;
        self.mw = 0;
    }
}

/// Clamp f's support to a cube. The result g equals f on [-n, n]^d (the
/// mask plateau is the exact constant 1.0), is the bit-exact zero vector
/// outside the certified outer cube, and differs from f in L1 over the
/// annulus by at most epsilon, with delta chosen so that the annulus
/// measure times the sup bound stays under budget.
///
/// When `sup_bound` is None it is estimated by sampling ||f|| on a grid
/// over the boundary shell and multiplying by 1.25; the certificate records
/// which path was taken.
pub fn adjust_support(
    f: &Network,
    n: f64,
    epsilon: f64,
    sup_bound: Option<f64>,
) -> Result<(Network, AdjustmentCertificate)> {
    if !f.exactness_safe() {
        return Err(Error::AnalyticActivation(
            f.first_analytic_kind().unwrap_or_else(|| "non-relu".into()),
        ));
    }
    let d = f.input_dim();
    let dd = f.output_dim();
    if !d.is_power_of_two() {
        return Err(Error::NotPowerOfTwo {
            what: "adjust_support input dimension",
            got: d,
        });
    }
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::invalid("adjust_support: n must be positive and finite"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(
            "adjust_support: epsilon must be positive and finite",
        ));
    }
    if let Some(b) = sup_bound {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::invalid(
                "adjust_support: sup_bound must be positive and finite",
            ));
        }
    }
    // The mask's two stages must finish before any pooling layer of f;
    // riding unfinished stage channels through a pool would pair each of
    // them with a constant slot and blow the width budget.
    let mut acts = 0;
    for layer in f.layers() {
        match layer {
            Layer::Activation { .. } => acts += 1,
            Layer::Pool if acts < 2 => {
                return Err(Error::invalid(
                    "adjust_support: f pools before its second activation layer; \
                     the mask stages cannot ride through an early pool",
                ));
            }
            _ => {}
        }
        if acts >= 2 {
            break;
        }
    }

    let (b_eff, source) = match sup_bound {
        Some(b) => (b, "caller"),
        None => (estimate_annulus_sup(f, n, epsilon)?, "sampled"),
    };
    let delta = delta_for_epsilon(d, n, epsilon / b_eff)?;
    let outer = outer_halfwidth(n, delta);
    let r = safe_recip(delta);

    let (t1, b1) = stage1_rows(d, n);
    let (t2, b2) = stage2_rows(d, r);
    let mut ops = vec![
        MaskOp::Stage(t1, b1, 2 * d),
        MaskOp::Relu,
        MaskOp::Stage(t2, b2, d),
        MaskOp::Relu,
    ];
    for _ in 0..d.trailing_zeros() {
        ops.push(MaskOp::TreeLevel);
    }

    let mut fu = Fuser {
        layers: Vec::new(),
        split: false,
        input_dim: d,
        fw: d,
        mw: 0,
    };
    let mut cursor = 0;
    for layer in f.layers() {
        match layer {
            Layer::Affine { weights, bias } => {
                let m = match ops.get(cursor) {
                    Some(MaskOp::Stage(t, b, out)) => {
                        cursor += 1;
                        Some((t.as_slice(), b.as_slice(), *out))
                    }
                    _ => None,
                };
                fu.affine(FSide::Carry(weights, bias), m);
            }
            Layer::Activation { kinds } => {
                // a mask affine stage that found no f affine to merge with
                // fires on its own, identity-carrying f's channels
                if let Some(MaskOp::Stage(t, b, out)) = ops.get(cursor) {
                    let m = Some((t.as_slice(), b.as_slice(), *out));
                    cursor += 1;
                    fu.affine(FSide::Identity, m);
                }
                let mask_relu = matches!(ops.get(cursor), Some(MaskOp::Relu));
                if mask_relu {
                    cursor += 1;
                }
                fu.act(Some(kinds), mask_relu);
            }
            Layer::Pool => match ops.get(cursor) {
                Some(MaskOp::TreeLevel) => {
                    cursor += 1;
                    fu.pool_sync();
                }
                None => fu.pool_ride(),
                Some(_) => unreachable!("early pool rejected above"),
            },
        }
    }
    while cursor < ops.len() {
        match &ops[cursor] {
            MaskOp::Stage(t, b, out) => {
                fu.affine(FSide::Identity, Some((t.as_slice(), b.as_slice(), *out)))
            }
            MaskOp::Relu => fu.act(None, true),
            MaskOp::TreeLevel => fu.pool_tail(),
        }
        cursor += 1;
    }
    fu.finish(f.final_bias());

    let g = Network::new(d, fu.layers, DVector::zeros(dd))?;
    let stats_before = f.stats();
    let stats_after = g.stats();
    let wb = width_bound(d, dd, stats_before.width);
    let db = depth_bound(d, stats_before.depth);
    if stats_after.width > wb || stats_after.depth > db {
        return Err(Error::invalid(format!(
            "adjust_support: fused network has width {} depth {} against the \
             budget width {} depth {}; f is too narrow relative to its \
             output count for the mask to ride along",
            stats_after.width, stats_after.depth, wb, db
        )));
    }
    let cert = AdjustmentCertificate {
        inner_n: n,
        delta,
        outer_halfwidth: outer,
        l1_budget: epsilon,
        sup_bound_used: b_eff,
        sup_bound_source: source.into(),
        stats_before,
        stats_after,
    };
    Ok((g, cert))
}

/// Sup of ||f|| over the boundary shell, sampled per face. The shell is
/// taken for the budget-1 delta; the final delta computed from the returned
/// bound can only be smaller, so the sampled region contains the actual
/// annulus.
pub(crate) fn estimate_annulus_sup(f: &Network, n: f64, epsilon: f64) -> Result<f64> {
    let d = f.input_dim();
    let delta1 = delta_for_epsilon(d, n, epsilon)?;
    let outer = outer_halfwidth(n, delta1);
    let levels = 9usize;
    let cross = if d == 1 {
        1
    } else {
        let budget = 200_000usize / (2 * d * levels);
        let p = (budget as f64)
            .powf(1.0 / (d - 1) as f64)
            .floor() as usize;
        p.clamp(3, 33) | 1 // odd so cross sections include 0
    };
    let mut best = 0.0f64;
    let mut x = DVector::zeros(d);
    for ax in 0..d {
        for side in [-1.0f64, 1.0] {
            for i in 0..levels {
                let t = n + (i as f64 / (levels - 1) as f64) * (outer - n);
                let mut idx = vec![0usize; d - 1];
                loop {
                    let mut k = 0;
                    for j in 0..d {
                        if j == ax {
                            x[j] = side * t;
                        } else {
                            x[j] = if cross == 1 {
                                0.0
                            } else {
                                -outer + 2.0 * outer * (idx[k] as f64 / (cross - 1) as f64)
                            };
                            k += 1;
                        }
                    }
                    best = best.max(f.evaluate(&x)?.norm());
                    let mut c = 0;
                    while c < idx.len() {
                        idx[c] += 1;
                        if idx[c] < cross {
                            break;
                        }
                        idx[c] = 0;
                        c += 1;
                    }
                    if c == idx.len() {
                        break;
                    }
                }
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::Degenerate(
            "f is not finite near the support boundary".into(),
        ));
    }
    Ok((1.25 * best).max(1.0))
}
