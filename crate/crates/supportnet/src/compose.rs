//! Combinators for stacking, summing, and re-wiring networks.
//!
//! The parallel composition keeps both operands exact in floating point:
//! affine blocks merge block-diagonally, activation layers line up
//! coordinatewise, and whenever one operand idles through the other's
//! activation its channels ride along as relu pairs, using the identity
//! x = relu(x) - relu(-x) which holds bit-exactly for doubles. Pooling
//! layers synchronize through permutation affines, with idle channels
//! paired against the constant 1.

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::linalg::{SparseMatrix, Weights};
use crate::network::{Layer, Network};
use nalgebra::{DMatrix, DVector};

/// Pooling chain on width d = 2^k that reduces to the product of all
/// coordinates. k must equal log2(d).
pub fn iterated_pool(d: usize, k: usize) -> Result<Network> {
    if d < 2 || !d.is_power_of_two() {
        return Err(Error::NotPowerOfTwo {
            what: "iterated_pool width",
            got: d,
        });
    }
    if 1usize << k != d {
        return Err(Error::invalid(format!(
            "iterated_pool: k = {k} but log2({d}) = {}",
            d.trailing_zeros()
        )));
    }
    Network::new(d, vec![Layer::Pool; k], DVector::zeros(1))
}

/// Network computing f(A x + b). Depth and pool count are unchanged.
pub fn affine_precompose(net: &Network, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Network> {
    if a.nrows() != net.input_dim() {
        return Err(Error::invalid(format!(
            "affine_precompose: matrix has {} rows, network expects {}",
            a.nrows(),
            net.input_dim()
        )));
    }
    if b.len() != a.nrows() {
        return Err(Error::invalid("affine_precompose: bias length mismatch"));
    }
    if a.ncols() == 0 {
        return Err(Error::invalid("affine_precompose: empty matrix"));
    }
    let mut layers = Vec::with_capacity(net.layers().len() + 1);
    layers.push(Layer::affine(a.clone(), b.clone()));
    layers.extend(net.layers().iter().cloned());
    Network::new(a.ncols(), layers, net.final_bias().clone())
}

/// Network computing A f(x) + b.
///
/// A nonzero final offset c is first materialized by an identity affine so
/// that the result performs the same rounded addition the operand would,
/// followed by the new affine. No coefficients are folded together, which
/// keeps the operand's values intact.
pub fn append_affine(net: &Network, a: Weights, b: DVector<f64>) -> Result<Network> {
    if a.ncols() != net.output_dim() {
        return Err(Error::invalid(format!(
            "append_affine: matrix has {} columns, network outputs {}",
            a.ncols(),
            net.output_dim()
        )));
    }
    if a.nrows() != b.len() {
        return Err(Error::invalid("append_affine: bias length mismatch"));
    }
    let mut layers = net.layers().to_vec();
    let c = net.final_bias();
    if c.iter().any(|&v| v != 0.0) {
        layers.push(Layer::affine(
            DMatrix::identity(c.len(), c.len()),
            c.clone(),
        ));
    }
    let rows = a.nrows();
    layers.push(Layer::Affine { weights: a, bias: b });
    Network::new(net.input_dim(), layers, DVector::zeros(rows))
}

/// Network computing s * f(x), coordinatewise.
pub fn scale_output(net: &Network, s: f64) -> Result<Network> {
    if !s.is_finite() {
        return Err(Error::invalid("scale_output: non-finite factor"));
    }
    let d = net.output_dim();
    let trips: Vec<(usize, usize, f64)> = (0..d).map(|i| (i, i, s)).collect();
    let a = SparseMatrix::from_triplets(d, d, &trips)?;
    append_affine(net, Weights::Sparse(a), DVector::zeros(d))
}

/// Replicates a scalar-output network across d_out coordinates.
pub fn broadcast_scalar_to_d(net: &Network, d_out: usize) -> Result<Network> {
    if net.output_dim() != 1 {
        return Err(Error::invalid(format!(
            "broadcast_scalar_to_d: network outputs {} coordinates, need 1",
            net.output_dim()
        )));
    }
    if d_out == 0 {
        return Err(Error::invalid("broadcast_scalar_to_d: zero output width"));
    }
    let a = DMatrix::from_element(d_out, 1, 1.0);
    append_affine(net, Weights::Dense(a), DVector::zeros(d_out))
}

/// Network computing f(x) + g(x). Each output coordinate is the single
/// rounded addition of the operands' outputs.
pub fn sum_networks(f: &Network, g: &Network) -> Result<Network> {
    if f.output_dim() != g.output_dim() {
        return Err(Error::invalid(format!(
            "sum_networks: output dims {} vs {}",
            f.output_dim(),
            g.output_dim()
        )));
    }
    let both = parallel_pair(f, g)?;
    let d = f.output_dim();
    let mut trips = Vec::with_capacity(2 * d);
    for i in 0..d {
        trips.push((i, i, 1.0));
        trips.push((i, d + i, 1.0));
    }
    let a = SparseMatrix::from_triplets(d, 2 * d, &trips)?;
    append_affine(&both, Weights::Sparse(a), DVector::zeros(d))
}

/// One block of a merged affine layer in the parallel composition.
enum Block<'a> {
    /// A real affine layer taken from one operand.
    Carry(&'a Weights, &'a DVector<f64>),
    /// Pass k channels through unchanged.
    Identity(usize),
    /// k channels -> 2k interleaved relu-pair channels (x, then -x).
    Encode(usize),
    /// 2k interleaved relu-pair channels -> k channels, p - q.
    Decode(usize),
}

impl Block<'_> {
    fn nrows(&self) -> usize {
        match self {
            Block::Carry(w, _) => w.nrows(),
            Block::Identity(k) | Block::Decode(k) => *k,
            Block::Encode(k) => 2 * k,
        }
    }

    fn ncols(&self) -> usize {
        match self {
            Block::Carry(w, _) => w.ncols(),
            Block::Identity(k) | Block::Encode(k) => *k,
            Block::Decode(k) => 2 * k,
        }
    }

    fn emit(&self, row0: usize, col0: usize, trips: &mut Vec<(usize, usize, f64)>, bias: &mut Vec<f64>) {
        match self {
            Block::Carry(w, b) => {
                match w {
                    Weights::Dense(m) => {
                        for r in 0..m.nrows() {
                            for c in 0..m.ncols() {
                                let v = m[(r, c)];
                                if v != 0.0 {
                                    trips.push((row0 + r, col0 + c, v));
                                }
                            }
                        }
                    }
                    Weights::Sparse(m) => {
                        for (r, c, v) in m.triplets() {
                            trips.push((row0 + r, col0 + c, v));
                        }
                    }
                }
                bias.extend(b.iter().copied());
            }
            Block::Identity(k) => {
                for t in 0..*k {
                    trips.push((row0 + t, col0 + t, 1.0));
                }
                bias.extend(std::iter::repeat(0.0).take(*k));
            }
            Block::Encode(k) => {
                for t in 0..*k {
                    trips.push((row0 + 2 * t, col0 + t, 1.0));
                    trips.push((row0 + 2 * t + 1, col0 + t, -1.0));
                }
                bias.extend(std::iter::repeat(0.0).take(2 * k));
            }
            Block::Decode(k) => {
                for t in 0..*k {
                    trips.push((row0 + t, col0 + 2 * t, 1.0));
                    trips.push((row0 + t, col0 + 2 * t + 1, -1.0));
                }
                bias.extend(std::iter::repeat(0.0).take(*k));
            }
        }
    }
}

/// Builder state for the merged layer list. Until the first affine-like
/// layer is emitted both operand blocks alias the shared input, afterwards
/// the running vector is the concatenation [left block | right block].
struct Zipper {
    layers: Vec<Layer>,
    split: bool,
    input_dim: usize,
}

impl Zipper {
    fn push_blocks(&mut self, left: Block, right: Block) {
        let gcol0 = if self.split { left.ncols() } else { 0 };
        let ncols = if self.split {
            left.ncols() + right.ncols()
        } else {
            self.input_dim
        };
        let nrows = left.nrows() + right.nrows();
        let mut trips = Vec::new();
        let mut bias = Vec::with_capacity(nrows);
        left.emit(0, 0, &mut trips, &mut bias);
        right.emit(left.nrows(), gcol0, &mut trips, &mut bias);
        let w = SparseMatrix::from_triplets(nrows, ncols, &trips).expect("block layout");
        self.layers.push(Layer::Affine {
            weights: Weights::Sparse(w),
            bias: DVector::from_vec(bias),
        });
        self.split = true;
    }

    fn ensure_split(&mut self, wf: usize, wg: usize) {
        if !self.split {
            self.push_blocks(Block::Identity(wf), Block::Identity(wg));
        }
    }

    /// Permutation affine arranging [u | v] so a single Pool computes
    /// (pool of u | v), with v's channels multiplied by the constant 1.
    /// When `pool_right` is set v is also split into pooled pairs.
    fn push_pool(&mut self, wf: usize, wg: usize, pool_left: bool, pool_right: bool) {
        let mut trips = Vec::new();
        let mut bias = Vec::new();
        let mut row = 0;
        let (mf, mg) = (wf / 2, wg / 2);
        // first factors
        if pool_left {
            for i in 0..mf {
                trips.push((row, i, 1.0));
                bias.push(0.0);
                row += 1;
            }
        } else {
            for i in 0..wf {
                trips.push((row, i, 1.0));
                bias.push(0.0);
                row += 1;
            }
        }
        let goff = if self.split { wf } else { 0 };
        if pool_right {
            for i in 0..mg {
                trips.push((row, goff + i, 1.0));
                bias.push(0.0);
                row += 1;
            }
        } else {
            for i in 0..wg {
                trips.push((row, goff + i, 1.0));
                bias.push(0.0);
                row += 1;
            }
        }
        // second factors; idle channels pair against 1
        if pool_left {
            for i in 0..mf {
                trips.push((row, mf + i, 1.0));
                bias.push(0.0);
                row += 1;
            }
        } else {
            for _ in 0..wf {
                bias.push(1.0);
                row += 1;
            }
        }
        if pool_right {
            for i in 0..mg {
                trips.push((row, goff + mg + i, 1.0));
                bias.push(0.0);
                row += 1;
            }
        } else {
            for _ in 0..wg {
                bias.push(1.0);
                row += 1;
            }
        }
        let ncols = if self.split { wf + wg } else { self.input_dim };
        let w = SparseMatrix::from_triplets(row, ncols, &trips).expect("pool arrangement");
        self.layers.push(Layer::Affine {
            weights: Weights::Sparse(w),
            bias: DVector::from_vec(bias),
        });
        self.split = true;
        self.layers.push(Layer::Pool);
    }
}

/// Exact parallel composition: h(x) = (f(x), g(x)), coordinates stacked.
///
/// Both operands must use only relu or identity activations; the carried
/// channels rely on relu identities, so analytic activations are rejected.
/// Depth is max(depth f, depth g) when the operands' activation layers can
/// run in lockstep, plus one per activation that has to run solo while the
/// other operand waits at a pooling layer or at its end.
pub fn parallel_pair(f: &Network, g: &Network) -> Result<Network> {
    if f.input_dim() != g.input_dim() {
        return Err(Error::invalid(format!(
            "parallel_pair: input dims {} vs {}",
            f.input_dim(),
            g.input_dim()
        )));
    }
    for net in [f, g] {
        for layer in net.layers() {
            if let Layer::Activation { kinds } = layer {
                if let Some(k) = kinds.iter().find(|k| !k.exactness_safe()) {
                    return Err(Error::AnalyticActivation(k.name()));
                }
            }
        }
    }

    let d = f.input_dim();
    let fl = f.layers();
    let gl = g.layers();
    let mut z = Zipper {
        layers: Vec::new(),
        split: false,
        input_dim: d,
    };
    let (mut i, mut j) = (0usize, 0usize);
    // raw operand widths; the physical block width doubles while encoded
    let (mut rf, mut rg) = (d, d);
    let (mut enc_f, mut enc_g) = (false, false);
    let phys = |raw: usize, enc: bool| if enc { 2 * raw } else { raw };

    loop {
        match (fl.get(i), gl.get(j)) {
            (None, None) => break,
            // Affine layers are free, consume them eagerly. A side parked at
            // an activation or pool is never encoded at this point unless it
            // parked at a pool, in which case identity passthrough is fine.
            (Some(Layer::Affine { weights, bias }), Some(Layer::Affine { weights: wg_, bias: bg_ })) => {
                z.push_blocks(Block::Carry(weights, bias), Block::Carry(wg_, bg_));
                rf = weights.nrows();
                rg = wg_.nrows();
                i += 1;
                j += 1;
            }
            (Some(Layer::Affine { weights, bias }), _) => {
                z.push_blocks(Block::Carry(weights, bias), Block::Identity(phys(rg, enc_g)));
                rf = weights.nrows();
                i += 1;
            }
            (_, Some(Layer::Affine { weights, bias })) => {
                z.push_blocks(Block::Identity(phys(rf, enc_f)), Block::Carry(weights, bias));
                rg = weights.nrows();
                j += 1;
            }
            // Activation layers run in lockstep when both sides have one.
            (Some(Layer::Activation { kinds: kf }), Some(Layer::Activation { kinds: kg })) => {
                z.ensure_split(rf, rg);
                let mut kinds = kf.clone();
                kinds.extend(kg.iter().cloned());
                z.layers.push(Layer::Activation { kinds });
                i += 1;
                j += 1;
            }
            // Solo activation: the idle side's channels may be negative, so
            // they ride as relu pairs until consumed again.
            (Some(Layer::Activation { kinds: kf }), _) => {
                if !enc_g {
                    z.push_blocks(Block::Identity(rf), Block::Encode(rg));
                    enc_g = true;
                }
                let mut kinds = kf.clone();
                kinds.extend(vec![ActivationKind::Relu; 2 * rg]);
                z.layers.push(Layer::Activation { kinds });
                i += 1;
            }
            (_, Some(Layer::Activation { kinds: kg })) => {
                if !enc_f {
                    z.push_blocks(Block::Encode(rf), Block::Identity(rg));
                    enc_f = true;
                }
                let mut kinds = vec![ActivationKind::Relu; 2 * rf];
                kinds.extend(kg.iter().cloned());
                z.layers.push(Layer::Activation { kinds });
                j += 1;
            }
            // Pools. A side must be decoded before its own pool.
            (Some(Layer::Pool), Some(Layer::Pool)) => {
                if enc_f || enc_g {
                    z.push_blocks(
                        if enc_f { Block::Decode(rf) } else { Block::Identity(rf) },
                        if enc_g { Block::Decode(rg) } else { Block::Identity(rg) },
                    );
                    enc_f = false;
                    enc_g = false;
                }
                z.push_pool(rf, rg, true, true);
                rf /= 2;
                rg /= 2;
                i += 1;
                j += 1;
            }
            (Some(Layer::Pool), None) => {
                if enc_f {
                    z.push_blocks(Block::Decode(rf), Block::Identity(phys(rg, enc_g)));
                    enc_f = false;
                }
                z.push_pool(rf, phys(rg, enc_g), true, false);
                rf /= 2;
                i += 1;
            }
            (None, Some(Layer::Pool)) => {
                if enc_g {
                    z.push_blocks(Block::Identity(phys(rf, enc_f)), Block::Decode(rg));
                    enc_g = false;
                }
                z.push_pool(phys(rf, enc_f), rg, false, true);
                rg /= 2;
                j += 1;
            }
        }
    }
    if enc_f || enc_g {
        z.push_blocks(
            if enc_f { Block::Decode(rf) } else { Block::Identity(rf) },
            if enc_g { Block::Decode(rg) } else { Block::Identity(rg) },
        );
    }
    z.ensure_split(rf, rg);
    let mut final_bias = Vec::with_capacity(rf + rg);
    final_bias.extend(f.final_bias().iter().copied());
    final_bias.extend(g.final_bias().iter().copied());
    Network::new(d, z.layers, DVector::from_vec(final_bias))
}
