//! Cube masks: networks equal to 1 on [-n, n]^d, equal to an exact
//! floating-point zero outside [-(n+delta), n+delta]^d, and multilinear in
//! between.
//!
//! The univariate factor is realized as
//!
//! ```text
//! m(x) = relu(1 - r*relu(x - n) - r*relu(-x - n)),    r ~ 1/delta
//! ```
//!
//! which is exact at both ends of the ramp:
//!
//! * plateau: for |x| <= n both inner relus return +0.0 (the branchy relu
//!   never produces -0.0), the accumulator stays a zero, and adding the
//!   bias 1.0 gives exactly 1.0;
//! * exterior: rounding is monotone, so x - n >= delta implies
//!   fl(x - n) >= delta and fl(r * fl(x - n)) >= fl(r * delta), and
//!   [`safe_recip`] picks r with fl(r * delta) >= 1; the outer relu
//!   argument is then <= 0 and the output is +0.0.
//!
//! A naive 1/delta fails the second point when the quotient rounds down;
//! a formulation that subtracts two shifted relus fails the first (for
//! n = 1, delta = 0.25, |x| = 0.1 it returns 0.99999999999999956). The
//! multivariate mask multiplies the d factors with log2(d) pooling layers
//! and broadcasts the product, so both exactness properties survive: the
//! product of exact 1.0s is 1.0 and any exact zero factor annihilates.

use crate::error::{Error, Result};
use crate::linalg::{SparseMatrix, Weights};
use crate::network::{Layer, Network};
use nalgebra::{DMatrix, DVector};

/// Reciprocal biased upward until fl(delta * r) >= 1. At most a few ulps
/// above 1/delta. Requires a positive normal delta.
pub fn safe_recip(delta: f64) -> f64 {
    debug_assert!(delta > 0.0 && delta.is_finite());
    let mut r = 1.0 / delta;
    while delta * r < 1.0 {
        r = r.next_up();
    }
    r
}

/// Smallest representable value >= the real sum n + delta (one TwoSum).
/// Points x with ‖x‖_∞ at or beyond this are certified zeros of the mask.
pub fn outer_halfwidth(n: f64, delta: f64) -> f64 {
    let s = n + delta;
    let bb = s - n;
    let err = (n - (s - bb)) + (delta - bb);
    if err > 0.0 {
        s.next_up()
    } else {
        s
    }
}

/// Mask parameters: inner half-width n, transition width delta, and the
/// output dimension the scalar mask is broadcast to.
#[derive(Clone, Copy, Debug)]
pub struct MaskSpec {
    pub d: usize,
    pub n: f64,
    pub delta: f64,
    pub out_dim: usize,
}

impl MaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.d.is_power_of_two() {
            return Err(Error::NotPowerOfTwo {
                what: "mask dimension",
                got: self.d,
            });
        }
        if self.out_dim == 0 {
            return Err(Error::invalid("mask output dimension must be positive"));
        }
        check_band(self.n, self.delta)
    }
}

fn check_band(n: f64, delta: f64) -> Result<()> {
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::invalid(format!("inner half-width n = {n} must be positive")));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("transition width delta = {delta} must be positive")));
    }
    let r = safe_recip(delta);
    if !r.is_finite() {
        return Err(Error::invalid(format!("delta = {delta} too small, 1/delta overflows")));
    }
    Ok(())
}

/// Transition width delta with 2^d ((n+delta)^d - n^d) = epsilon.
///
/// The closed form (2^{-d} eps + n^d)^{1/d} - n cancels catastrophically
/// for small eps, so the expanded polynomial
/// sum_k C(d,k) n^{d-k} delta^k = 2^{-d} eps is solved by Newton instead,
/// starting from the linearization t/(d n^{d-1}) which sits above the root;
/// the iteration is then monotone decreasing.
pub fn delta_for_epsilon(d: usize, n: f64, epsilon: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::invalid(format!("inner half-width n = {n} must be positive")));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(format!("epsilon = {epsilon} must be positive")));
    }
    let t = epsilon / 2f64.powi(d as i32);
    if d == 1 {
        return Ok(t);
    }
    // coefficients of (n+x)^d - n^d, low order first, x^1 .. x^d
    let coeffs = band_poly_coeffs(d, n);
    let eval = |x: f64| -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for (k, &c) in coeffs.iter().enumerate().rev() {
            let pow = k + 1;
            p = p * x + c;
            dp = dp * x + c * pow as f64;
        }
        (p * x - t, dp)
    };
    // Linearization sits above the root (the polynomial is convex), but is
    // far above it when the top-degree term dominates; there the closed
    // form is accurate, so take it (padded to stay above the root) when it
    // is clear of cancellation.
    let linear = t / (d as f64 * n.powi(d as i32 - 1));
    let closed = (t + n.powi(d as i32)).powf(1.0 / d as f64) - n;
    let mut x = if closed > 1e-9 * n {
        linear.min(1.25 * closed)
    } else {
        linear
    };
    for _ in 0..200 {
        let (p, dp) = eval(x);
        if p <= 0.0 || dp <= 0.0 {
            break;
        }
        let next = x - p / dp;
        if !(next < x) || next <= 0.0 {
            break;
        }
        x = next;
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Degenerate(format!(
            "delta solve failed for d={d}, n={n}, epsilon={epsilon}"
        )));
    }
    Ok(x)
}

/// Lebesgue measure of [-(n+delta), n+delta]^d \ [-n, n]^d, evaluated via
/// the expanded band polynomial (accurate for small delta).
pub fn annulus_measure(d: usize, n: f64, delta: f64) -> f64 {
    let coeffs = band_poly_coeffs(d, n);
    let mut p = 0.0;
    for &c in coeffs.iter().rev() {
        p = p * delta + c;
    }
    p * delta * 2f64.powi(d as i32)
}

/// Coefficients c_k = C(d,k) n^{d-k} of (n+x)^d - n^d for k = 1..d.
fn band_poly_coeffs(d: usize, n: f64) -> Vec<f64> {
    let mut coeffs = Vec::with_capacity(d);
    let mut binom = 1.0f64;
    for k in 1..=d {
        binom = binom * (d - k + 1) as f64 / k as f64;
        coeffs.push(binom * n.powi((d - k) as i32));
    }
    coeffs
}

/// Rows of the first mask stage: for each coordinate i the pair
/// (x_i - n, -x_i - n), interleaved. 2d rows over d columns.
pub(crate) fn stage1_rows(d: usize, n: f64) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
    let mut trips = Vec::with_capacity(2 * d);
    let mut bias = Vec::with_capacity(2 * d);
    for i in 0..d {
        trips.push((2 * i, i, 1.0));
        trips.push((2 * i + 1, i, -1.0));
        bias.push(-n);
        bias.push(-n);
    }
    (trips, bias)
}

/// Rows of the second mask stage: factor i is 1 - r*y_{2i} - r*y_{2i+1}.
/// d rows over 2d columns.
pub(crate) fn stage2_rows(d: usize, r: f64) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
    let mut trips = Vec::with_capacity(2 * d);
    let mut bias = Vec::with_capacity(d);
    for i in 0..d {
        trips.push((i, 2 * i, -r));
        trips.push((i, 2 * i + 1, -r));
        bias.push(1.0);
    }
    (trips, bias)
}

/// Scalar mask on the line: 1 on [-n, n], 0 outside [-(n+delta), n+delta].
/// Width 2, depth 2.
pub fn build_univariate_mask(n: f64, delta: f64) -> Result<Network> {
    check_band(n, delta)?;
    let r = safe_recip(delta);
    let layers = vec![
        Layer::affine(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![-n, -n]),
        ),
        Layer::relu(2),
        Layer::affine(
            DMatrix::from_row_slice(1, 2, &[-r, -r]),
            DVector::from_vec(vec![1.0]),
        ),
        Layer::relu(1),
    ];
    Network::new(1, layers, DVector::zeros(1))
}

/// Cube mask on R^d broadcast to out_dim coordinates: the product of the d
/// univariate factors via log2(d) pooling layers. Depth 2; width
/// max(2d, out_dim), within the bound max{d(d-1)+2, out_dim}.
pub fn build_cube_mask(spec: &MaskSpec) -> Result<Network> {
    spec.validate()?;
    let MaskSpec { d, n, delta, out_dim } = *spec;
    let r = safe_recip(delta);
    let mut layers = Vec::new();
    let (t1, b1) = stage1_rows(d, n);
    layers.push(Layer::Affine {
        weights: Weights::Sparse(SparseMatrix::from_triplets(2 * d, d, &t1)?),
        bias: DVector::from_vec(b1),
    });
    layers.push(Layer::relu(2 * d));
    let (t2, b2) = stage2_rows(d, r);
    layers.push(Layer::Affine {
        weights: Weights::Sparse(SparseMatrix::from_triplets(d, 2 * d, &t2)?),
        bias: DVector::from_vec(b2),
    });
    layers.push(Layer::relu(d));
    for _ in 0..d.trailing_zeros() {
        layers.push(Layer::Pool);
    }
    layers.push(Layer::affine(
        DMatrix::from_element(out_dim, 1, 1.0),
        DVector::zeros(out_dim),
    ));
    Network::new(d, layers, DVector::zeros(out_dim))
}
