//! Geometric instrumentation: boxes, cubic annuli, support detection,
//! packing capacity, and empirical Lipschitz constants.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::targets::Evaluable;

/// Axis-aligned box given by center and per-axis halfwidths.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    pub center: DVector<f64>,
    pub halfwidths: DVector<f64>,
}

impl BoundingBox {
    pub fn new(center: DVector<f64>, halfwidths: DVector<f64>) -> Result<BoundingBox> {
        if center.len() != halfwidths.len() {
            return Err(Error::invalid(format!(
                "box center has dim {} but halfwidths dim {}",
                center.len(),
                halfwidths.len()
            )));
        }
        if center.len() == 0 {
            return Err(Error::invalid("box dimension must be positive"));
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("box center must be finite"));
        }
        if !halfwidths.iter().all(|h| h.is_finite() && *h >= 0.0) {
            return Err(Error::invalid("box halfwidths must be finite and non-negative"));
        }
        Ok(BoundingBox { center, halfwidths })
    }

    /// `[-h, h]^d`.
    pub fn symmetric(d: usize, h: f64) -> BoundingBox {
        assert!(d > 0 && h.is_finite() && h >= 0.0);
        BoundingBox { center: DVector::zeros(d), halfwidths: DVector::from_element(d, h) }
    }

    pub fn from_corners(lo: &DVector<f64>, hi: &DVector<f64>) -> Result<BoundingBox> {
        if lo.len() != hi.len() {
            return Err(Error::invalid("corner dimensions differ"));
        }
        if lo.iter().zip(hi.iter()).any(|(a, b)| !(a <= b)) {
            return Err(Error::invalid("box corners must satisfy lo <= hi"));
        }
        // (lo+hi)/2 and (hi-lo)/2 round independently, so widen the halfwidth
        // one ulp at a time until both corners pass the same test `contains`
        // computes.
        let center = DVector::from_fn(lo.len(), |i, _| 0.5 * (lo[i] + hi[i]));
        let halfwidths = DVector::from_fn(lo.len(), |i, _| {
            let mut h: f64 = 0.5 * (hi[i] - lo[i]);
            while (lo[i] - center[i]).abs() > h || (hi[i] - center[i]).abs() > h {
                h = h.next_up();
            }
            h
        });
        BoundingBox::new(center, halfwidths)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn lo(&self) -> DVector<f64> {
        &self.center - &self.halfwidths
    }

    pub fn hi(&self) -> DVector<f64> {
        &self.center + &self.halfwidths
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.center.iter())
                .zip(self.halfwidths.iter())
                .all(|((&xi, &c), &h)| (xi - c).abs() <= h)
    }

    pub fn volume(&self) -> f64 {
        self.halfwidths.iter().map(|h| 2.0 * h).product()
    }

    pub fn max_halfwidth(&self) -> f64 {
        self.halfwidths.iter().copied().fold(0.0, f64::max)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            let h = self.halfwidths[i];
            if h == 0.0 {
                self.center[i]
            } else {
                self.center[i] + rng.gen_range(-h..=h)
            }
        })
    }
}

/// Index of the cubic annulus K_n = { x : n < ‖x‖_∞ ≤ n+1 } containing x,
/// with the closed unit cube assigned index 0.
pub fn annulus_index(x: &DVector<f64>) -> usize {
    let norm = x.amax();
    debug_assert!(norm.is_finite());
    if norm <= 1.0 {
        0
    } else {
        norm.ceil() as usize - 1
    }
}

/// Result of a grid scan for the essential support of a target.
#[derive(Debug, Clone)]
pub struct SupportScan {
    /// Smallest n ≥ 1 with every sample above `tol` inside [−n, n]^d.
    pub n_f: usize,
    /// Minimal axis-aligned box containing all samples above `tol`.
    pub tight_box: Option<BoundingBox>,
    /// No sample exceeded `tol`; `n_f` defaults to 1.
    pub effectively_zero: bool,
    /// Largest |coordinate| over samples above `tol` (0 when none).
    pub hot_max_abs: f64,
}

/// Scan a tensor grid (endpoints included) over `scan_box` for samples with
/// ‖f(x)‖₂ > tol.
pub fn estimate_support_box(
    f: &dyn Evaluable,
    scan_box: &BoundingBox,
    grid_per_axis: usize,
    tol: f64,
) -> Result<SupportScan> {
    let d = scan_box.dim();
    if f.dim_in() != d {
        return Err(Error::invalid(format!(
            "target takes {} inputs but scan box has dim {d}",
            f.dim_in()
        )));
    }
    if grid_per_axis < 2 {
        return Err(Error::invalid("grid_per_axis must be at least 2"));
    }
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::invalid("tol must be finite and non-negative"));
    }
    let total = (grid_per_axis as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if total > 20_000_000 {
        return Err(Error::BudgetExceeded(format!(
            "support scan would evaluate {total} grid points (cap 20e6)"
        )));
    }

    let lo = scan_box.lo();
    let hi = scan_box.hi();
    let mut hot_lo = DVector::from_element(d, f64::INFINITY);
    let mut hot_hi = DVector::from_element(d, f64::NEG_INFINITY);
    let mut hot_max_abs = 0.0f64;
    let mut any_hot = false;

    let mut idx = vec![0usize; d];
    let mut x = DVector::zeros(d);
    let steps = (grid_per_axis - 1) as f64;
    loop {
        for ax in 0..d {
            let t = idx[ax] as f64 / steps;
            x[ax] = lo[ax] + t * (hi[ax] - lo[ax]);
        }
        if f.eval(&x).norm() > tol {
            any_hot = true;
            for ax in 0..d {
                hot_lo[ax] = hot_lo[ax].min(x[ax]);
                hot_hi[ax] = hot_hi[ax].max(x[ax]);
                hot_max_abs = hot_max_abs.max(x[ax].abs());
            }
        }
        // Odometer increment.
        let mut ax = d;
        loop {
            if ax == 0 {
                break;
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < grid_per_axis {
                break;
            }
            idx[ax] = 0;
            if ax == 0 {
                return Ok(finish_scan(any_hot, hot_lo, hot_hi, hot_max_abs));
            }
        }
    }
}

fn finish_scan(
    any_hot: bool,
    hot_lo: DVector<f64>,
    hot_hi: DVector<f64>,
    hot_max_abs: f64,
) -> SupportScan {
    if !any_hot {
        return SupportScan { n_f: 1, tight_box: None, effectively_zero: true, hot_max_abs: 0.0 };
    }
    let n_f = (hot_max_abs.ceil() as usize).max(1);
    let tight_box = BoundingBox::from_corners(&hot_lo, &hot_hi).expect("hot_lo <= hot_hi");
    SupportScan { n_f, tight_box: Some(tight_box), effectively_zero: false, hot_max_abs }
}

/// Greedy lower bound on the metric capacity of the sampled set: the largest
/// number of points admitting pairwise distance > 2r/5 while lying within
/// r − r/5 of some center x₀ ∈ X, maximized over centers and a radius grid.
///
/// Deterministic: centers are the first `trials` points, radii are scaled
/// center-to-point distances. Appending points never lowers the result.
/// Cost is O(trials · m² · picked) distance evaluations.
pub fn metric_capacity(points: &[DVector<f64>], trials: usize) -> usize {
    if points.is_empty() {
        return 0;
    }
    let centers = points.len().min(trials.max(1));
    let mut best = 1usize; // a single ball around any point always packs
    for c in 0..centers {
        let x0 = &points[c];
        let dists: Vec<f64> = points.iter().map(|p| (p - x0).norm()).collect();
        let mut radii: Vec<f64> = dists
            .iter()
            .filter(|&&t| t > 0.0)
            // Scale so the generating point sits just inside the admission
            // shell r − r/5 even after rounding.
            .map(|&t| t * 1.25 * (1.0 + 1e-12))
            .collect();
        radii.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        radii.dedup();
        for &r in &radii {
            let admit = r - r / 5.0;
            let sep = 2.0 * r / 5.0;
            let mut picked: Vec<usize> = Vec::new();
            for (i, p) in points.iter().enumerate() {
                if dists[i] <= admit
                    && picked.iter().all(|&j| (p - &points[j]).norm() > sep)
                {
                    picked.push(i);
                }
            }
            best = best.max(picked.len());
        }
    }
    best
}

/// Max sampled difference quotient ‖f(x₁)−f(x₂)‖/‖x₁−x₂‖: a lower bound on
/// the Lipschitz constant over `domain`. Mixes independent pairs with axis
/// and random-direction perturbations at several scales.
pub fn estimate_lipschitz(
    f: &dyn Evaluable,
    domain: &BoundingBox,
    pairs: usize,
    seed: u64,
) -> f64 {
    let d = domain.dim();
    debug_assert_eq!(f.dim_in(), d);
    let scale = domain.max_halfwidth();
    if scale == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Smallest step keeps evaluation noise (~eps·‖f‖/h) well below 1e-9.
    let hs = [1e-2 * scale, 1e-3 * scale, 1e-5 * scale];
    let clamp = |x: &mut DVector<f64>| {
        for ax in 0..d {
            let lo = domain.center[ax] - domain.halfwidths[ax];
            let hi = domain.center[ax] + domain.halfwidths[ax];
            x[ax] = x[ax].clamp(lo, hi);
        }
    };
    let mut best = 0.0f64;
    for i in 0..pairs {
        let a = domain.sample(&mut rng);
        let mut b = match i % 3 {
            0 => domain.sample(&mut rng),
            1 => {
                let h = hs[i / 3 % hs.len()];
                let ax = rng.gen_range(0..d);
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let mut b = a.clone();
                b[ax] += sign * h;
                b
            }
            _ => {
                let h = hs[i / 3 % hs.len()];
                let dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let norm = dir.norm();
                if norm == 0.0 {
                    continue;
                }
                &a + dir * (h / norm)
            }
        };
        clamp(&mut b);
        let dx = (&a - &b).norm();
        if dx == 0.0 {
            continue;
        }
        let dv = (f.eval(&a) - f.eval(&b)).norm();
        best = best.max(dv / dx);
    }
    best
}

/// Exact max pairwise Euclidean distance over the sample, O(m²).
pub fn diameter(points: &[DVector<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("diameter of an empty point set"));
    }
    let mut best = 0.0f64;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            best = best.max((&points[i] - &points[j]).norm());
        }
    }
    Ok(best)
}
