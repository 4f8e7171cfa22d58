//! L¹, sup, and L¹_loc estimation over boxes, box annuli, and Euclidean
//! balls. Tensor grids use the midpoint rule; Monte Carlo paths are seeded
//! and single-pass. All accumulation is pairwise for reproducibility.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::linalg::PairwiseAccumulator;
use crate::targets::Evaluable;

/// Hard cap on evaluation counts for any single quadrature call.
pub const POINT_BUDGET: u128 = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    TensorMidpoint,
    MonteCarlo,
}

/// Where and how to sample an integrand.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub bounds: BoundingBox,
    pub mode: GridMode,
    /// Tensor mode: nodes per axis.
    pub points_per_axis: usize,
    /// Monte Carlo mode: total draws.
    pub sample_count: usize,
    pub seed: u64,
}

impl QuadratureGrid {
    pub fn tensor(bounds: BoundingBox, points_per_axis: usize) -> QuadratureGrid {
        QuadratureGrid {
            bounds,
            mode: GridMode::TensorMidpoint,
            points_per_axis,
            sample_count: 0,
            seed: 0,
        }
    }

    pub fn monte_carlo(bounds: BoundingBox, sample_count: usize, seed: u64) -> QuadratureGrid {
        QuadratureGrid {
            bounds,
            mode: GridMode::MonteCarlo,
            points_per_axis: 0,
            sample_count,
            seed,
        }
    }

    pub fn total_points(&self) -> u128 {
        match self.mode {
            GridMode::TensorMidpoint => (self.points_per_axis as u128)
                .checked_pow(self.bounds.dim() as u32)
                .unwrap_or(u128::MAX),
            GridMode::MonteCarlo => self.sample_count as u128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            GridMode::TensorMidpoint if self.points_per_axis == 0 => {
                return Err(Error::invalid("points_per_axis must be positive"));
            }
            GridMode::MonteCarlo if self.sample_count == 0 => {
                return Err(Error::invalid("sample_count must be positive"));
            }
            _ => {}
        }
        if self.total_points() > POINT_BUDGET {
            return Err(Error::BudgetExceeded(format!(
                "quadrature would evaluate {} points (cap {POINT_BUDGET})",
                self.total_points()
            )));
        }
        Ok(())
    }
}

/// An integral estimate and its reported uncertainty: MC standard error, or
/// the midpoint cell-oscillation bound when a Lipschitz constant was given.
#[derive(Debug, Clone, Copy)]
pub struct NormEstimate {
    pub value: f64,
    pub uncertainty: Option<f64>,
}

/// Pointwise difference of two targets with matching dimensions.
pub struct PointwiseDiff<'a> {
    f: &'a dyn Evaluable,
    g: &'a dyn Evaluable,
}

pub fn diff<'a>(f: &'a dyn Evaluable, g: &'a dyn Evaluable) -> Result<PointwiseDiff<'a>> {
    if f.dim_in() != g.dim_in() || f.dim_out() != g.dim_out() {
        return Err(Error::invalid(format!(
            "difference of incompatible targets: {}->{} vs {}->{}",
            f.dim_in(),
            f.dim_out(),
            g.dim_in(),
            g.dim_out()
        )));
    }
    Ok(PointwiseDiff { f, g })
}

impl Evaluable for PointwiseDiff<'_> {
    fn dim_in(&self) -> usize {
        self.f.dim_in()
    }

    fn dim_out(&self) -> usize {
        self.f.dim_out()
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self.f.eval(x) - self.g.eval(x)
    }
}

fn check_dims(f: &dyn Evaluable, bounds: &BoundingBox) -> Result<()> {
    if f.dim_in() != bounds.dim() {
        return Err(Error::invalid(format!(
            "target takes {} inputs but grid box has dim {}",
            f.dim_in(),
            bounds.dim()
        )));
    }
    Ok(())
}

/// Visit every tensor-midpoint node: cell k along each axis maps to
/// lo + (k + 1/2)·width/p.
fn for_each_midpoint(
    bounds: &BoundingBox,
    p: usize,
    mut visit: impl FnMut(&DVector<f64>),
) {
    let d = bounds.dim();
    let lo = bounds.lo();
    let hi = bounds.hi();
    let mut idx = vec![0usize; d];
    let mut x = DVector::zeros(d);
    let pf = p as f64;
    loop {
        for ax in 0..d {
            let t = (idx[ax] as f64 + 0.5) / pf;
            x[ax] = lo[ax] + t * (hi[ax] - lo[ax]);
        }
        visit(&x);
        let mut ax = d;
        loop {
            if ax == 0 {
                return;
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < p {
                break;
            }
            idx[ax] = 0;
            if ax == 0 {
                return;
            }
        }
    }
}

/// Estimate ∫ ‖f(x)‖₂ dx over the grid box.
///
/// Tensor mode returns the midpoint rule as vol·(Σ‖f‖)/N, which is exact for
/// constants; `lip`, when given, produces the cell-oscillation error bound
/// L·vol·(cell half-diagonal). MC mode reports the standard error.
pub fn l1_norm(f: &dyn Evaluable, grid: &QuadratureGrid, lip: Option<f64>) -> Result<NormEstimate> {
    grid.validate()?;
    check_dims(f, &grid.bounds)?;
    let vol = grid.bounds.volume();
    match grid.mode {
        GridMode::TensorMidpoint => {
            let p = grid.points_per_axis;
            let mut acc = PairwiseAccumulator::new();
            for_each_midpoint(&grid.bounds, p, |x| acc.push(f.eval(x).norm()));
            let n = acc.count() as f64;
            let value = vol * (acc.sum() / n);
            let uncertainty = lip.map(|l| {
                let half_diag = grid
                    .bounds
                    .halfwidths
                    .iter()
                    .map(|h| (h / p as f64) * (h / p as f64))
                    .sum::<f64>()
                    .sqrt();
                l * vol * half_diag
            });
            Ok(NormEstimate { value, uncertainty })
        }
        GridMode::MonteCarlo => {
            let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
            let mut acc = PairwiseAccumulator::new();
            let mut acc_sq = PairwiseAccumulator::new();
            for _ in 0..grid.sample_count {
                let y = f.eval(&grid.bounds.sample(&mut rng)).norm();
                acc.push(y);
                acc_sq.push(y * y);
            }
            let n = acc.count() as f64;
            let mean = acc.sum() / n;
            let var = (acc_sq.sum() / n - mean * mean).max(0.0);
            Ok(NormEstimate {
                value: vol * mean,
                uncertainty: Some(vol * (var / n).sqrt()),
            })
        }
    }
}

/// Max of ‖f(x)‖₂ over grid samples: a lower bound on the true sup.
///
/// Tensor mode uses an endpoint-inclusive lattice (so peaks at grid-aligned
/// nodes are hit exactly), requiring points_per_axis ≥ 2.
pub fn sup_norm(f: &dyn Evaluable, grid: &QuadratureGrid) -> Result<f64> {
    grid.validate()?;
    check_dims(f, &grid.bounds)?;
    let mut best = 0.0f64;
    match grid.mode {
        GridMode::TensorMidpoint => {
            let p = grid.points_per_axis;
            if p < 2 {
                return Err(Error::invalid("sup_norm needs at least 2 points per axis"));
            }
            let d = grid.bounds.dim();
            let lo = grid.bounds.lo();
            let hi = grid.bounds.hi();
            let mut idx = vec![0usize; d];
            let mut x = DVector::zeros(d);
            'outer: loop {
                for ax in 0..d {
                    let t = idx[ax] as f64 / (p - 1) as f64;
                    x[ax] = lo[ax] + t * (hi[ax] - lo[ax]);
                }
                best = best.max(f.eval(&x).norm());
                let mut ax = d;
                loop {
                    if ax == 0 {
                        break 'outer;
                    }
                    ax -= 1;
                    idx[ax] += 1;
                    if idx[ax] < p {
                        break;
                    }
                    idx[ax] = 0;
                    if ax == 0 {
                        break 'outer;
                    }
                }
            }
        }
        GridMode::MonteCarlo => {
            let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
            for _ in 0..grid.sample_count {
                best = best.max(f.eval(&grid.bounds.sample(&mut rng)).norm());
            }
        }
    }
    Ok(best)
}

/// Doubling refinement: sample on lattices of p, 2p−1, 4p−3, … nodes per axis
/// (each refinement keeps all previous nodes) until the sup estimate moves by
/// less than rtol·max(1, value) or the next lattice would exceed the budget.
pub fn sup_norm_refined(
    f: &dyn Evaluable,
    bounds: &BoundingBox,
    start_points_per_axis: usize,
    rtol: f64,
) -> Result<f64> {
    if !(rtol > 0.0) {
        return Err(Error::invalid("rtol must be positive"));
    }
    let mut p = start_points_per_axis.max(2);
    let mut grid = QuadratureGrid::tensor(bounds.clone(), p);
    let mut value = sup_norm(f, &grid)?;
    loop {
        let next = 2 * p - 1;
        grid.points_per_axis = next;
        if grid.total_points() > POINT_BUDGET {
            return Ok(value);
        }
        let refined = sup_norm(f, &grid)?;
        let change = (refined - value).abs();
        value = refined;
        p = next;
        if change < rtol * value.max(1.0) {
            return Ok(value);
        }
    }
}

/// Uniform draw from the Euclidean ball of radius r.
fn sample_ball<R: Rng>(d: usize, r: f64, rng: &mut R) -> DVector<f64> {
    loop {
        let dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = dir.norm();
        if norm > 0.0 {
            let u: f64 = rng.gen_range(0.0..1.0);
            return dir * (r * u.powf(1.0 / d as f64) / norm);
        }
    }
}

fn ball_volume(d: usize, r: f64) -> f64 {
    let hd = d as f64 / 2.0;
    std::f64::consts::PI.powf(hd) / libm::tgamma(hd + 1.0) * r.powi(d as i32)
}

/// Partial sum and per-term breakdown of the L¹_loc distance.
#[derive(Debug, Clone)]
pub struct L1LocReport {
    pub value: f64,
    /// Remainder bound for the dropped tail: 2^{−terms}.
    pub tail_bound: f64,
    /// summands[n−1] = 2^{−n}·I_n/(1+I_n), each < 2^{−n}.
    pub summands: Vec<f64>,
}

/// Σ_{n=1..terms} 2^{−n}·I_n/(1+I_n) with I_n = ∫_{‖x‖₂≤n} ‖f−g‖, each ball
/// integral by seeded MC with `samples_per_term` draws.
pub fn l1_loc_distance(
    f: &dyn Evaluable,
    g: &dyn Evaluable,
    terms: usize,
    samples_per_term: usize,
    seed: u64,
) -> Result<L1LocReport> {
    if terms == 0 {
        return Err(Error::invalid("terms must be at least 1"));
    }
    if samples_per_term == 0 || samples_per_term as u128 > POINT_BUDGET {
        return Err(Error::invalid("samples_per_term out of range"));
    }
    let h = diff(f, g)?;
    let d = h.dim_in();
    let mut value = 0.0;
    let mut summands = Vec::with_capacity(terms);
    for n in 1..=terms {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(n as u64));
        let r = n as f64;
        let mut acc = PairwiseAccumulator::new();
        for _ in 0..samples_per_term {
            acc.push(h.eval(&sample_ball(d, r, &mut rng)).norm());
        }
        let integral = ball_volume(d, r) * (acc.sum() / samples_per_term as f64);
        let summand = 0.5f64.powi(n as i32) * (integral / (1.0 + integral));
        summands.push(summand);
        value += summand;
    }
    Ok(L1LocReport { value, tail_bound: 0.5f64.powi(terms as i32), summands })
}

/// L¹ of ‖f‖ over the box annulus [−outer, outer]^d \ (−inner, inner)^d.
///
/// Tensor mode evaluates the difference of two midpoint integrals (valid
/// since ‖f‖ ≥ 0 splits additively), which is exact for constants. MC mode
/// samples the annulus directly, avoiding the cancellation the difference
/// form suffers when the annulus contribution is tiny against the inner
/// mass.
pub fn annulus_l1(
    f: &dyn Evaluable,
    inner: f64,
    outer: f64,
    grid: &QuadratureGrid,
) -> Result<NormEstimate> {
    if !(inner > 0.0 && outer > inner) {
        return Err(Error::invalid("annulus needs 0 < inner < outer"));
    }
    let d = f.dim_in();
    match grid.mode {
        GridMode::TensorMidpoint => {
            let outer_grid = QuadratureGrid::tensor(
                BoundingBox::symmetric(d, outer),
                grid.points_per_axis,
            );
            let inner_grid = QuadratureGrid::tensor(
                BoundingBox::symmetric(d, inner),
                grid.points_per_axis,
            );
            let a = l1_norm(f, &outer_grid, None)?;
            let b = l1_norm(f, &inner_grid, None)?;
            Ok(NormEstimate { value: a.value - b.value, uncertainty: None })
        }
        GridMode::MonteCarlo => {
            grid.validate()?;
            let vol = BoundingBox::symmetric(d, outer).volume()
                - BoundingBox::symmetric(d, inner).volume();
            // Sample the annulus directly: split it into d disjoint slabs
            // by the first axis that leaves the inner interval. Slab k has
            // volume (2i)^k * 2(o-i) * (2o)^(d-1-k). No rejection, so a
            // thin annulus costs the same as a thick one.
            let mut cum = Vec::with_capacity(d);
            let mut total = 0.0;
            for k in 0..d {
                total += (2.0 * inner).powi(k as i32)
                    * 2.0
                    * (outer - inner)
                    * (2.0 * outer).powi((d - 1 - k) as i32);
                cum.push(total);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
            let mut acc = PairwiseAccumulator::new();
            let mut acc_sq = PairwiseAccumulator::new();
            let mut x = DVector::zeros(d);
            for _ in 0..grid.sample_count {
                let t = rng.gen_range(0.0..total);
                let k = cum.partition_point(|&w| w <= t).min(d - 1);
                for j in 0..d {
                    x[j] = if j < k {
                        rng.gen_range(-inner..inner)
                    } else if j > k {
                        rng.gen_range(-outer..outer)
                    } else {
                        let mag = rng.gen_range(inner..outer);
                        if rng.gen::<bool>() {
                            mag
                        } else {
                            -mag
                        }
                    };
                }
                let y = f.eval(&x).norm();
                acc.push(y);
                acc_sq.push(y * y);
            }
            let n = acc.count() as f64;
            let mean = acc.sum() / n;
            let var = (acc_sq.sum() / n - mean * mean).max(0.0);
            Ok(NormEstimate {
                value: vol * mean,
                uncertainty: Some(vol * (var / n).sqrt()),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{annulus_measure, build_cube_mask, build_univariate_mask, MaskSpec};
    use crate::targets;
    use std::sync::Arc;

    fn unit_box(d: usize) -> BoundingBox {
        BoundingBox::from_corners(
            &DVector::zeros(d),
            &DVector::from_element(d, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn l1_constant_is_exact() {
        let one = targets::constant(2, 1, 1.0);
        let est = l1_norm(&one, &QuadratureGrid::tensor(unit_box(2), 10), None).unwrap();
        assert_eq!(est.value, 1.0);
        let mc = l1_norm(&one, &QuadratureGrid::monte_carlo(unit_box(2), 500, 4), None).unwrap();
        assert_eq!(mc.value, 1.0);
        assert_eq!(mc.uncertainty.unwrap(), 0.0);
    }

    #[test]
    fn l1_zero_is_zero() {
        let z = targets::zero(2, 1);
        let est = l1_norm(&z, &QuadratureGrid::tensor(unit_box(2), 8), None).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn l1_univariate_mask_plateau_plus_triangles() {
        let mask = build_univariate_mask(1.0, 0.5).unwrap();
        let grid = QuadratureGrid::tensor(BoundingBox::symmetric(1, 1.5), 3000);
        let est = l1_norm(&mask, &grid, Some(2.0)).unwrap();
        assert!((est.value - 2.5).abs() < 1e-6, "got {}", est.value);
        assert!(est.uncertainty.unwrap() > 0.0);
        let mc = l1_norm(
            &mask,
            &QuadratureGrid::monte_carlo(BoundingBox::symmetric(1, 1.5), 200_000, 11),
            None,
        )
        .unwrap();
        let stderr = mc.uncertainty.unwrap();
        assert!((mc.value - 2.5).abs() < 5.0 * stderr + 1e-3, "mc {} pm {stderr}", mc.value);
    }

    #[test]
    fn l1_triangle_inequality_on_fixed_grid() {
        // Per-sample triangle inequality holds in exact arithmetic on a shared
        // grid; allow a relative ulp for the rounded norms and sums.
        let f = targets::bump(2);
        let g = targets::boxdist(2);
        let h = targets::hinge_sum(2, 3, 2);
        let grid = QuadratureGrid::tensor(BoundingBox::symmetric(2, 1.5), 41);
        let fh = l1_norm(&diff(&f, &h).unwrap(), &grid, None).unwrap().value;
        let fg = l1_norm(&diff(&f, &g).unwrap(), &grid, None).unwrap().value;
        let gh = l1_norm(&diff(&g, &h).unwrap(), &grid, None).unwrap().value;
        assert!(fh <= (fg + gh) * (1.0 + 1e-12));
    }

    #[test]
    fn sup_norm_examples() {
        let three = targets::constant(2, 1, 3.0);
        let grid = QuadratureGrid::tensor(BoundingBox::symmetric(2, 1.0), 5);
        assert_eq!(sup_norm(&three, &grid).unwrap(), 3.0);

        // Tent peak at a lattice-aligned node is hit exactly.
        let tent = targets::boxdist(1);
        let grid1 = QuadratureGrid::tensor(BoundingBox::symmetric(1, 1.0), 21);
        assert_eq!(sup_norm(&tent, &grid1).unwrap(), 1.0);

        let z = targets::zero(1, 1);
        assert_eq!(sup_norm(&z, &grid1).unwrap(), 0.0);
    }

    #[test]
    fn sup_norm_refinement_converges() {
        let f = targets::bump(2);
        let v = sup_norm_refined(&f, &BoundingBox::symmetric(2, 1.0), 9, 1e-4).unwrap();
        assert!((v - 2.0).abs() < 1e-3, "got {v}");
    }

    #[test]
    fn l1_loc_identical_functions() {
        let f = targets::bump(2);
        let report = l1_loc_distance(&f, &f, 6, 1000, 3).unwrap();
        assert_eq!(report.value, 0.0);
        assert_eq!(report.tail_bound, 0.5f64.powi(6));
        assert!(report.summands.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn l1_loc_indicator_closed_form() {
        // f − g = indicator of the unit interval (d=1): each ball integral is
        // exactly 2, so summand n = 2^{−n}·(2/3).
        let ind = targets::FunctionSpec::new(
            "indicator",
            1,
            1,
            f64::INFINITY,
            BoundingBox::symmetric(1, 1.0),
            Arc::new(|x: &DVector<f64>| {
                DVector::from_element(1, if x[0].abs() <= 1.0 { 1.0 } else { 0.0 })
            }),
        );
        let z = targets::zero(1, 1);
        let report = l1_loc_distance(&ind, &z, 8, 200_000, 17).unwrap();
        for (i, &s) in report.summands.iter().enumerate() {
            let n = i + 1;
            let expect = 0.5f64.powi(n as i32) * (2.0 / 3.0);
            assert!((s - expect).abs() < 1e-3, "term {n}: {s} vs {expect}");
            assert!(s < 0.5f64.powi(n as i32), "summand bound violated at {n}");
        }
        let total: f64 = report.summands.iter().sum();
        let closed = 2.0 / 3.0 * (1.0 - 0.5f64.powi(8));
        assert!((total - closed).abs() < 4e-3, "{total} vs {closed}");
    }

    #[test]
    fn l1_loc_constant_difference_summands_bounded() {
        let c = targets::constant(2, 1, 0.7);
        let z = targets::zero(2, 1);
        let report = l1_loc_distance(&c, &z, 5, 2000, 9).unwrap();
        for (i, &s) in report.summands.iter().enumerate() {
            let cap = 0.5f64.powi(i as i32 + 1);
            assert!(s > 0.0 && s < cap);
        }
        assert!(report.value < 1.0);
    }

    #[test]
    fn annulus_constant_exact() {
        let one = targets::constant(2, 1, 1.0);
        let grid = QuadratureGrid::tensor(BoundingBox::symmetric(2, 1.0), 64);
        let est = annulus_l1(&one, 1.0, 1.25, &grid).unwrap();
        assert!((est.value - 2.25).abs() < 1e-12, "got {}", est.value);

        let z = targets::zero(2, 1);
        assert_eq!(annulus_l1(&z, 1.0, 1.25, &grid).unwrap().value, 0.0);

        let mc = QuadratureGrid::monte_carlo(BoundingBox::symmetric(2, 1.0), 40_000, 5);
        let est_mc = annulus_l1(&one, 1.0, 1.25, &mc).unwrap();
        assert!((est_mc.value - 2.25).abs() < 1e-9); // constant integrand: no variance
    }

    #[test]
    fn annulus_mask_below_measure() {
        let spec = MaskSpec { d: 2, n: 1.0, delta: 0.5, out_dim: 1 };
        let mask = build_cube_mask(&spec).unwrap();
        let grid = QuadratureGrid::tensor(BoundingBox::symmetric(2, 1.0), 301);
        let est = annulus_l1(&mask, 1.0, 1.5, &grid).unwrap();
        let measure = annulus_measure(2, 1.0, 0.5);
        assert!(est.value <= measure + 1e-6, "{} vs {measure}", est.value);
        assert!(est.value > 0.0);
    }

    #[test]
    fn annulus_mc_handles_thin_shells() {
        // A tight support certificate produces annuli like [1, 1.008];
        // direct slab sampling must not degrade or fail there.
        let one = targets::constant(2, 1, 1.0);
        let outer = 1.007782210785;
        let vol = (2.0 * outer) * (2.0 * outer) - 4.0;
        let mc = QuadratureGrid::monte_carlo(BoundingBox::symmetric(2, outer), 20_000, 7);
        let est = annulus_l1(&one, 1.0, outer, &mc).unwrap();
        assert!((est.value - vol).abs() < 1e-12, "{} vs {vol}", est.value);
        assert!(est.uncertainty.unwrap() < 1e-12);

        // Nonconstant integrand: the sampler must stay inside the annulus,
        // where this mask is strictly below 1, and nowhere negative.
        let mask = build_cube_mask(&MaskSpec { d: 2, n: 1.0, delta: 0.25, out_dim: 1 }).unwrap();
        let est = annulus_l1(&mask, 1.0, 1.25, &mc).unwrap();
        let measure = annulus_measure(2, 1.0, 0.25);
        assert!(est.value > 0.0 && est.value < measure, "{} vs {measure}", est.value);
    }

    #[test]
    fn annulus_additivity() {
        let f = targets::bump(2);
        let grid = QuadratureGrid::tensor(BoundingBox::symmetric(2, 1.0), 401);
        let a = annulus_l1(&f, 0.25, 0.5, &grid).unwrap().value;
        let b = annulus_l1(&f, 0.5, 0.8, &grid).unwrap().value;
        let whole = annulus_l1(&f, 0.25, 0.8, &grid).unwrap().value;
        assert!((a + b - whole).abs() < 2e-3, "{a} + {b} vs {whole}");
    }

    #[test]
    fn budget_and_validation() {
        let z4 = targets::zero(4, 1);
        let big = QuadratureGrid::tensor(BoundingBox::symmetric(4, 1.0), 100);
        assert!(matches!(l1_norm(&z4, &big, None), Err(Error::BudgetExceeded(_))));

        let z2 = targets::zero(2, 1);
        let zero_pts = QuadratureGrid::tensor(BoundingBox::symmetric(2, 1.0), 0);
        assert!(l1_norm(&z2, &zero_pts, None).is_err());

        let wrong_dim = QuadratureGrid::tensor(BoundingBox::symmetric(3, 1.0), 4);
        assert!(l1_norm(&z2, &wrong_dim, None).is_err());

        let f1 = targets::bump(1);
        let f2 = targets::bump(2);
        assert!(diff(&f1, &f2).is_err());

        let g = QuadratureGrid::tensor(BoundingBox::symmetric(2, 1.0), 8);
        assert!(annulus_l1(&z2, 1.0, 1.0, &g).is_err());
        assert!(annulus_l1(&z2, -1.0, 1.0, &g).is_err());
    }

    #[test]
    fn ball_volume_matches_known_values() {
        assert!((ball_volume(1, 1.0) - 2.0).abs() < 1e-12);
        assert!((ball_volume(2, 1.0) - std::f64::consts::PI).abs() < 1e-12);
        assert!((ball_volume(3, 2.0) - 4.0 / 3.0 * std::f64::consts::PI * 8.0).abs() < 1e-10);
    }

    #[test]
    fn mc_determinism() {
        let f = targets::bump(2);
        let grid = QuadratureGrid::monte_carlo(BoundingBox::symmetric(2, 1.0), 5000, 77);
        let a = l1_norm(&f, &grid, None).unwrap().value;
        let b = l1_norm(&f, &grid, None).unwrap().value;
        assert_eq!(a, b);
    }
}
