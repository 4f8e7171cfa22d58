//! Analytic baselines: random-feature ridge fits and polynomial least
//! squares against the catalog targets, plus the tail-mass instrumentation
//! that separates them from support-adjusted relu networks. An analytic
//! function that vanishes on an open set vanishes everywhere, so any
//! non-trivial analytic fit must leak L1 mass into the exterior annuli;
//! the adjusted relu networks measurably do not.

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::linalg::Weights;
use crate::network::{Layer, Network};
use crate::quad::{annulus_l1, diff, l1_norm, sup_norm, QuadratureGrid};
use crate::targets::{Evaluable, FunctionSpec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct FitConfig {
    /// Must be analytic for network fits; that is the point of the baseline.
    pub activation: ActivationKind,
    pub hidden_width: usize,
    pub feature_seed: u64,
    pub ridge_lambda: f64,
    /// Used by the polynomial baseline only.
    pub polynomial_degree: usize,
}

impl FitConfig {
    pub fn new(activation: ActivationKind, hidden_width: usize, feature_seed: u64) -> FitConfig {
        FitConfig {
            activation,
            hidden_width,
            feature_seed,
            ridge_lambda: 1e-8,
            polynomial_degree: 0,
        }
    }
}

/// One-hidden-layer fit with a frozen random first layer and ridge-regressed
/// readout. Deterministic per seed; the result is analytic by construction.
pub fn fit_random_features(
    target: &FunctionSpec,
    cfg: &FitConfig,
    train_box: &BoundingBox,
    samples: usize,
) -> Result<Network> {
    if !cfg.activation.analytic() {
        return Err(Error::invalid(
            "fit_random_features: activation must be analytic",
        ));
    }
    cfg.activation.validate()?;
    if cfg.hidden_width == 0 {
        return Err(Error::invalid("fit_random_features: hidden_width must be positive"));
    }
    if samples == 0 {
        return Err(Error::invalid("fit_random_features: needs samples"));
    }
    if !(cfg.ridge_lambda >= 0.0 && cfg.ridge_lambda.is_finite()) {
        return Err(Error::invalid("fit_random_features: ridge_lambda must be >= 0"));
    }
    if train_box.dim() != target.dim_in {
        return Err(Error::invalid(format!(
            "fit_random_features: train box dim {} vs target dim {}",
            train_box.dim(),
            target.dim_in
        )));
    }
    let d = target.dim_in;
    let dd = target.dim_out;
    let h = cfg.hidden_width;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.feature_seed);
    let span = train_box.halfwidths.max().max(1e-9);
    let scale = 2.0 / (span * (d as f64).sqrt());
    let w = DMatrix::from_fn(h, d, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        z * scale
    });
    let b = DVector::from_fn(h, |_, _| rng.gen_range(-2.0..2.0));

    // feature matrix [act(Wx + b) | 1], the trailing column is the intercept
    let mut phi = DMatrix::zeros(samples, h + 1);
    let mut y = DMatrix::zeros(samples, dd);
    for i in 0..samples {
        let x = train_box.sample(&mut rng);
        let z = &w * &x + &b;
        for j in 0..h {
            phi[(i, j)] = cfg.activation.apply(z[j]);
        }
        phi[(i, h)] = 1.0;
        let fx = target.eval(&x);
        for r in 0..dd {
            y[(i, r)] = fx[r];
        }
    }
    let beta = ridge_solve(&phi, &y, cfg.ridge_lambda, true)?;
    let c = DMatrix::from_fn(dd, h, |r, j| beta[(j, r)]);
    let c0 = DVector::from_fn(dd, |r, _| beta[(h, r)]);
    Network::new(
        d,
        vec![
            Layer::affine(w, b),
            Layer::Activation {
                kinds: vec![cfg.activation.clone(); h],
            },
            Layer::affine(c, c0),
        ],
        DVector::zeros(dd),
    )
}

/// Solve (phi' phi + lambda I') beta = phi' y; I' skips the intercept column
/// when `intercept` is set. A singular system retries with lambda * 10, up
/// to six bumps, per the stated error policy.
fn ridge_solve(
    phi: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
    intercept: bool,
) -> Result<DMatrix<f64>> {
    let t = phi.ncols();
    let gram = phi.transpose() * phi;
    let rhs = phi.transpose() * y;
    let mut lam = lambda;
    for _ in 0..7 {
        let mut a = gram.clone();
        for k in 0..t {
            if !(intercept && k == t - 1) {
                a[(k, k)] += lam;
            }
        }
        if let Some(sol) = a.lu().solve(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                return Ok(sol);
            }
        }
        lam = if lam > 0.0 { lam * 10.0 } else { 1e-8 };
    }
    Err(Error::Degenerate(format!(
        "normal equations stayed singular up to ridge lambda {lam}"
    )))
}

/// Multivariate polynomial up to a total degree, least-squares fitted.
/// Inputs are affinely normalized into [-1,1]^d for conditioning; the model
/// extrapolates outside the training box, which is exactly what the tail
/// measurements rely on.
#[derive(Clone, Debug)]
pub struct PolyModel {
    pub degree: usize,
    powers: Vec<Vec<u32>>,
    /// terms x dim_out
    coeffs: DMatrix<f64>,
    center: DVector<f64>,
    inv_halfwidth: DVector<f64>,
    dim_in: usize,
    dim_out: usize,
}

impl PolyModel {
    fn features(&self, x: &DVector<f64>) -> DVector<f64> {
        let z = DVector::from_fn(self.dim_in, |i, _| {
            (x[i] - self.center[i]) * self.inv_halfwidth[i]
        });
        DVector::from_fn(self.powers.len(), |j, _| {
            let mut m = 1.0;
            for (i, &p) in self.powers[j].iter().enumerate() {
                if p > 0 {
                    m *= z[i].powi(p as i32);
                }
            }
            m
        })
    }

    /// Largest coefficient magnitude, the triviality guard.
    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn term_count(&self) -> usize {
        self.powers.len()
    }
}

impl Evaluable for PolyModel {
    fn dim_in(&self) -> usize {
        self.dim_in
    }

    fn dim_out(&self) -> usize {
        self.dim_out
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self.coeffs.tr_mul(&self.features(x))
    }
}

/// All exponent vectors with total degree <= degree, in the deterministic
/// order the recursion produces.
fn multi_indices(d: usize, degree: usize) -> Vec<Vec<u32>> {
    fn go(ax: usize, remaining: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if ax + 1 == cur.len() {
            for v in 0..=remaining {
                cur[ax] = v;
                out.push(cur.clone());
            }
            return;
        }
        for v in 0..=remaining {
            cur[ax] = v;
            go(ax + 1, remaining - v, cur, out);
        }
    }
    let mut out = Vec::new();
    let mut cur = vec![0u32; d];
    go(0, degree as u32, &mut cur, &mut out);
    out
}

pub fn fit_polynomial(
    target: &FunctionSpec,
    degree: usize,
    train_box: &BoundingBox,
    samples: usize,
    seed: u64,
) -> Result<PolyModel> {
    if train_box.dim() != target.dim_in {
        return Err(Error::invalid("fit_polynomial: train box dim mismatch"));
    }
    let d = target.dim_in;
    let dd = target.dim_out;
    let powers = multi_indices(d, degree);
    if samples < powers.len() {
        return Err(Error::invalid(format!(
            "fit_polynomial: {} samples for {} terms",
            samples,
            powers.len()
        )));
    }
    let center = train_box.center.clone();
    let inv_halfwidth = DVector::from_fn(d, |i, _| {
        let h = train_box.halfwidths[i];
        if h > 0.0 {
            1.0 / h
        } else {
            0.0
        }
    });
    let model_shape = PolyModel {
        degree,
        powers,
        coeffs: DMatrix::zeros(0, 0),
        center,
        inv_halfwidth,
        dim_in: d,
        dim_out: dd,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = DMatrix::zeros(samples, model_shape.powers.len());
    let mut y = DMatrix::zeros(samples, dd);
    for i in 0..samples {
        let x = train_box.sample(&mut rng);
        let feats = model_shape.features(&x);
        for j in 0..feats.len() {
            phi[(i, j)] = feats[j];
        }
        let fx = target.eval(&x);
        for r in 0..dd {
            y[(i, r)] = fx[r];
        }
    }
    let coeffs = ridge_solve(&phi, &y, 0.0, false)?;
    Ok(PolyModel {
        coeffs,
        ..model_shape
    })
}

/// Largest readout magnitude of a network: last affine layer's weights and
/// bias plus the final bias. Guards the degenerate all-zero fit.
pub fn readout_magnitude(net: &Network) -> f64 {
    let mut m = net.final_bias().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for layer in net.layers().iter().rev() {
        if let Layer::Affine { weights, bias } = layer {
            m = bias.iter().fold(m, |m, v| m.max(v.abs()));
            m = match weights {
                Weights::Dense(a) => a.iter().fold(m, |m, v| m.max(v.abs())),
                Weights::Sparse(a) => a.values().iter().fold(m, |m, v| m.max(v.abs())),
            };
            break;
        }
    }
    m
}

/// L1 mass of ||f|| over the cubic annulus between the two halfwidths.
/// With a Monte Carlo grid the rejection sampler never evaluates inside the
/// inner cube, so a candidate that is bit-exact zero outside it comes back
/// as exactly 0.0; tensor grids would instead difference two large sums.
pub fn tail_mass(
    f: &dyn Evaluable,
    inner_halfwidth: f64,
    outer_halfwidth: f64,
    grid: &QuadratureGrid,
) -> Result<f64> {
    Ok(annulus_l1(f, inner_halfwidth, outer_halfwidth, grid)?.value)
}

/// One candidate for the separation table.
pub struct SepCandidate<'a> {
    pub label: String,
    pub eval: &'a dyn Evaluable,
    /// Certified support halfwidth for adjusted relu+pool candidates.
    pub certified_outer: Option<f64>,
    /// Readout magnitude; fits at or below 1e-8 are flagged trivial.
    pub max_out_weight: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparationRow {
    pub label: String,
    pub sup_error: f64,
    pub l1_error: f64,
    pub tail_mass: f64,
    pub certified_support: bool,
    pub nontrivial: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparationReport {
    pub target_label: String,
    pub trivial_target: bool,
    /// The measured tail annulus [tail_inner, tail_outer].
    pub tail_inner: f64,
    pub tail_outer: f64,
    pub rows: Vec<SeparationRow>,
}

#[derive(Clone, Debug)]
pub struct SeparationConfig {
    pub sup_points_per_axis: usize,
    pub l1_points_per_axis: usize,
    pub tail_samples: usize,
    pub seed: u64,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        SeparationConfig {
            sup_points_per_axis: 41,
            l1_points_per_axis: 61,
            tail_samples: 20_000,
            seed: 0x5e9a_7a7e,
        }
    }
}

/// Evaluate every candidate on common grids: sup and L1 error over the
/// target's support box, and tail mass over the first exterior annulus
/// [base + 0.1, base + 1.1], where base is the widest certified support
/// among the candidates (falling back to the target's own box).
pub fn separation_report(
    target: &FunctionSpec,
    candidates: &[SepCandidate],
    cfg: &SeparationConfig,
) -> Result<SeparationReport> {
    let sup_grid = QuadratureGrid::tensor(target.support_box.clone(), cfg.sup_points_per_axis);
    let l1_grid = QuadratureGrid::tensor(target.support_box.clone(), cfg.l1_points_per_axis);
    let target_sup = sup_norm(target, &sup_grid)?;
    let trivial_target = target_sup <= 1e-12;

    let certified_base = candidates
        .iter()
        .filter_map(|c| c.certified_outer)
        .fold(f64::NAN, f64::max);
    let base = if certified_base.is_nan() {
        let lo = target.support_box.lo();
        let hi = target.support_box.hi();
        (0..target.dim_in)
            .map(|i| lo[i].abs().max(hi[i].abs()))
            .fold(0.0f64, f64::max)
    } else {
        certified_base
    };
    let (tail_inner, tail_outer) = (base + 0.1, base + 1.1);

    let mut rows = Vec::with_capacity(candidates.len());
    for (k, c) in candidates.iter().enumerate() {
        if c.eval.dim_in() != target.dim_in || c.eval.dim_out() != target.dim_out {
            return Err(Error::invalid(format!(
                "separation_report: candidate '{}' has shape {}->{} against target {}->{}",
                c.label,
                c.eval.dim_in(),
                c.eval.dim_out(),
                target.dim_in,
                target.dim_out
            )));
        }
        let pd = diff(target, c.eval)?;
        let sup_error = sup_norm(&pd, &sup_grid)?;
        let l1_error = l1_norm(&pd, &l1_grid, None)?.value;
        let tail_grid = QuadratureGrid::monte_carlo(
            BoundingBox::symmetric(target.dim_in, tail_outer),
            cfg.tail_samples,
            cfg.seed.wrapping_add(k as u64),
        );
        let tm = tail_mass(c.eval, tail_inner, tail_outer, &tail_grid)?;
        rows.push(SeparationRow {
            label: c.label.clone(),
            sup_error,
            l1_error,
            tail_mass: tm,
            certified_support: c.certified_outer.is_some(),
            nontrivial: c.max_out_weight > 1e-8,
        });
    }
    Ok(SeparationReport {
        target_label: target.label.clone(),
        trivial_target,
        tail_inner,
        tail_outer,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjust::adjust_support;
    use crate::interp::approximate_lipschitz;
    use crate::targets;
    use nalgebra::DVector;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sym(d: usize, h: f64) -> BoundingBox {
        BoundingBox::symmetric(d, h)
    }

    #[test]
    fn degree_zero_polynomial_reproduces_constants() {
        let target = targets::constant(2, 1, 3.0);
        let model = fit_polynomial(&target, 0, &sym(2, 1.0), 400, 7).unwrap();
        assert_eq!(model.term_count(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-5.0..5.0));
            assert_eq!(model.eval(&x)[0], 3.0);
        }
    }

    #[test]
    fn multi_index_counts_match_binomials() {
        // |{alpha : |alpha| <= k}| = C(d + k, d)
        assert_eq!(multi_indices(1, 4).len(), 5);
        assert_eq!(multi_indices(2, 8).len(), 45);
        assert_eq!(multi_indices(3, 3).len(), 20);
        let idx = multi_indices(2, 2);
        assert!(idx.contains(&vec![1, 1]));
        assert!(idx.iter().all(|a| a.iter().sum::<u32>() <= 2));
    }

    #[test]
    fn zero_target_fit_is_trivial_and_tailless() {
        let target = targets::zero(2, 1);
        let cfg = FitConfig::new(ActivationKind::Sigmoid, 16, 3);
        let net = fit_random_features(&target, &cfg, &sym(2, 1.0), 500).unwrap();
        assert!(readout_magnitude(&net) <= 1e-10);
        let grid = QuadratureGrid::monte_carlo(sym(2, 2.2), 4000, 5);
        let tm = tail_mass(&net, 1.1, 2.2, &grid).unwrap();
        assert!(tm <= 1e-10, "tail {tm}");
    }

    #[test]
    fn sigmoid_fit_tracks_bump_and_leaks_mass() {
        let target = targets::bump(2);
        let cfg = FitConfig {
            activation: ActivationKind::Sigmoid,
            hidden_width: 64,
            feature_seed: 11,
            ridge_lambda: 1e-6,
            polynomial_degree: 0,
        };
        let net = fit_random_features(&target, &cfg, &sym(2, 1.0), 4000).unwrap();
        // training-box L1 error; the fixture value from the fit is ~0.1
        let pd = diff(&target, &net).unwrap();
        let l1 = l1_norm(&pd, &QuadratureGrid::tensor(sym(2, 1.0), 81), None)
            .unwrap()
            .value;
        assert!(l1 < 0.2, "training l1 {l1}");
        // analytic non-vanishing: the tail on the first exterior annulus is
        // strictly above the quadrature floor
        assert!(readout_magnitude(&net) > 1e-8);
        let grid = QuadratureGrid::monte_carlo(sym(2, 2.1), 20_000, 6);
        let tm = tail_mass(&net, 1.1, 2.1, &grid).unwrap();
        assert!(tm > 1e-12, "tail {tm}");
    }

    #[test]
    fn polynomial_tails_grow_with_radius() {
        let target = targets::bump(2);
        let model = fit_polynomial(&target, 8, &sym(2, 1.0), 3000, 13).unwrap();
        assert!(model.max_coeff() > 1e-8);
        let mut last = 0.0;
        for k in 0..3 {
            let inner = 1.1 + k as f64;
            let outer = inner + 1.0;
            let grid = QuadratureGrid::monte_carlo(sym(2, outer), 20_000, 17 + k as u64);
            let tm = tail_mass(&model, inner, outer, &grid).unwrap();
            assert!(tm > last, "annulus {k}: {tm} vs {last}");
            last = tm;
        }
    }

    #[test]
    fn ridge_recovers_from_singular_gram() {
        // more features than samples with lambda 0: singular normal
        // equations, the solver must bump lambda rather than fail
        let target = targets::bump(2);
        let cfg = FitConfig {
            activation: ActivationKind::Tanh,
            hidden_width: 32,
            feature_seed: 5,
            ridge_lambda: 0.0,
            polynomial_degree: 0,
        };
        let net = fit_random_features(&target, &cfg, &sym(2, 1.0), 8).unwrap();
        assert_eq!(net.output_dim(), 1);
    }

    #[test]
    fn rejects_non_analytic_activation() {
        let target = targets::bump(2);
        let cfg = FitConfig::new(ActivationKind::Relu, 8, 1);
        assert!(fit_random_features(&target, &cfg, &sym(2, 1.0), 100).is_err());
    }

    #[test]
    fn separation_table_isolates_the_certified_row() {
        let target = targets::bump(2);
        let (h, _plan) = approximate_lipschitz(&target, 0.2).unwrap();
        let (g, cert) = adjust_support(&h, 1.0, 0.2, None).unwrap();

        let sigmoid = fit_random_features(
            &target,
            &FitConfig::new(ActivationKind::Sigmoid, 32, 21),
            &sym(2, 1.0),
            2000,
        )
        .unwrap();
        let tanh = fit_random_features(
            &target,
            &FitConfig::new(ActivationKind::Tanh, 32, 22),
            &sym(2, 1.0),
            2000,
        )
        .unwrap();
        let poly = fit_polynomial(&target, 4, &sym(2, 1.0), 2000, 23).unwrap();

        let candidates = vec![
            SepCandidate {
                label: "relu+pool".into(),
                eval: &g,
                certified_outer: Some(cert.outer_halfwidth),
                max_out_weight: readout_magnitude(&g),
            },
            SepCandidate {
                label: "sigmoid-32".into(),
                eval: &sigmoid,
                certified_outer: None,
                max_out_weight: readout_magnitude(&sigmoid),
            },
            SepCandidate {
                label: "tanh-32".into(),
                eval: &tanh,
                certified_outer: None,
                max_out_weight: readout_magnitude(&tanh),
            },
            SepCandidate {
                label: "poly-4".into(),
                eval: &poly,
                certified_outer: None,
                max_out_weight: poly.max_coeff(),
            },
        ];
        let report =
            separation_report(&target, &candidates, &SeparationConfig::default()).unwrap();
        assert!(!report.trivial_target);
        assert_eq!(report.rows.len(), 4);
        assert!(report.tail_inner >= cert.outer_halfwidth + 0.1 - 1e-12);

        for row in &report.rows {
            assert!(row.nontrivial, "row {} trivial", row.label);
            if row.certified_support {
                assert_eq!(row.tail_mass, 0.0, "certified row leaks: {}", row.tail_mass);
            } else {
                assert!(row.tail_mass > 1e-12, "row {} tail {}", row.label, row.tail_mass);
            }
        }
        assert_eq!(
            report.rows.iter().filter(|r| r.certified_support).count(),
            1
        );
        // the certified approximant also wins on the support box
        let relu_row = &report.rows[0];
        assert!(relu_row.sup_error <= 0.45, "sup {}", relu_row.sup_error);
    }

    #[test]
    fn trivial_target_is_flagged() {
        let target = targets::zero(2, 1);
        let report = separation_report(&target, &[], &SeparationConfig::default()).unwrap();
        assert!(report.trivial_target);
        assert!(report.rows.is_empty());
    }
}
