//! Acceptance suite: one test per release criterion, each ending in a
//! single PASS line with the measured quantities.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use supportnet::activation::ActivationKind;
use supportnet::adjust::adjust_support;
use supportnet::fit::{
    fit_polynomial, fit_random_features, readout_magnitude, separation_report, FitConfig,
    SepCandidate, SeparationConfig,
};
use supportnet::geometry::BoundingBox;
use supportnet::interp::{approximate_lipschitz, build_tent_interpolant};
use supportnet::linalg::{SparseMatrix, Weights};
use supportnet::mask::{build_cube_mask, delta_for_epsilon, outer_halfwidth, MaskSpec};
use supportnet::network::{Layer, Network};
use supportnet::pipeline::{run_pipeline, verify_network, PipelineConfig};
use supportnet::quad::{annulus_l1, diff, l1_loc_distance, sup_norm, QuadratureGrid};
use supportnet::serialize;
use supportnet::targets::{self, FunctionSpec};

fn sample_plateau(rng: &mut ChaCha8Rng, d: usize, n: f64, count: usize) -> Vec<DVector<f64>> {
    (0..count).map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-n..=n))).collect()
}

/// Points outside [-outer, outer]^d; every fourth sits exactly on the
/// boundary of the certified box.
fn sample_exterior(rng: &mut ChaCha8Rng, d: usize, outer: f64, count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|i| {
            let mut x = DVector::from_fn(d, |_, _| rng.gen_range(-outer - 3.0..outer + 3.0));
            let ax = rng.gen_range(0..d);
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            x[ax] = if i % 4 == 0 { sign * outer } else { sign * (outer + rng.gen_range(0.0..3.0)) };
            x
        })
        .collect()
}

fn assert_bits_zero(net: &Network, points: &[DVector<f64>], what: &str) {
    for x in points {
        let y = net.evaluate(x).unwrap();
        for v in y.iter() {
            assert_eq!(v.to_bits(), 0, "{what}: nonzero {v:e} at {x:?}");
        }
    }
}

/// Criterion 1: the cube mask is exactly 1.0 on the plateau and exactly
/// +0.0 outside the certified box, across dimensions and margins.
#[test]
fn criterion_1_mask_bit_exactness() {
    let start = Instant::now();
    let mut configs = 0;
    for d in [1usize, 2, 4] {
        for n in [1.0, 2.5] {
            for delta in [0.25, 1.0] {
                let mask = build_cube_mask(&MaskSpec { d, n, delta, out_dim: 1 }).unwrap();
                let outer = outer_halfwidth(n, delta);
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + configs);
                for x in sample_plateau(&mut rng, d, n, 10_000) {
                    let y = mask.evaluate(&x).unwrap();
                    assert_eq!(y[0], 1.0, "mask(d={d},n={n},delta={delta}) != 1 at {x:?}");
                    assert_eq!(y[0].to_bits(), 1.0f64.to_bits());
                }
                assert_bits_zero(&mask, &sample_exterior(&mut rng, d, outer, 10_000), "mask");
                configs += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "criterion 1 took {elapsed:?}, budget 5 s");
    println!(
        "criterion 1 PASS: {configs} mask configs, 10^4 interior exactly 1.0 and 10^4 exterior bits zero each ({elapsed:?})"
    );
}

/// Criterion 2: the margin formula inverts 2^d((n+delta)^d - n^d) = eps
/// to 1e-10 relative accuracy on random inputs.
#[test]
fn criterion_2_delta_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.gen_range(1..=4usize);
        let n = rng.gen_range(0.05..5.0);
        let eps = 10f64.powf(rng.gen_range(-4.0..1.0));
        let delta = delta_for_epsilon(d, n, eps).unwrap();
        assert!(delta > 0.0);
        // (n+delta)^d - n^d evaluated in the factored form
        // delta * sum_k (n+delta)^k n^(d-1-k): the direct difference
        // cancels catastrophically when delta << n.
        let mut geom = 0.0;
        for k in 0..d {
            geom += (n + delta).powi(k as i32) * n.powi((d - 1 - k) as i32);
        }
        let achieved = 2f64.powi(d as i32) * delta * geom;
        let rel = ((achieved - eps) / eps).abs();
        worst = worst.max(rel);
        assert!(rel <= 1e-10, "d={d} n={n} eps={eps}: relative error {rel:e}");
    }
    println!("criterion 2 PASS: 100 random (d,n,eps), worst relative defect {worst:e} <= 1e-10");
}

fn const_one_net() -> Network {
    Network::new(
        2,
        vec![Layer::affine(DMatrix::zeros(1, 2), DVector::zeros(1))],
        DVector::from_element(1, 1.0),
    )
    .unwrap()
}

/// Criterion 3: support adjustment of the constant-1 target in 2-D with
/// budget 0.5: exact on the inner box, bit-zero outside, annulus gap within
/// budget, and the closed-form annulus area matches quadrature.
#[test]
fn criterion_3_adjustment_constant_target() {
    // Oracle first: with sup bound exactly 1, the margin solves
    // 4((1+delta)^2 - 1) = 0.5, i.e. delta = sqrt(1.125) - 1.
    let oracle_delta = 1.125f64.sqrt() - 1.0;
    let oracle_area = 4.0 * ((1.0 + oracle_delta).powi(2) - 1.0);
    assert!((oracle_area - 0.5).abs() < 1e-12);

    let f = const_one_net();
    let (g, cert) = adjust_support(&f, 1.0, 0.5, Some(1.0)).unwrap();
    assert!((cert.delta - oracle_delta).abs() <= 1e-12);

    // (i) equality on [-1,1]^2 within 8 machine epsilons (it is exact).
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for x in sample_plateau(&mut rng, 2, 1.0, 10_000) {
        let y = g.evaluate(&x).unwrap();
        assert!((y[0] - 1.0).abs() <= 8.0 * f64::EPSILON, "interior value {} at {x:?}", y[0]);
    }

    // (ii) exact zero outside the certified box.
    assert_bits_zero(&g, &sample_exterior(&mut rng, 2, cert.outer_halfwidth, 10_000), "adjusted");

    // (iii) annulus L1 gap within the budget.
    let grid = QuadratureGrid::tensor(BoundingBox::symmetric(2, cert.outer_halfwidth), 301);
    let gap = annulus_l1(&g, 1.0, cert.outer_halfwidth, &grid).unwrap().value;
    assert!(gap <= 0.5 + 1e-3, "annulus gap {gap}");
    assert!(gap > 0.0);

    // Closed-form annulus area vs quadrature of the constant 1.
    let ones = targets::constant(2, 1, 1.0);
    let area_grid = QuadratureGrid::tensor(BoundingBox::symmetric(2, 1.0 + cert.delta), 301);
    let area_quad = annulus_l1(&ones, 1.0, 1.0 + cert.delta, &area_grid).unwrap().value;
    assert!(
        (area_quad - oracle_area).abs() <= 1e-3,
        "area {area_quad} vs closed form {oracle_area}"
    );
    println!(
        "criterion 3 PASS: delta {:.12}, gap {gap:.6} <= 0.5+1e-3, area quadrature {area_quad:.6} vs closed form {oracle_area:.6}"
    , cert.delta);
}

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn pooled_net(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w1 = rand_mat(&mut rng, 8, 2);
    let w2 = rand_mat(&mut rng, 8, 8);
    let w3 = rand_mat(&mut rng, 2, 4);
    Network::new(
        2,
        vec![
            Layer::affine(w1, DVector::from_element(8, 0.25)),
            Layer::relu(8),
            Layer::affine(w2, DVector::from_element(8, -0.125)),
            Layer::relu(8),
            Layer::Pool,
            Layer::affine(w3, DVector::zeros(2)),
        ],
        DVector::from_vec(vec![0.125, -0.25]),
    )
    .unwrap()
}

fn relu_net(d: usize, hidden: usize, out: usize, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w1 = rand_mat(&mut rng, hidden, d);
    let w2 = rand_mat(&mut rng, out, hidden);
    Network::new(
        d,
        vec![
            Layer::affine(w1, DVector::from_element(hidden, 0.5)),
            Layer::relu(hidden),
            Layer::affine(w2, DVector::zeros(out)),
        ],
        DVector::zeros(out),
    )
    .unwrap()
}

/// Criterion 4: width/depth additivity of the adjustment across the test
/// catalog, and the exact pooling-layer count of pipeline networks.
#[test]
fn criterion_4_architecture_accounting() {
    let catalog: Vec<(Network, f64, f64)> = vec![
        (const_one_net(), 1.0, 0.5),
        (relu_net(1, 3, 1, 40), 1.0, 0.25),
        (relu_net(2, 5, 2, 41), 1.5, 0.5),
        (relu_net(4, 6, 1, 42), 1.0, 0.5),
        (pooled_net(43), 2.0, 0.125),
        (pooled_net(44), 1.0, 1.0),
    ];
    let mut instances = 0;
    for (f, n, eps) in &catalog {
        let d = f.input_dim();
        let dd = f.output_dim();
        let (_, cert) = adjust_support(f, *n, *eps, None).unwrap();
        let width_budget = (d * (d - 1) + 2).max(dd) + cert.stats_before.width;
        let depth_budget = 2 + 3 * d + cert.stats_before.depth;
        assert!(
            cert.stats_after.width <= width_budget,
            "d={d}: width {} over budget {width_budget}",
            cert.stats_after.width
        );
        assert!(
            cert.stats_after.depth <= depth_budget,
            "d={d}: depth {} over budget {depth_budget}",
            cert.stats_after.depth
        );
        instances += 1;
    }

    let mut pool_checked = 0;
    for (dim, eps, quad) in [(1usize, 0.5, 40_000), (2, 1.0, 40_000), (4, 8.0, 6_561)] {
        let cfg = PipelineConfig {
            target: "bump".to_string(),
            dim,
            epsilons: vec![eps],
            width_param: 1,
            max_nodes: 500_000,
            max_quad_points: quad,
            seed: 4,
            output_dir: None,
        };
        let run = run_pipeline(&cfg).unwrap();
        let row = &run.report.rows[0];
        assert!(!row.infeasible, "{:?}", row.diagnostic);
        let want = (dim as f64).log2() as usize + 1;
        assert_eq!(row.pool_layers, Some(want), "d={dim}");
        let cert = &run.artifacts[0].as_ref().unwrap().cert;
        let width_budget = (dim * (dim - 1) + 2).max(run.report.dim_out) + cert.stats_before.width;
        let depth_budget = 2 + 3 * dim + cert.stats_before.depth;
        assert!(cert.stats_after.width <= width_budget);
        assert!(cert.stats_after.depth <= depth_budget);
        pool_checked += 1;
    }
    println!(
        "criterion 4 PASS: {instances} adjusted instances within width/depth budgets, {pool_checked} pipeline dims with exactly log2(d)+1 pools"
    );
}

/// Criterion 5: tent interpolation meets the Lipschitz sup-error bound
/// L*sqrt(d)*h on dense grids for a catalog of targets with known constants.
#[test]
fn criterion_5_interpolation_bound() {
    let start = Instant::now();
    let mut cases = 0;
    let mut worst_ratio: f64 = 0.0;
    for d in [1usize, 2] {
        let specs: Vec<FunctionSpec> = vec![
            targets::bump(d),
            targets::boxdist(d),
            targets::hinge_sum(d, 4, 1),
            targets::hinge_sum(d, 4, 2),
            targets::hinge_sum(d, 4, 3),
        ];
        for spec in &specs {
            for h in [0.1, 0.05] {
                let side = 2.0 * spec.support_box.max_halfwidth();
                let n = 1 + (side / h).ceil() as usize;
                let actual_h = side / (n - 1) as f64;
                assert!(actual_h <= h + 1e-12);
                let net = build_tent_interpolant(spec, n).unwrap();
                let ppa = if d == 1 { 401 } else { 121 };
                let grid = QuadratureGrid::tensor(spec.support_box.clone(), ppa);
                let err = sup_norm(&diff(&net, spec).unwrap(), &grid).unwrap();
                let bound = spec.lipschitz * (d as f64).sqrt() * h * 1.0001;
                assert!(
                    err <= bound,
                    "{} d={d} h={h}: sup error {err} over bound {bound}",
                    spec.label
                );
                worst_ratio = worst_ratio.max(err / bound);
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "criterion 5 took {elapsed:?}, budget 60 s");
    assert_eq!(cases, 20);
    println!(
        "criterion 5 PASS: 20 targets within L*sqrt(d)*h*1.0001, worst ratio {worst_ratio:.4} ({elapsed:?})"
    );
}

/// Criterion 6: the end-to-end pipeline on the 2-D bump over a halving
/// epsilon ladder: monotone sup errors within budget, certified support
/// within the closed-form halfwidth, and bit-exact exterior zeros.
#[test]
fn criterion_6_pipeline_end_to_end() {
    let start = Instant::now();
    // Oracle: support halfwidth formula (2^{-d-1} eps + n_f^d)^{1/d} with
    // d = 2, n_f = 1.
    let oracle_outer = |eps: f64| (0.125 * eps + 1.0).sqrt();

    let epsilons = [0.5, 0.25, 0.125];
    let cfg = PipelineConfig {
        target: "bump".to_string(),
        dim: 2,
        epsilons: epsilons.to_vec(),
        width_param: 1,
        max_nodes: 500_000,
        max_quad_points: 160_000,
        seed: 6,
        output_dir: None,
    };
    let run = run_pipeline(&cfg).unwrap();
    assert_eq!(run.report.rows.len(), 3);
    let mut prev = f64::INFINITY;
    for (row, eps) in run.report.rows.iter().zip(epsilons) {
        assert!(!row.infeasible);
        assert!(row.certified, "eps {eps}: {:?}", row.diagnostic);
        let sup = row.sup_error_measured.unwrap();
        assert!(sup <= eps, "eps {eps}: sup {sup}");
        assert!(sup <= prev + 1e-12, "sup errors not monotone");
        prev = sup;
        let outer = row.support_outer_halfwidth.unwrap();
        assert!(outer <= oracle_outer(eps), "eps {eps}: outer {outer} over {}", oracle_outer(eps));
    }
    // Independent exterior re-check on fresh points, plus the full
    // certificate verifier (it exercises the thin-annulus check that the
    // tightest row stresses).
    let spec = targets::bump(2);
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for artifact in run.artifacts.iter() {
        let a = artifact.as_ref().unwrap();
        assert_bits_zero(
            &a.net,
            &sample_exterior(&mut rng, 2, a.cert.outer_halfwidth, 10_000),
            "pipeline row",
        );
        let report = verify_network(&a.net, &spec, &a.cert, 61).unwrap();
        assert!(report.passed, "{:?}", report.checks);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "criterion 6 took {elapsed:?}, budget 2 min");
    let sups: Vec<f64> = run.report.rows.iter().map(|r| r.sup_error_measured.unwrap()).collect();
    println!("criterion 6 PASS: sup errors {sups:?} under (0.5, 0.25, 0.125), exterior bits zero ({elapsed:?})");
}

/// Criterion 7: separation table on the 2-D bump: only the certified
/// relu+pool row has exactly zero tail mass; every analytic fit leaks.
#[test]
fn criterion_7_separation_harness() {
    let start = Instant::now();
    let spec = targets::bump(2);
    let eps = 0.2;
    let (h, _) = approximate_lipschitz(&spec, eps).unwrap();
    let (adjusted, cert) = adjust_support(&h, 1.0, eps, None).unwrap();

    let mut nets: Vec<(String, Network)> = Vec::new();
    for (i, kind) in [ActivationKind::Sigmoid, ActivationKind::Tanh, ActivationKind::Swish]
        .into_iter()
        .enumerate()
    {
        let name = format!("{}-64", kind.name());
        let fit_cfg = FitConfig::new(kind, 64, 700 + i as u64);
        let net = fit_random_features(&spec, &fit_cfg, &spec.support_box, 4000).unwrap();
        nets.push((name, net));
    }
    let poly = fit_polynomial(&spec, 8, &spec.support_box, 4000, 7).unwrap();

    let mut candidates = vec![SepCandidate {
        label: "relu+pool".to_string(),
        eval: &adjusted,
        certified_outer: Some(cert.outer_halfwidth),
        max_out_weight: readout_magnitude(&adjusted),
    }];
    for (name, net) in &nets {
        candidates.push(SepCandidate {
            label: name.clone(),
            eval: net,
            certified_outer: None,
            max_out_weight: readout_magnitude(net),
        });
    }
    candidates.push(SepCandidate {
        label: "poly-8".to_string(),
        eval: &poly,
        certified_outer: None,
        max_out_weight: poly.max_coeff(),
    });

    let report = separation_report(&spec, &candidates, &SeparationConfig::default()).unwrap();
    assert!(!report.trivial_target);
    assert_eq!(report.rows.len(), 5);
    let mut zero_tails = Vec::new();
    for row in &report.rows {
        assert!(row.nontrivial, "{} fit degenerated", row.label);
        if row.tail_mass == 0.0 {
            zero_tails.push(row.label.clone());
        } else {
            assert!(
                row.tail_mass > 1e-12,
                "{}: tail {} not clearly positive",
                row.label,
                row.tail_mass
            );
        }
    }
    assert_eq!(zero_tails, vec!["relu+pool".to_string()], "zero-tail rows: {zero_tails:?}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "criterion 7 took {elapsed:?}, budget 2 min");
    println!(
        "criterion 7 PASS: relu+pool tail exactly 0.0, analytic tails all > 1e-12 across {} rows ({elapsed:?})",
        report.rows.len()
    );
}

/// Criterion 8: the locally-integrable metric on the 1-D indicator fixture
/// reproduces the closed-form series sum 2^{-n} * 2/3.
#[test]
fn criterion_8_l1_loc_fixture() {
    // Oracle: |f - 0| integrates to exactly 2 over every ball of radius
    // n >= 1, so each summand is 2^{-n} * 2/(1+2).
    let oracle = |n: usize| 0.5f64.powi(n as i32) * (2.0 / 3.0);

    let indicator = FunctionSpec::new(
        "indicator",
        1,
        1,
        0.0,
        BoundingBox::symmetric(1, 1.0),
        Arc::new(|x: &DVector<f64>| {
            DVector::from_element(1, if x[0].abs() <= 1.0 { 1.0 } else { 0.0 })
        }),
    );
    let zero = targets::zero(1, 1);
    let terms = 8;
    let report = l1_loc_distance(&indicator, &zero, terms, 40_000, 8).unwrap();

    assert_eq!(report.summands.len(), terms);
    let mut partial = 0.0;
    let mut measured = 0.0;
    for (i, summand) in report.summands.iter().enumerate() {
        let n = i + 1;
        assert!(*summand < 0.5f64.powi(n as i32), "summand {n} = {summand} not below 2^-{n}");
        assert!(
            (summand - oracle(n)).abs() <= 1e-3,
            "summand {n} = {summand} vs closed form {}",
            oracle(n)
        );
        partial += oracle(n);
        measured += summand;
        assert!(
            (measured - partial).abs() <= 1e-3 * n as f64,
            "partial sum through {n}: {measured} vs {partial}"
        );
    }
    assert!((report.value - partial).abs() <= 1e-3 * terms as f64);
    println!(
        "criterion 8 PASS: {terms} summands within 1e-3 of 2^-n * 2/3, total {:.6} vs {partial:.6}",
        report.value
    );
}

fn random_network(rng: &mut ChaCha8Rng) -> Network {
    let d = rng.gen_range(1..=4usize);
    let w1 = rng.gen_range(1..=6usize);
    let out = rng.gen_range(1..=3usize);
    let mut layers = Vec::new();

    if rng.gen::<bool>() {
        layers.push(Layer::affine(rand_mat(rng, w1, d), DVector::from_fn(w1, |_, _| rng.gen_range(-1.0..1.0))));
    } else {
        let mut trips = Vec::new();
        for row in 0..w1 {
            let col = rng.gen_range(0..d);
            trips.push((row, col, rng.gen_range(-1.0..1.0)));
        }
        layers.push(Layer::Affine {
            weights: Weights::Sparse(SparseMatrix::from_triplets(w1, d, &trips).unwrap()),
            bias: DVector::from_fn(w1, |_, _| rng.gen_range(-1.0..1.0)),
        });
    }
    let mut cur = w1;

    if rng.gen::<bool>() {
        let kinds: Vec<ActivationKind> = (0..cur)
            .map(|_| match rng.gen_range(0..6) {
                0 => ActivationKind::Relu,
                1 => ActivationKind::Identity,
                2 => ActivationKind::Sigmoid,
                3 => ActivationKind::Tanh,
                4 => ActivationKind::Swish,
                _ => ActivationKind::Polynomial(vec![
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]),
            })
            .collect();
        layers.push(Layer::Activation { kinds });
    }

    if cur % 2 == 0 && rng.gen::<bool>() {
        layers.push(Layer::Pool);
        cur /= 2;
    }

    layers.push(Layer::affine(rand_mat(rng, out, cur), DVector::from_fn(out, |_, _| rng.gen_range(-1.0..1.0))));
    Network::new(d, layers, DVector::from_fn(out, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
}

/// Criterion 9: serialization round-trips 500 random networks with
/// bit-identical evaluations and byte-identical re-serialization.
#[test]
fn criterion_9_serialization_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..500 {
        let net = random_network(&mut rng);
        let text = serialize::to_json(&net);
        let back = serialize::from_json(&text).unwrap();
        let again = serialize::to_json(&back);
        assert_eq!(text, again, "case {case}: serialization not byte-stable");

        let d = net.input_dim();
        for _ in 0..50 {
            let x = DVector::from_fn(d, |_, _| rng.gen_range(-3.0..3.0));
            let a = net.evaluate(&x).unwrap();
            let b = back.evaluate(&x).unwrap();
            for i in 0..a.len() {
                assert_eq!(
                    a[i].to_bits(),
                    b[i].to_bits(),
                    "case {case}: eval drift at {x:?}"
                );
            }
        }
    }
    println!("criterion 9 PASS: 500 networks, 50 points each, bit-identical evals and byte-stable JSON");
}
