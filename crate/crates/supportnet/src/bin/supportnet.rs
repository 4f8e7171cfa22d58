use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde_json::json;

use supportnet::activation::ActivationKind;
use supportnet::adjust::{adjust_support, AdjustmentCertificate};
use supportnet::error::{Error, Result};
use supportnet::fit::{
    fit_polynomial, fit_random_features, readout_magnitude, separation_report, FitConfig,
    PolyModel, SepCandidate, SeparationConfig,
};
use supportnet::geometry::{estimate_support_box, metric_capacity, BoundingBox};
use supportnet::interp::approximate_lipschitz;
use supportnet::mask::{build_cube_mask, delta_for_epsilon, outer_halfwidth, MaskSpec};
use supportnet::network::Network;
use supportnet::pipeline::{run_pipeline, verify_network, write_reports, PipelineConfig};
use supportnet::quad::{annulus_l1, diff, l1_loc_distance, l1_norm, sup_norm, QuadratureGrid};
use supportnet::serialize;
use supportnet::targets::{by_name, Evaluable, FunctionSpec};

#[derive(Parser)]
#[command(
    name = "supportnet",
    version,
    about = "ReLU + bilinear-pooling networks with bit-exact support control"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormKind {
    L1,
    Sup,
    L1loc,
    Annulus,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the cube mask network for [-n, n]^d and save it as JSON.
    Mask {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: f64,
        /// Transition margin; mutually exclusive with --epsilon.
        #[arg(long, conflicts_with = "epsilon")]
        delta: Option<f64>,
        /// L1 budget converted to the closed-form margin.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 1)]
        out_dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multiply a serialized network by the cube mask, certifying its support.
    Adjust {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        n: f64,
        /// L1 budget for the transition annulus.
        #[arg(long)]
        epsilon: f64,
        /// Sup bound of the network near the boundary; sampled when absent.
        #[arg(long)]
        sup_bound: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cert: PathBuf,
    },
    /// Greedy packing-capacity lower bound for points read from a CSV file.
    Capacity {
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value_t = 16)]
        trials: usize,
    },
    /// Scan a target on a tensor grid for its essential-support box.
    Supportbox {
        #[arg(long)]
        target: String,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 65)]
        grid: usize,
        /// Halfwidth of the scanned box; defaults to the target's own box.
        #[arg(long)]
        halfwidth: Option<f64>,
    },
    /// Norms of a network, or of its difference against another net/target.
    Norm {
        #[arg(long, value_enum)]
        kind: NormKind,
        #[arg(long)]
        net: PathBuf,
        #[arg(long, conflicts_with = "target")]
        net2: Option<PathBuf>,
        #[arg(long)]
        target: Option<String>,
        #[arg(long, default_value_t = 101)]
        grid_points: usize,
        /// Box halfwidth for the l1/sup grids.
        #[arg(long, default_value_t = 2.0)]
        halfwidth: f64,
        /// Monte Carlo samples for --kind annulus (0 uses the tensor grid).
        #[arg(long, default_value_t = 40_000)]
        mc: usize,
        #[arg(long)]
        inner: Option<f64>,
        #[arg(long)]
        outer: Option<f64>,
        /// Series terms for --kind l1loc.
        #[arg(long, default_value_t = 10)]
        terms: usize,
        #[arg(long, default_value_t = 4000)]
        samples_per_term: usize,
    },
    /// Tail-mass separation table: certified relu+pool vs analytic fits.
    Separate {
        #[arg(long)]
        target: String,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        epsilon: f64,
        /// Comma list of kind[:width] tokens plus poly:<degree>.
        #[arg(long, default_value = "sigmoid,tanh,swish,poly:8")]
        catalog: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 4000)]
        samples: usize,
    },
    /// Run the approximation pipeline from a TOML config.
    Approximate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-check a serialized network against its certificate and target.
    Verify {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        target: String,
    },
}

/// SUPPORTNET_SEED overrides any configured or default seed.
fn env_seed(default: u64) -> Result<u64> {
    match std::env::var("SUPPORTNET_SEED") {
        Ok(text) => text
            .parse()
            .map_err(|_| Error::invalid(format!("SUPPORTNET_SEED is not a u64: {text:?}"))),
        Err(_) => Ok(default),
    }
}

fn smallest_integer_halfwidth(spec: &FunctionSpec) -> f64 {
    let lo = spec.support_box.lo();
    let hi = spec.support_box.hi();
    let mut corner: f64 = 0.0;
    for i in 0..spec.dim_in {
        corner = corner.max(lo[i].abs()).max(hi[i].abs());
    }
    corner.ceil().max(1.0)
}

fn vec_of(x: &DVector<f64>) -> Vec<f64> {
    x.iter().copied().collect()
}

fn load_cert(path: &PathBuf) -> Result<AdjustmentCertificate> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

fn read_points_csv(path: &PathBuf) -> Result<Vec<DVector<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    let mut pts: Vec<DVector<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path.display().to_string(), e))?;
        let mut row = Vec::with_capacity(rec.len());
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::invalid(format!("row {i}: bad coordinate {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::invalid(format!("row {i}: non-finite coordinate")));
            }
            row.push(v);
        }
        if let Some(first) = pts.first() {
            if first.len() != row.len() {
                return Err(Error::invalid(format!("row {i}: inconsistent dimension")));
            }
        }
        pts.push(DVector::from_vec(row));
    }
    if pts.is_empty() {
        return Err(Error::invalid("points file is empty"));
    }
    Ok(pts)
}

enum OwnedEval {
    Net(Network),
    Poly(PolyModel),
}

impl OwnedEval {
    fn as_eval(&self) -> &dyn Evaluable {
        match self {
            OwnedEval::Net(n) => n,
            OwnedEval::Poly(p) => p,
        }
    }
}

fn analytic_kind(token: &str) -> Option<ActivationKind> {
    match token {
        "sigmoid" => Some(ActivationKind::Sigmoid),
        "tanh" => Some(ActivationKind::Tanh),
        "softplus" => Some(ActivationKind::Softplus),
        "swish" => Some(ActivationKind::Swish),
        "gelu" => Some(ActivationKind::Gelu),
        "sin" => Some(ActivationKind::Sin),
        _ => None,
    }
}

/// Returns true when every assertion the command makes passed.
fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Mask { d, n, delta, epsilon, out_dim, out } => {
            let delta = match (delta, epsilon) {
                (Some(delta), None) => delta,
                (None, Some(eps)) => delta_for_epsilon(d, n, eps)?,
                _ => return Err(Error::invalid("pass exactly one of --delta or --epsilon")),
            };
            let spec = MaskSpec { d, n, delta, out_dim };
            let net = build_cube_mask(&spec)?;
            serialize::save(&net, &out)?;
            let stats = net.stats();
            println!(
                "{}",
                json!({
                    "d": d,
                    "n": n,
                    "delta": delta,
                    "outer_halfwidth": outer_halfwidth(n, delta),
                    "stats": stats,
                    "out": out.display().to_string(),
                })
            );
            Ok(true)
        }
        Cmd::Adjust { net, n, epsilon, sup_bound, out, cert } => {
            let f = serialize::load(&net)?;
            let (g, certificate) = adjust_support(&f, n, epsilon, sup_bound)?;
            serialize::save(&g, &out)?;
            let text = serde_json::to_string_pretty(&certificate)
                .map_err(|e| Error::parse(cert.display().to_string(), e))?;
            fs::write(&cert, text + "\n")?;
            println!(
                "{}",
                json!({
                    "outer_halfwidth": certificate.outer_halfwidth,
                    "delta": certificate.delta,
                    "sup_bound_used": certificate.sup_bound_used,
                    "sup_bound_source": certificate.sup_bound_source,
                    "stats": certificate.stats_after,
                    "out": out.display().to_string(),
                    "cert": cert.display().to_string(),
                })
            );
            Ok(true)
        }
        Cmd::Capacity { points, trials } => {
            let pts = read_points_csv(&points)?;
            let capacity = metric_capacity(&pts, trials);
            println!(
                "{}",
                json!({ "points": pts.len(), "trials": trials, "capacity": capacity })
            );
            Ok(true)
        }
        Cmd::Supportbox { target, d, tol, grid, halfwidth } => {
            let spec = by_name(&target, d)?;
            let scan_box = match halfwidth {
                Some(h) => BoundingBox::symmetric(d, h),
                None => spec.support_box.clone(),
            };
            let scan = estimate_support_box(&spec, &scan_box, grid, tol)?;
            println!(
                "{}",
                json!({
                    "target": spec.label,
                    "n_f": scan.n_f,
                    "effectively_zero": scan.effectively_zero,
                    "hot_max_abs": scan.hot_max_abs,
                    "tight_lo": scan.tight_box.as_ref().map(|b| vec_of(&b.lo())),
                    "tight_hi": scan.tight_box.as_ref().map(|b| vec_of(&b.hi())),
                })
            );
            Ok(true)
        }
        Cmd::Norm {
            kind,
            net,
            net2,
            target,
            grid_points,
            halfwidth,
            mc,
            inner,
            outer,
            terms,
            samples_per_term,
        } => {
            let seed = env_seed(0x6e0a_11ce)?;
            let f = serialize::load(&net)?;
            let other: Option<Box<dyn Evaluable>> = match (&net2, &target) {
                (Some(path), None) => Some(Box::new(serialize::load(path)?)),
                (None, Some(name)) => Some(Box::new(by_name(name, f.input_dim())?)),
                (None, None) => None,
                _ => unreachable!("clap conflicts_with"),
            };
            let composed;
            let subject: &dyn Evaluable = match &other {
                Some(g) => {
                    composed = diff(&f, g.as_ref())?;
                    &composed
                }
                None => &f,
            };
            let d = f.input_dim();
            let report = match kind {
                NormKind::Sup => {
                    let grid =
                        QuadratureGrid::tensor(BoundingBox::symmetric(d, halfwidth), grid_points);
                    json!({ "kind": "sup", "value": sup_norm(subject, &grid)?, "halfwidth": halfwidth })
                }
                NormKind::L1 => {
                    let grid =
                        QuadratureGrid::tensor(BoundingBox::symmetric(d, halfwidth), grid_points);
                    let est = l1_norm(subject, &grid, None)?;
                    json!({ "kind": "l1", "value": est.value, "uncertainty": est.uncertainty, "halfwidth": halfwidth })
                }
                NormKind::L1loc => {
                    let g = other
                        .as_ref()
                        .ok_or_else(|| Error::invalid("l1loc needs --net2 or --target"))?;
                    let rep = l1_loc_distance(&f, g.as_ref(), terms, samples_per_term, seed)?;
                    json!({ "kind": "l1loc", "value": rep.value, "tail_bound": rep.tail_bound, "summands": rep.summands })
                }
                NormKind::Annulus => {
                    let (inner, outer) = match (inner, outer) {
                        (Some(a), Some(b)) => (a, b),
                        _ => return Err(Error::invalid("annulus needs --inner and --outer")),
                    };
                    let bounds = BoundingBox::symmetric(d, outer);
                    let grid = if mc > 0 {
                        QuadratureGrid::monte_carlo(bounds, mc, seed)
                    } else {
                        QuadratureGrid::tensor(bounds, grid_points)
                    };
                    let est = annulus_l1(subject, inner, outer, &grid)?;
                    json!({ "kind": "annulus", "value": est.value, "uncertainty": est.uncertainty, "inner": inner, "outer": outer })
                }
            };
            println!("{report}");
            Ok(true)
        }
        Cmd::Separate { target, d, epsilon, catalog, out, samples } => {
            let seed = env_seed(0x5e9a_7a7e)?;
            let spec = by_name(&target, d)?;
            let n_f = smallest_integer_halfwidth(&spec);

            let (h, _plan) = approximate_lipschitz(&spec, epsilon)?;
            let (adjusted, cert) = adjust_support(&h, n_f, epsilon, None)?;

            let mut owned: Vec<(String, OwnedEval, Option<f64>, f64)> = Vec::new();
            let w = readout_magnitude(&adjusted);
            owned.push((
                "relu+pool".to_string(),
                OwnedEval::Net(adjusted),
                Some(cert.outer_halfwidth),
                w,
            ));
            for (i, token) in catalog.split(',').map(str::trim).enumerate() {
                if token.is_empty() {
                    continue;
                }
                let (head, arg) = match token.split_once(':') {
                    Some((h, a)) => (h, Some(a)),
                    None => (token, None),
                };
                if head == "poly" {
                    let degree: usize = arg
                        .ok_or_else(|| Error::invalid("poly needs a degree, e.g. poly:8"))?
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad poly degree {arg:?}")))?;
                    let model = fit_polynomial(
                        &spec,
                        degree,
                        &spec.support_box,
                        samples.max(4 * (degree + 1) * (degree + 1)),
                        seed.wrapping_add(i as u64),
                    )?;
                    let wmax = model.max_coeff();
                    owned.push((format!("poly-{degree}"), OwnedEval::Poly(model), None, wmax));
                } else {
                    let kind = analytic_kind(head).ok_or_else(|| {
                        Error::invalid(format!(
                            "unknown catalog token {token:?}; expected sigmoid/tanh/softplus/swish/gelu/sin[:width] or poly:<degree>"
                        ))
                    })?;
                    let width: usize = match arg {
                        Some(a) => a
                            .parse()
                            .map_err(|_| Error::invalid(format!("bad width {a:?}")))?,
                        None => 64,
                    };
                    let cfg = FitConfig::new(kind, width, seed.wrapping_add(i as u64));
                    let net = fit_random_features(&spec, &cfg, &spec.support_box, samples)?;
                    let wmax = readout_magnitude(&net);
                    owned.push((format!("{head}-{width}"), OwnedEval::Net(net), None, wmax));
                }
            }

            let candidates: Vec<SepCandidate> = owned
                .iter()
                .map(|(label, ev, outer, wmax)| SepCandidate {
                    label: label.clone(),
                    eval: ev.as_eval(),
                    certified_outer: *outer,
                    max_out_weight: *wmax,
                })
                .collect();
            let sep_cfg = SeparationConfig { seed, ..SeparationConfig::default() };
            let report = separation_report(&spec, &candidates, &sep_cfg)?;

            println!(
                "# target {} (trivial: {}), tail annulus [{}, {}]",
                report.target_label, report.trivial_target, report.tail_inner, report.tail_outer
            );
            for row in &report.rows {
                println!(
                    "{:<12} sup={:<12.6e} l1={:<12.6e} tail={:<12.6e} certified={} nontrivial={}",
                    row.label, row.sup_error, row.l1_error, row.tail_mass,
                    row.certified_support, row.nontrivial
                );
            }
            if let Some(path) = out {
                let mut wtr = csv::Writer::from_path(&path)
                    .map_err(|e| Error::parse(path.display().to_string(), e))?;
                for row in &report.rows {
                    wtr.serialize(row)
                        .map_err(|e| Error::parse(path.display().to_string(), e))?;
                }
                wtr.flush()?;
                println!("# wrote {}", path.display());
            }
            Ok(true)
        }
        Cmd::Approximate { config } => {
            let mut cfg = PipelineConfig::load(&config)?;
            cfg.seed = env_seed(cfg.seed)?;
            let run = run_pipeline(&cfg)?;
            let mut all_ok = true;
            for row in &run.report.rows {
                if row.infeasible {
                    println!(
                        "eps {:<10} infeasible: {}",
                        row.eps,
                        row.diagnostic.as_deref().unwrap_or("")
                    );
                    continue;
                }
                let stats = row.stats.expect("feasible row has stats");
                println!(
                    "eps {:<10} certified={} sup={:.6e} l1={:.6e} outer={:.12} width={} depth={} pools={}",
                    row.eps,
                    row.certified,
                    row.sup_error_measured.unwrap_or(f64::NAN),
                    row.l1_error_measured.unwrap_or(f64::NAN),
                    row.support_outer_halfwidth.unwrap_or(f64::NAN),
                    stats.width,
                    stats.depth,
                    stats.pool_count,
                );
                all_ok &= row.certified;
            }
            if let Some(dir) = cfg.output_dir.clone() {
                for path in write_reports(&run, &cfg, &dir)? {
                    println!("# wrote {}", path.display());
                }
            }
            Ok(all_ok)
        }
        Cmd::Verify { net, cert, target } => {
            let seed = env_seed(0x7e57_ab1e)?;
            let f = serialize::load(&net)?;
            let certificate = load_cert(&cert)?;
            let spec = by_name(&target, f.input_dim())?;
            let report = verify_network(&f, &spec, &certificate, seed)?;
            for check in &report.checks {
                println!(
                    "{} {:<16} {}",
                    if check.passed { "PASS" } else { "FAIL" },
                    check.name,
                    check.detail
                );
            }
            println!("verify: {}", if report.passed { "PASS" } else { "FAIL" });
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
