use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::{Array1, Array2};
use serde::Serialize;

use ccglasso::em::{fit_em, fit_impute_at_limit, EmOptions, LoglikMode};
use ccglasso::simbench::{self, BenchConfig, SimScenario};
use ccglasso::truncmom::{mc, trunc_moments_approx, TruncRegion};
use ccglasso::tuning::{self, fit_path, make_grid, BicMode, FitMethod, PathOptions};
use ccglasso::{load_dataset, BoundSpec, CensoredDataset64, MomentMode};

use super::output::{self, Diagnostics};
use super::{BenchArgs, BicArg, DataArgs, FitArgs, MethodArg, MomentModeArg, MomentsArgs, PathArgs, ScenarioArgs, SimulateArgs, SolverArgs};

fn bound(spec: Option<&str>, default: f64) -> Result<BoundSpec> {
    match spec {
        None => Ok(BoundSpec::Global(default)),
        Some(s) => match s.trim().parse::<f64>() {
            Ok(v) => Ok(BoundSpec::Global(v)),
            Err(_) => BoundSpec::from_file(Path::new(s)).with_context(|| format!("reading bounds from {s}")),
        },
    }
}

fn load(args: &DataArgs) -> Result<CensoredDataset64> {
    let lower = bound(args.lower.as_deref(), f64::NEG_INFINITY)?;
    let upper = bound(args.upper.as_deref(), f64::INFINITY)?;
    Ok(load_dataset(&args.responses, &args.predictors, &lower, &upper)?)
}

fn names(given: Option<&[String]>, prefix: &str, len: usize) -> Vec<String> {
    given
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| (1..=len).map(|k| format!("{prefix}{k}")).collect())
}

fn response_names(ds: &CensoredDataset64) -> Vec<String> {
    names(ds.column_names(), "y", ds.p())
}

fn predictor_names(ds: &CensoredDataset64) -> Vec<String> {
    names(ds.predictor_names(), "x", ds.q())
}

fn em_options(s: &SolverArgs) -> Result<EmOptions<f64>> {
    if !(s.tol > 0.0) {
        bail!("--tol must be positive");
    }
    if s.max_iter == 0 {
        bail!("--max-iter must be at least 1");
    }
    let mode = match s.moment_mode {
        MomentModeArg::Approx => MomentMode::Approx,
        MomentModeArg::Mc => {
            if s.mc_samples < 2 {
                bail!("--mc-samples must be at least 2");
            }
            MomentMode::ExactMc {
                seed: s.seed,
                n_samples: s.mc_samples,
            }
        }
    };
    Ok(EmOptions {
        outer_tol: s.tol,
        max_em_iter: s.max_iter,
        mode,
        ..EmOptions::default()
    })
}

fn method_name(m: MethodArg) -> &'static str {
    match m {
        MethodArg::Em => "em",
        MethodArg::Impute => "impute",
    }
}

fn mode_name(m: MomentModeArg) -> &'static str {
    match m {
        MomentModeArg::Approx => "approx",
        MomentModeArg::Mc => "mc",
    }
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn fit(args: &FitArgs) -> Result<bool> {
    let opts = em_options(&args.solver)?;
    let ds = load(&args.data)?;
    let base = match args.solver.method {
        MethodArg::Em => ds.clone(),
        MethodArg::Impute => ds.clamped(),
    };
    let boundary = tuning::lambda_rho_max(&base)?;
    let lambda = args.lambda.unwrap_or(boundary.lambda_max);
    let rho = args.rho.unwrap_or(boundary.rho_max);
    let fit = match args.solver.method {
        MethodArg::Em => fit_em(&ds, lambda, rho, &boundary.null_estimate, &opts)?,
        MethodArg::Impute => fit_impute_at_limit(&ds, lambda, rho, &boundary.null_estimate, &opts)?,
    };
    out_dir(&args.out_dir)?;
    let rec = fit.estimate.to_record(&response_names(&ds), &predictor_names(&ds));
    output::write_json(&args.out_dir, "estimate.json", &rec)?;
    output::write_text(&args.out_dir, "edges.csv", &output::edges_csv(&rec))?;
    output::write_text(&args.out_dir, "diagonal.csv", &output::diagonal_csv(&rec))?;
    let diag = Diagnostics::new(&fit, method_name(args.solver.method), mode_name(args.solver.moment_mode));
    output::write_json(&args.out_dir, "diagnostics.json", &diag)?;
    if !fit.converged {
        eprintln!(
            "warning: EM stopped after {} iterations without meeting the tolerance",
            fit.em_iterations
        );
    }
    Ok(fit.converged)
}

#[derive(Serialize)]
struct Selected<'a> {
    bic_mode: &'a str,
    method: &'a str,
    moment_mode: &'a str,
    order: &'a str,
    lambda_max: f64,
    rho_max: f64,
    lambdas: &'a [f64],
    rhos: &'a [f64],
    selected_index: Option<usize>,
    lambda: Option<f64>,
    rho: Option<f64>,
    bic: Option<f64>,
    estimate: Option<ccglasso::model::EstimateRecord>,
}

pub fn path(args: &PathArgs) -> Result<bool> {
    let opts = em_options(&args.solver)?;
    if !(args.min_ratio > 0.0 && args.min_ratio < 1.0) {
        bail!("--min-ratio must lie in (0, 1)");
    }
    let ds = load(&args.data)?;
    let base = match args.solver.method {
        MethodArg::Em => ds.clone(),
        MethodArg::Impute => ds.clamped(),
    };
    let boundary = tuning::lambda_rho_max(&base)?;
    let grid = make_grid(
        boundary.lambda_max,
        boundary.rho_max,
        args.n_lambda,
        args.n_rho,
        args.min_ratio,
        args.min_ratio,
    )?;
    let bic = match args.bic {
        BicArg::Approx => BicMode::Approx,
        BicArg::Exact => match args.solver.moment_mode {
            MomentModeArg::Approx => BicMode::Exact(LoglikMode::Quadrature),
            MomentModeArg::Mc => BicMode::Exact(LoglikMode::Mc {
                seed: args.solver.seed,
                n_samples: args.solver.mc_samples,
            }),
        },
    };
    let popts = PathOptions {
        em: opts,
        method: match args.solver.method {
            MethodArg::Em => FitMethod::Em,
            MethodArg::Impute => FitMethod::ImputeAtLimit,
        },
        bic,
        warm_start: true,
    };
    let path = fit_path(&ds, &grid, &boundary.null_estimate, &popts)?;
    out_dir(&args.out_dir)?;
    output::write_text(&args.out_dir, "path.csv", &output::path_csv(&path))?;
    let sel = path.selected_point();
    let rec = sel
        .and_then(|pt| pt.fit.as_ref().ok())
        .map(|f| f.estimate.to_record(&response_names(&ds), &predictor_names(&ds)));
    let selected = Selected {
        bic_mode: match args.bic {
            BicArg::Approx => "approx",
            BicArg::Exact => "exact",
        },
        method: method_name(args.solver.method),
        moment_mode: mode_name(args.solver.moment_mode),
        order: "lambda descending (outer), rho descending (inner), warm-started",
        lambda_max: grid.lambda_max,
        rho_max: grid.rho_max,
        lambdas: &grid.lambdas,
        rhos: &grid.rhos,
        selected_index: path.selected,
        lambda: sel.map(|p| p.lambda),
        rho: sel.map(|p| p.rho),
        bic: sel.and_then(|p| p.bic),
        estimate: rec,
    };
    output::write_json(&args.out_dir, "selected.json", &selected)?;
    if let Some(rec) = &selected.estimate {
        output::write_text(&args.out_dir, "edges.csv", &output::edges_csv(rec))?;
        output::write_text(&args.out_dir, "diagonal.csv", &output::diagonal_csv(rec))?;
    }
    let failed = path.points.iter().filter(|p| p.fit.is_err()).count();
    if failed > 0 {
        eprintln!("warning: {failed} grid points failed");
    }
    if path.selected.is_none() {
        bail!("no grid point produced a usable fit");
    }
    let all_converged = path
        .points
        .iter()
        .all(|p| p.fit.as_ref().map_or(false, |f| f.converged));
    Ok(all_converged)
}

fn read_scenario(path: &Path) -> Result<SimScenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_toml = path.extension().map_or(false, |e| e == "toml");
    if is_toml {
        Ok(toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
    } else {
        Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
    }
}

fn smoke_scenario() -> SimScenario {
    SimScenario {
        n: 50,
        p: 10,
        q: 10,
        ..SimScenario::desk()
    }
}

fn scenario(args: &ScenarioArgs, default: SimScenario) -> Result<SimScenario> {
    let mut s = match &args.scenario {
        Some(p) => read_scenario(p)?,
        None => default,
    };
    if let Some(v) = args.n {
        s.n = v;
    }
    if let Some(v) = args.p {
        s.p = v;
    }
    if let Some(v) = args.q {
        s.q = v;
    }
    if let Some(v) = args.censor_fraction {
        s.censor_fraction = v;
    }
    if let Some(v) = args.target_pi {
        s.target_pi = v;
    }
    if let Some(v) = args.u {
        s.u = v;
    }
    if let Some(v) = args.seed {
        s.seed = v;
    }
    s.validate()?;
    Ok(s)
}

pub fn simulate(args: &SimulateArgs) -> Result<bool> {
    let sc = scenario(&args.scenario, smoke_scenario())?;
    let truth = simbench::gen_truth(&sc)?;
    let ds = simbench::simulate(&sc, &truth, simbench::replicate_seed(sc.seed, args.replicate))?;
    out_dir(&args.out_dir)?;
    ccglasso::dataio::write_dataset(&ds, &args.out_dir.join("responses.csv"), &args.out_dir.join("predictors.csv"))?;
    let rn = response_names(&ds);
    let mut pn = vec!["(Intercept)".to_string()];
    pn.extend(predictor_names(&ds));
    let b_header: Vec<String> = std::iter::once("row".to_string()).chain(rn.iter().cloned()).collect();
    let mut b_rows = String::from(&*b_header.join(","));
    b_rows.push('\n');
    for (name, row) in pn.iter().zip(truth.b.rows()) {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        b_rows.push_str(&format!("{},{}\n", name, vals.join(",")));
    }
    output::write_text(&args.out_dir, "true_b.csv", &b_rows)?;
    output::write_text(&args.out_dir, "true_theta.csv", &output::matrix_csv(&truth.theta, &rn))?;
    output::write_json(&args.out_dir, "scenario.json", &sc)?;
    Ok(true)
}

pub fn bench(args: &BenchArgs) -> Result<bool> {
    let (default, reps) = if args.full {
        (SimScenario::desk(), 20)
    } else {
        (smoke_scenario(), 1)
    };
    let sc = scenario(&args.scenario, default)?;
    let mut cfg = BenchConfig::new(sc, args.replicates.unwrap_or(reps));
    if cfg.n_replicates == 0 {
        bail!("--replicates must be at least 1");
    }
    if !(args.min_ratio > 0.0 && args.min_ratio < 1.0) || args.n_path < 2 {
        bail!("--n-path must be at least 2 and --min-ratio must lie in (0, 1)");
    }
    cfg.n_path = args.n_path;
    cfg.min_ratio = args.min_ratio;
    let report = simbench::run_benchmark(&cfg)?;
    out_dir(&args.out_dir)?;
    output::write_text(&args.out_dir, "bench_rows.csv", &report.rows_csv())?;
    output::write_text(&args.out_dir, "bench_summary.csv", &report.summary_csv())?;
    output::write_text(&args.out_dir, "bench_long.csv", &report.long_csv())?;
    output::write_text(&args.out_dir, "bench_failures.csv", &report.failures_csv())?;
    output::write_json(&args.out_dir, "scenario.json", &cfg.scenario)?;
    if !report.failures.is_empty() {
        eprintln!("warning: {} method/replicate runs failed and were excluded", report.failures.len());
    }
    Ok(true)
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("--{what}: cannot parse {t:?}"))
        })
        .collect()
}

#[derive(Serialize)]
struct MomentsOut {
    mode: &'static str,
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_se: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceptance_rate: Option<f64>,
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn moments(args: &MomentsArgs) -> Result<bool> {
    let mean = Array1::from(parse_list(&args.mean, "mean")?);
    let k = mean.len();
    let cov = parse_list(&args.cov, "cov")?;
    if cov.len() != k * k {
        bail!("--cov needs {} entries for a mean of length {k}", k * k);
    }
    let cov = Array2::from_shape_vec((k, k), cov)?;
    let region = TruncRegion::new(
        Array1::from(parse_list(&args.lower, "lower")?),
        Array1::from(parse_list(&args.upper, "upper")?),
    )?;
    let out = match args.moment_mode {
        MomentModeArg::Approx => {
            let m = trunc_moments_approx(mean.view(), cov.view(), &region)?;
            MomentsOut {
                mode: "approx",
                mean: m.mean.to_vec(),
                covariance: rows(&m.covariance()),
                mean_se: None,
                acceptance_rate: None,
            }
        }
        MomentModeArg::Mc => {
            let r = mc::trunc_moments_mc(mean.view(), cov.view(), &region, args.mc_samples, args.seed)?;
            MomentsOut {
                mode: "mc",
                mean: r.moments.mean.to_vec(),
                covariance: rows(&r.moments.covariance()),
                mean_se: Some(r.mean_se.to_vec()),
                acceptance_rate: Some(r.accepted as f64 / r.proposed.max(1) as f64),
            }
        }
    };
    match &args.out_dir {
        Some(d) => {
            out_dir(d)?;
            output::write_json(d, "moments.json", &out)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&out)?),
    }
    Ok(true)
}
