//! Synthetic censored data with star-graph precision matrices, and the
//! comparison harness between the EM estimator and the impute-at-the-bound
//! baseline.

pub mod metrics;

use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::CensoredDataset;
use crate::em::EmOptions;
use crate::error::{Error, Result};
use crate::linalg;
use crate::truncmom::normal;
use crate::tuning::{self, grid_from_ratios, linear_ratios, FitMethod, PathOptions};

pub use metrics::{pr_metrics, MetricsReport, Target};

const SPD_MARGIN: f64 = 1e-3;
const SHRINK: f64 = 0.95;
const MAX_SHRINKS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    /// Fraction of response columns prone to censoring.
    pub censor_fraction: f64,
    /// Right-censoring probability of the censoring-prone columns.
    pub target_pi: f64,
    /// Right-censoring probability of the remaining columns.
    #[serde(default = "default_other_pi")]
    pub other_pi: f64,
    pub u: f64,
    pub edge_prob: f64,
    pub seed: u64,
}

fn default_other_pi() -> f64 {
    1e-6
}

impl SimScenario {
    /// `n = 100`, `p = q = 50`, 20% censoring-prone columns at 40%, bound 50.
    pub fn desk() -> Self {
        Self {
            n: 100,
            p: 50,
            q: 50,
            censor_fraction: 0.2,
            target_pi: 0.4,
            other_pi: 1e-6,
            u: 50.0,
            edge_prob: 0.2,
            seed: 2024,
        }
    }

    pub fn n_censored_columns(&self) -> usize {
        (self.censor_fraction * self.p as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 5 || self.q < 2 {
            return Err(Error::InvalidArgument("scenario needs n >= 2, p >= 5, q >= 2".into()));
        }
        if !(self.target_pi > 0.0 && self.target_pi < 1.0) || !(self.other_pi > 0.0 && self.other_pi < 1.0) {
            return Err(Error::InvalidArgument("censoring probabilities must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.censor_fraction) || !(0.0..=1.0).contains(&self.edge_prob) {
            return Err(Error::InvalidArgument("fractions must lie in [0, 1]".into()));
        }
        if !self.u.is_finite() {
            return Err(Error::InvalidArgument("censoring bound must be finite".into()));
        }
        Ok(())
    }

    /// Per-column right-censoring probabilities.
    pub fn column_pis(&self) -> Vec<f64> {
        let k = self.n_censored_columns();
        (0..self.p).map(|j| if j < k { self.target_pi } else { self.other_pi }).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// `(q+1) x p`, intercepts in row 0.
    pub b: Array2<f64>,
    pub theta: Array2<f64>,
    pub sigma_xx: Array2<f64>,
    /// Factor applied to the off-diagonal of `Theta` to keep it positive
    /// definite (1 when no repair was needed).
    pub theta_scaling: f64,
}

/// Deterministic seed of replicate `r`.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add((r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stars with one hub and four leaves at hubs `0, 5, 10, ...`; unit
/// diagonal, hub-leaf entries uniform on `[0.30, 0.35]`.
pub fn star_precision(p: usize, rng: &mut impl Rng) -> Result<(Array2<f64>, f64)> {
    let mut theta = Array2::<f64>::eye(p);
    for h in (0..p).step_by(5) {
        for j in 1..=4 {
            if h + j < p {
                let v = rng.gen_range(0.30..=0.35);
                theta[[h, h + j]] = v;
                theta[[h + j, h]] = v;
            }
        }
    }
    let mut scale = 1.0;
    for _ in 0..=MAX_SHRINKS {
        if linalg::min_eigenvalue(theta.view()) >= SPD_MARGIN {
            return Ok((theta, scale));
        }
        scale *= SHRINK;
        for h in 0..p {
            for k in 0..p {
                if h != k {
                    theta[[h, k]] *= SHRINK;
                }
            }
        }
    }
    Err(Error::NotPositiveDefinite("star precision after repair"))
}

/// Random-graph predictor covariance: adjacency with edge probability
/// `edge_prob`, precision `0.3 A` with diagonal `|lambda_min| + 0.2`,
/// inverted and scaled to unit diagonal.
pub fn random_graph_covariance(q: usize, edge_prob: f64, rng: &mut impl Rng) -> Result<Array2<f64>> {
    let mut omega = Array2::<f64>::zeros((q, q));
    for h in 0..q {
        for k in (h + 1)..q {
            if rng.gen::<f64>() < edge_prob {
                omega[[h, k]] = 0.3;
                omega[[k, h]] = 0.3;
            }
        }
    }
    let shift = linalg::min_eigenvalue(omega.view()).abs() + 0.2;
    for h in 0..q {
        omega[[h, h]] = shift;
    }
    let sigma = linalg::spd_inverse(omega.view())?;
    let d: Vec<f64> = sigma.diag().iter().map(|v| v.sqrt()).collect();
    Ok(Array2::from_shape_fn((q, q), |(h, k)| sigma[[h, k]] / (d[h] * d[k])))
}

/// Intercepts giving each column the marginal right-censoring probability
/// `pi_k`: `b0_k = u - z_{1-pi_k} sqrt((Theta^{-1})_kk + beta_k^T Sigma_xx beta_k)`.
pub fn calibrate_intercepts(
    slopes: &Array2<f64>,
    theta: &Array2<f64>,
    sigma_xx: &Array2<f64>,
    target_pi: &[f64],
    u: f64,
) -> Result<Array1<f64>> {
    let sigma = linalg::spd_inverse(theta.view())?;
    let p = theta.nrows();
    if slopes.ncols() != p || target_pi.len() != p || sigma_xx.nrows() != slopes.nrows() {
        return Err(Error::DimensionMismatch("intercept calibration shapes".into()));
    }
    Ok(Array1::from_shape_fn(p, |k| {
        let beta = slopes.column(k);
        let var = sigma[[k, k]] + beta.dot(&sigma_xx.dot(&beta));
        u - normal::upper_quantile(target_pi[k]) * var.sqrt()
    }))
}

pub fn gen_truth(scenario: &SimScenario) -> Result<GroundTruth> {
    scenario.validate()?;
    let (p, q) = (scenario.p, scenario.q);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let (theta, theta_scaling) = star_precision(p, &mut rng)?;
    let sigma_xx = random_graph_covariance(q, scenario.edge_prob, &mut rng)?;
    let mut slopes = Array2::<f64>::zeros((q, p));
    for k in 0..p {
        let mut s = index::sample(&mut rng, q, 2).into_vec();
        s.sort_unstable();
        for h in s {
            slopes[[h, k]] = rng.gen_range(0.3..=0.7);
        }
    }
    let b0 = calibrate_intercepts(&slopes, &theta, &sigma_xx, &scenario.column_pis(), scenario.u)?;
    let mut b = Array2::<f64>::zeros((q + 1, p));
    b.row_mut(0).assign(&b0);
    b.slice_mut(ndarray::s![1.., ..]).assign(&slopes);
    Ok(GroundTruth {
        b,
        theta,
        sigma_xx,
        theta_scaling,
    })
}

/// Draw `n` rows from the model and right-censor at `u`.
pub fn simulate(scenario: &SimScenario, truth: &GroundTruth, seed: u64) -> Result<CensoredDataset<f64>> {
    let (n, p, q) = (scenario.n, scenario.p, scenario.q);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lx = linalg::cholesky(truth.sigma_xx.view())?;
    let sigma = linalg::spd_inverse(truth.theta.view())?;
    let le = linalg::cholesky(sigma.view())?;
    let zx = Array2::from_shape_simple_fn((n, q), || rng.sample::<f64, _>(StandardNormal));
    let ze = Array2::from_shape_simple_fn((n, p), || rng.sample::<f64, _>(StandardNormal));
    let x = zx.dot(&lx.t());
    let eps = ze.dot(&le.t());
    let mut design = Array2::<f64>::ones((n, q + 1));
    design.slice_mut(ndarray::s![.., 1..]).assign(&x);
    let y = design.dot(&truth.b) + eps;
    CensoredDataset::from_raw(
        y,
        Array1::from_elem(p, f64::NEG_INFINITY),
        Array1::from_elem(p, scenario.u),
        x,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cglasso,
    ImputeAtLimit,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cglasso => "cglasso",
            Method::ImputeAtLimit => "impute-at-limit",
        }
    }

    fn fit_method(self) -> FitMethod {
        match self {
            Method::Cglasso => FitMethod::Em,
            Method::ImputeAtLimit => FitMethod::ImputeAtLimit,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub scenario: SimScenario,
    pub n_replicates: usize,
    pub methods: Vec<Method>,
    /// Fixed ratios of the other penalty to its maximum.
    pub ratios: Vec<f64>,
    /// Points along each swept penalty.
    pub n_path: usize,
    pub min_ratio: f64,
    pub em: EmOptions<f64>,
}

impl BenchConfig {
    pub fn new(scenario: SimScenario, n_replicates: usize) -> Self {
        Self {
            scenario,
            n_replicates,
            methods: vec![Method::Cglasso, Method::ImputeAtLimit],
            ratios: vec![1.0, 0.75, 0.5, 0.25],
            n_path: 10,
            min_ratio: 0.1,
            em: EmOptions::default(),
        }
    }
}

/// Metrics of one method on one replicate at one fixed ratio.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub method: Method,
    pub replicate: usize,
    pub ratio: f64,
    pub target: Target,
    pub auc: f64,
    pub min_mse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchFailure {
    pub method: Method,
    pub replicate: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub ratio: f64,
    pub target: Target,
    pub metric: &'static str,
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub failures: Vec<BenchFailure>,
    pub truth: GroundTruth,
}

impl BenchReport {
    /// Per-replicate metric averaged over the fixed ratios.
    pub fn replicate_means(&self, method: Method, target: Target, metric: &str) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for r in self.rows.iter().filter(|r| r.method == method && r.target == target) {
            let v = if metric == "auc" { r.auc } else { r.min_mse };
            match out.iter_mut().find(|e| e.0 == r.replicate) {
                Some(e) => {
                    e.1 += v;
                    e.2 += 1;
                }
                None => out.push((r.replicate, v, 1)),
            }
        }
        out.into_iter().map(|(i, s, c)| (i, s / c as f64)).collect()
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(Method, f64, Target)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|k| k.0 == r.method && k.1 == r.ratio && k.2 == r.target) {
                keys.push((r.method, r.ratio, r.target));
            }
        }
        let mut out = Vec::new();
        for (method, ratio, target) in keys {
            for metric in ["auc", "min_mse"] {
                let vals: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.method == method && r.ratio == ratio && r.target == target)
                    .map(|r| if metric == "auc" { r.auc } else { r.min_mse })
                    .collect();
                let (mean, se) = mean_se(&vals);
                out.push(SummaryRow {
                    method,
                    ratio,
                    target,
                    metric,
                    mean,
                    std_error: se,
                    count: vals.len(),
                });
            }
        }
        out
    }

    pub fn rows_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("# precision is 1 for an empty estimated support\n");
        s.push_str("# AUC: trapezoid over recall-sorted points (best precision per recall), extended to recall 0 and to (1, prevalence)\n");
        s.push_str("method,replicate,ratio,target,auc,min_mse\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.method.name(),
                r.replicate,
                r.ratio,
                r.target.name(),
                r.auc,
                r.min_mse
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("method,ratio,target,metric,mean,std_error,count\n");
        for r in self.summary() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.method.name(),
                r.ratio,
                r.target.name(),
                r.metric,
                r.mean,
                r.std_error,
                r.count
            );
        }
        s
    }

    /// Long format: `method,ratio,replicate,metric,value`.
    pub fn long_csv(&self) -> String {
        let mut s = String::from("method,ratio,replicate,metric,value\n");
        for r in &self.rows {
            for (m, v) in [("auc", r.auc), ("min_mse", r.min_mse)] {
                let _ = writeln!(
                    s,
                    "{},{},{},{}_{},{}",
                    r.method.name(),
                    r.ratio,
                    r.replicate,
                    m,
                    r.target.name(),
                    v
                );
            }
        }
        s
    }

    pub fn failures_csv(&self) -> String {
        let mut s = String::from("method,replicate,message\n");
        for f in &self.failures {
            let _ = writeln!(s, "{},{},\"{}\"", f.method.name(), f.replicate, f.message.replace('"', "'"));
        }
        s
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Metrics of one method on one dataset: the `Theta` paths sweep `rho` at
/// each fixed `lambda / lambda_max`, the `B` paths sweep `lambda` at each
/// fixed `rho / rho_max`.
pub fn evaluate_method(
    dataset: &CensoredDataset<f64>,
    truth: &GroundTruth,
    method: Method,
    cfg: &BenchConfig,
    replicate: usize,
) -> Result<Vec<BenchRow>> {
    let base = match method {
        Method::Cglasso => dataset.clone(),
        Method::ImputeAtLimit => dataset.clamped(),
    };
    let bound = tuning::lambda_rho_max(&base)?;
    let opts = PathOptions {
        em: cfg.em,
        method: method.fit_method(),
        ..PathOptions::default()
    };
    let sweep = linear_ratios(cfg.n_path, cfg.min_ratio);
    let mut rows = Vec::new();

    let grid = grid_from_ratios(bound.lambda_max, bound.rho_max, &cfg.ratios, &sweep)?;
    let path = tuning::fit_path(dataset, &grid, &bound.null_estimate, &opts)?;
    for (li, &ratio) in cfg.ratios.iter().enumerate() {
        let ests = (0..sweep.len())
            .map(|ri| match &path.point(li, ri).fit {
                Ok(f) => Ok(f.estimate.theta.clone()),
                Err(e) => Err(Error::InvalidArgument(e.clone())),
            })
            .collect::<Result<Vec<_>>>()?;
        let m = pr_metrics(&ests, &truth.theta, Target::Theta)?;
        rows.push(BenchRow {
            method,
            replicate,
            ratio,
            target: Target::Theta,
            auc: m.auc,
            min_mse: m.min_mse,
        });
    }

    let grid = grid_from_ratios(bound.lambda_max, bound.rho_max, &sweep, &cfg.ratios)?;
    let path = tuning::fit_path(dataset, &grid, &bound.null_estimate, &opts)?;
    for (ri, &ratio) in cfg.ratios.iter().enumerate() {
        let ests = (0..sweep.len())
            .map(|li| match &path.point(li, ri).fit {
                Ok(f) => Ok(f.estimate.b.clone()),
                Err(e) => Err(Error::InvalidArgument(e.clone())),
            })
            .collect::<Result<Vec<_>>>()?;
        let m = pr_metrics(&ests, &truth.b, Target::B)?;
        rows.push(BenchRow {
            method,
            replicate,
            ratio,
            target: Target::B,
            auc: m.auc,
            min_mse: m.min_mse,
        });
    }
    Ok(rows)
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    let truth = gen_truth(&cfg.scenario)?;
    let per_rep: Vec<(Vec<BenchRow>, Vec<BenchFailure>)> = (0..cfg.n_replicates)
        .into_par_iter()
        .map(|r| {
            let mut rows = Vec::new();
            let mut failures = Vec::new();
            let data = simulate(&cfg.scenario, &truth, replicate_seed(cfg.scenario.seed, r));
            for &method in &cfg.methods {
                let res = data
                    .as_ref()
                    .map_err(|e| Error::InvalidArgument(e.to_string()))
                    .and_then(|d| evaluate_method(d, &truth, method, cfg, r));
                match res {
                    Ok(mut v) => rows.append(&mut v),
                    Err(e) => failures.push(BenchFailure {
                        method,
                        replicate: r,
                        message: e.to_string(),
                    }),
                }
            }
            (rows, failures)
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (mut r, mut f) in per_rep {
        rows.append(&mut r);
        failures.append(&mut f);
    }
    Ok(BenchReport { rows, failures, truth })
}
