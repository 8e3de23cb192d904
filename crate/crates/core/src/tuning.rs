//! Penalty boundaries, tuning grids, warm-started paths and BIC selection.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataio::{CensoredDataset, LEFT, RIGHT};
use crate::em::{self, fit_em, fit_impute_at_limit, EmOptions, FitResult, LoglikMode};
use crate::error::{Error, Result};
use crate::estep::{conditional_cov, impute_moments, MomentMode};
use crate::model::ModelEstimate;
use crate::multilasso::centered_gradient;
use crate::truncmom::normal;
use crate::Scalar;

/// Marginal maximum-likelihood estimates of every response column.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFit<F> {
    pub mu: Array1<F>,
    pub sigma2: Array1<F>,
}

/// Maximum-likelihood `(mu, sigma2)` of a censored univariate Gaussian
/// sample. Newton's method on `(delta, tau) = (mu / sigma, 1 / sigma)`, in
/// which the log-likelihood is concave.
pub fn marginal_censored_mle<F: Scalar>(
    y: ArrayView1<F>,
    status: ArrayView1<i8>,
    lower: F,
    upper: F,
) -> Result<(F, F)> {
    let n_obs = status.iter().filter(|&&s| s != LEFT && s != RIGHT).count();
    if n_obs == 0 || y.len() != status.len() {
        return Err(Error::NonIdentifiable(0));
    }
    let obs: Vec<f64> = y
        .iter()
        .zip(status.iter())
        .filter(|(_, &s)| s != LEFT && s != RIGHT)
        .map(|(v, _)| v.as_f64())
        .collect();
    let n_right = status.iter().filter(|&&s| s == RIGHT).count() as f64;
    let n_left = status.iter().filter(|&&s| s == LEFT).count() as f64;
    let m = obs.len() as f64;
    let mean = obs.iter().sum::<f64>() / m;
    let var = obs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    if n_right == 0.0 && n_left == 0.0 {
        if !(var > 0.0) {
            return Err(Error::NonIdentifiable(0));
        }
        return Ok((F::lit(mean), F::lit(var)));
    }
    let (l, u) = (lower.as_f64(), upper.as_f64());

    // log-likelihood, gradient and Hessian in (delta, tau)
    let eval = |d: f64, t: f64| -> (f64, [f64; 2], [f64; 3]) {
        let mut f = 0.0;
        let mut g = [0.0; 2];
        let mut h = [0.0; 3];
        for &v in &obs {
            let r = t * v - d;
            f += t.ln() - 0.5 * r * r;
            g[0] += r;
            g[1] += 1.0 / t - r * v;
            h[0] -= 1.0;
            h[1] += v;
            h[2] -= 1.0 / (t * t) + v * v;
        }
        // tail term ln P(Z > z), z = t c - d, with multiplicity `w`
        let mut tail = |c: f64, w: f64, sign: f64| {
            if w == 0.0 {
                return;
            }
            let z = sign * (t * c - d);
            let haz = if z >= 0.0 {
                1.0 / normal::tail_ratio(z)
            } else {
                normal::pdf(z) / normal::sf(z)
            };
            f += w * normal::ln_sf(z);
            let d1 = -haz; // d/dz ln sf
            let d2 = -haz * (haz - z);
            // dz/dd = -sign, dz/dt = sign c
            g[0] += w * d1 * -sign;
            g[1] += w * d1 * sign * c;
            h[0] += w * d2;
            h[1] += w * d2 * -c;
            h[2] += w * d2 * c * c;
        };
        tail(u, n_right, 1.0);
        tail(l, n_left, -1.0);
        (f, g, h)
    };

    let sd = var.sqrt().max(1e-3 * (1.0 + mean.abs()));
    let (mut d, mut t) = (mean / sd, 1.0 / sd);
    let (mut f, mut g, mut h) = eval(d, t);
    for _ in 0..200 {
        let det = h[0] * h[2] - h[1] * h[1];
        let (sd_, st) = if det > 0.0 && h[0] < 0.0 {
            (-(h[2] * g[0] - h[1] * g[1]) / det, -(h[0] * g[1] - h[1] * g[0]) / det)
        } else {
            (g[0], g[1])
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let (dn, tn) = (d + step * sd_, t + step * st);
            if tn > 0.0 {
                let (fn_, gn, hn) = eval(dn, tn);
                if fn_.is_finite() && fn_ >= f - 1e-12 * f.abs() {
                    d = dn;
                    t = tn;
                    f = fn_;
                    g = gn;
                    h = hn;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        let gnorm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if gnorm < 1e-10 * (1.0 + y.len() as f64) {
            break;
        }
        if !accepted || !(t.is_finite()) || t > 1e12 {
            return Err(Error::NonIdentifiable(0));
        }
    }
    let gnorm = (g[0] * g[0] + g[1] * g[1]).sqrt();
    if !(gnorm < 1e-6 * (1.0 + y.len() as f64)) {
        return Err(Error::NonIdentifiable(0));
    }
    Ok((F::lit(d / t), F::lit(1.0 / (t * t))))
}

pub fn marginal_fit<F: Scalar>(dataset: &CensoredDataset<F>) -> Result<MarginalFit<F>> {
    let p = dataset.p();
    let mut mu = Array1::zeros(p);
    let mut sigma2 = Array1::zeros(p);
    for k in 0..p {
        let (m, s) = marginal_censored_mle(
            dataset.y().column(k),
            dataset.status().column(k),
            dataset.lower()[k],
            dataset.upper()[k],
        )
        .map_err(|_| Error::NonIdentifiable(k))?;
        mu[k] = m;
        sigma2[k] = s;
    }
    Ok(MarginalFit { mu, sigma2 })
}

/// Null model: intercepts at the marginal means, zero slopes, diagonal
/// precision from the marginal variances.
pub fn null_estimate<F: Scalar>(dataset: &CensoredDataset<F>) -> Result<ModelEstimate<F>> {
    let m = marginal_fit(dataset)?;
    Ok(ModelEstimate::null(dataset.q(), &m.mu, &m.sigma2))
}

#[derive(Debug, Clone)]
pub struct Boundary<F> {
    pub lambda_max: F,
    pub rho_max: F,
    pub null_estimate: ModelEstimate<F>,
}

/// Smallest penalties at which the null model solves the problem.
///
/// `lambda_max = max_{h,k} n^{-1} |X_h^T (y^_k - mean(y^_k))|` and
/// `rho_max = max_{h != k} |S^_hk|`, both at the moments imputed under the
/// null model.
pub fn lambda_rho_max<F: Scalar>(dataset: &CensoredDataset<F>) -> Result<Boundary<F>> {
    let null = null_estimate(dataset)?;
    let m = impute_moments(dataset, &null, MomentMode::Approx)?;
    let (p, q1) = (dataset.p(), dataset.q() + 1);
    let mut lambda_max = F::zero();
    let mut b = Array2::<F>::zeros((q1, p));
    for k in 0..p {
        let y: Vec<F> = m.y_hat.column(k).to_vec();
        b[[0, k]] = y.iter().copied().sum::<F>() / F::from_count(y.len());
        for h in 1..q1 {
            let x: Vec<F> = m.design.column(h).to_vec();
            lambda_max = lambda_max.max(centered_gradient(&x, &y).abs());
        }
    }
    let s = conditional_cov(&m, b.view())?;
    let mut rho_max = F::zero();
    for h in 0..p {
        for k in 0..p {
            if h != k {
                rho_max = rho_max.max(s[[h, k]].abs());
            }
        }
    }
    Ok(Boundary {
        lambda_max,
        rho_max,
        null_estimate: null,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningGrid<F> {
    pub lambdas: Vec<F>,
    pub rhos: Vec<F>,
    pub lambda_max: F,
    pub rho_max: F,
}

/// Geometric `lambda` sequence and evenly spaced `rho` sequence, both
/// descending from their maxima.
pub fn make_grid<F: Scalar>(
    lambda_max: F,
    rho_max: F,
    n_lambda: usize,
    n_rho: usize,
    lambda_min_ratio: F,
    rho_min_ratio: F,
) -> Result<TuningGrid<F>> {
    if n_lambda < 1 || n_rho < 1 {
        return Err(Error::InvalidArgument("grid sizes must be at least 1".into()));
    }
    for r in [lambda_min_ratio, rho_min_ratio] {
        if !(r > F::zero() && r < F::one()) {
            return Err(Error::InvalidArgument(format!("min ratio {} outside (0, 1)", r)));
        }
    }
    let lambdas = (0..n_lambda)
        .map(|i| {
            if i == 0 {
                lambda_max
            } else {
                let f = F::from_count(i) / F::from_count(n_lambda - 1);
                lambda_max * lambda_min_ratio.powf(f)
            }
        })
        .collect();
    let rhos = linear_ratios(n_rho, rho_min_ratio)
        .into_iter()
        .map(|r| if r == F::one() { rho_max } else { rho_max * r })
        .collect();
    Ok(TuningGrid {
        lambdas,
        rhos,
        lambda_max,
        rho_max,
    })
}

/// `n` evenly spaced ratios from 1 down to `min_ratio`.
pub fn linear_ratios<F: Scalar>(n: usize, min_ratio: F) -> Vec<F> {
    if n == 1 {
        return vec![F::one()];
    }
    (0..n)
        .map(|i| F::one() - (F::one() - min_ratio) * F::from_count(i) / F::from_count(n - 1))
        .collect()
}

/// Grid from explicit ratios of the maxima.
pub fn grid_from_ratios<F: Scalar>(
    lambda_max: F,
    rho_max: F,
    lambda_ratios: &[F],
    rho_ratios: &[F],
) -> Result<TuningGrid<F>> {
    if lambda_ratios.is_empty() || rho_ratios.is_empty() {
        return Err(Error::InvalidArgument("empty ratio list".into()));
    }
    let scale = |m: F, r: &[F]| -> Vec<F> { r.iter().map(|&x| if x == F::one() { m } else { m * x }).collect() };
    Ok(TuningGrid {
        lambdas: scale(lambda_max, lambda_ratios),
        rhos: scale(rho_max, rho_ratios),
        lambda_max,
        rho_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Em,
    ImputeAtLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BicMode {
    Approx,
    Exact(LoglikMode),
}

#[derive(Debug, Clone)]
pub struct PathPoint<F> {
    pub lambda_index: usize,
    pub rho_index: usize,
    pub lambda: F,
    pub rho: F,
    /// Grid point whose estimate initialized this fit (`None` for the null model).
    pub warm_start: Option<(usize, usize)>,
    pub fit: std::result::Result<FitResult<F>, String>,
    pub bic: Option<F>,
    pub df: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct PathResult<F> {
    pub grid: TuningGrid<F>,
    /// Points in fitting order: lambda outer (descending), rho inner.
    pub points: Vec<PathPoint<F>>,
    pub bic_mode: BicMode,
    pub selected: Option<usize>,
}

impl<F: Scalar> PathResult<F> {
    pub fn point(&self, lambda_index: usize, rho_index: usize) -> &PathPoint<F> {
        &self.points[lambda_index * self.grid.rhos.len() + rho_index]
    }

    pub fn selected_point(&self) -> Option<&PathPoint<F>> {
        self.selected.map(|i| &self.points[i])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PathOptions<F> {
    pub em: EmOptions<F>,
    pub method: FitMethod,
    pub bic: BicMode,
    /// Warm-start along the path; when false every point starts from the null model.
    pub warm_start: bool,
}

impl<F: Scalar> Default for PathOptions<F> {
    fn default() -> Self {
        Self {
            em: EmOptions::default(),
            method: FitMethod::Em,
            bic: BicMode::Approx,
            warm_start: true,
        }
    }
}

pub fn fit_one<F: Scalar>(
    dataset: &CensoredDataset<F>,
    method: FitMethod,
    lambda: F,
    rho: F,
    init: &ModelEstimate<F>,
    opts: &EmOptions<F>,
) -> Result<FitResult<F>> {
    match method {
        FitMethod::Em => fit_em(dataset, lambda, rho, init, opts),
        FitMethod::ImputeAtLimit => fit_impute_at_limit(dataset, lambda, rho, init, opts),
    }
}

/// Fit every grid point. For each `lambda` (descending) the `rho` values are
/// visited from largest to smallest, each warm-started from the previous
/// one; the first point of a `lambda` column starts from the first point of
/// the previous column. Columns run in parallel once their first point is
/// available; results do not depend on scheduling.
pub fn fit_path<F: Scalar>(
    dataset: &CensoredDataset<F>,
    grid: &TuningGrid<F>,
    null: &ModelEstimate<F>,
    opts: &PathOptions<F>,
) -> Result<PathResult<F>> {
    let (nl, nr) = (grid.lambdas.len(), grid.rhos.len());
    if nl == 0 || nr == 0 {
        return Err(Error::EmptyPath);
    }
    let run = |li: usize, ri: usize, init: &ModelEstimate<F>, from: Option<(usize, usize)>| {
        let (lambda, rho) = (grid.lambdas[li], grid.rhos[ri]);
        let fit = fit_one(dataset, opts.method, lambda, rho, init, &opts.em).map_err(|e| e.to_string());
        PathPoint {
            lambda_index: li,
            rho_index: ri,
            lambda,
            rho,
            warm_start: from,
            fit,
            bic: None,
            df: None,
        }
    };
    let warm = |pt: &PathPoint<F>| -> Option<ModelEstimate<F>> {
        if opts.warm_start {
            pt.fit.as_ref().ok().map(|f| f.estimate.clone())
        } else {
            None
        }
    };

    // first point of every lambda column, sequentially
    let mut heads: Vec<PathPoint<F>> = Vec::with_capacity(nl);
    for li in 0..nl {
        let prev = heads.last().and_then(|p| warm(p).map(|e| (e, (p.lambda_index, 0))));
        let pt = match prev {
            Some((init, from)) => run(li, 0, &init, Some(from)),
            None => run(li, 0, null, None),
        };
        heads.push(pt);
    }
    let columns: Vec<Vec<PathPoint<F>>> = heads
        .into_par_iter()
        .map(|head| {
            let li = head.lambda_index;
            let mut col = vec![head];
            for ri in 1..nr {
                let last = col.last().expect("column head");
                let pt = match warm(last) {
                    Some(init) => run(li, ri, &init, Some((li, ri - 1))),
                    None => run(li, ri, null, None),
                };
                col.push(pt);
            }
            col
        })
        .collect();
    let mut points: Vec<PathPoint<F>> = columns.into_iter().flatten().collect();

    let scored: Vec<(Option<F>, Option<usize>)> = points
        .par_iter()
        .map(|pt| match &pt.fit {
            Ok(fit) => {
                let df = degrees_of_freedom(&fit.estimate);
                (bic(fit, dataset, opts.bic).ok(), Some(df))
            }
            Err(_) => (None, None),
        })
        .collect();
    for (pt, (b, df)) in points.iter_mut().zip(scored) {
        pt.bic = b;
        pt.df = df;
    }
    let mut path = PathResult {
        grid: grid.clone(),
        points,
        bic_mode: opts.bic,
        selected: None,
    };
    path.selected = select(&path).ok().map(|(i, _)| i);
    Ok(path)
}

/// Number of free parameters: `p` intercepts, `p` diagonal precisions, the
/// nonzero slopes and the nonzero edges.
pub fn degrees_of_freedom<F: Scalar>(estimate: &ModelEstimate<F>) -> usize {
    2 * estimate.p() + estimate.n_beta_nonzero() + estimate.n_edges()
}

/// `BIC = -2 n l + k log n` (exact) or `-n [log det Theta - tr{Theta S^}] + k log n`
/// (approximate, from the final E-step).
pub fn bic<F: Scalar>(fit: &FitResult<F>, dataset: &CensoredDataset<F>, mode: BicMode) -> Result<F> {
    let n = F::from_count(dataset.n());
    let k = F::from_count(degrees_of_freedom(&fit.estimate));
    let fit_term = match mode {
        BicMode::Approx => -n * fit.q_loglik,
        BicMode::Exact(m) => {
            -F::lit(2.0) * n * em::observed_loglik(dataset, &fit.estimate, m)?.value
        }
    };
    Ok(fit_term + k * n.ln())
}

/// Grid point with the smallest BIC; ties go to the earlier point in path
/// order, i.e. the larger `lambda` and then the larger `rho`.
pub fn select<F: Scalar>(path: &PathResult<F>) -> Result<(usize, ModelEstimate<F>)> {
    let mut best: Option<(usize, F)> = None;
    for (i, pt) in path.points.iter().enumerate() {
        if let Some(b) = pt.bic {
            if best.map_or(true, |(_, v)| b < v) {
                best = Some((i, b));
            }
        }
    }
    let (i, _) = best.ok_or(Error::EmptyPath)?;
    let est = path.points[i]
        .fit
        .as_ref()
        .map_err(|_| Error::EmptyPath)?
        .estimate
        .clone();
    Ok((i, est))
}
