//! Average observed log-likelihood of censored data and its gradient.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dataio::CensoredDataset;
use crate::error::{Error, Result};
use crate::estep::{censored_region, conditional_cov, impute_moments, MomentMode};
use crate::linalg;
use crate::model::ModelEstimate;
use crate::truncmom::{self, normal, TruncRegion};
use crate::Scalar;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const GL_NODES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoglikMode {
    /// Closed form for one censored entry per row, one-dimensional
    /// quadrature for two.
    Quadrature,
    /// Closed form for one censored entry, Monte Carlo otherwise.
    Mc { seed: u64, n_samples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoglikEstimate<F> {
    pub value: F,
    /// Monte Carlo standard error (zero for deterministic evaluations).
    pub std_error: F,
}

/// `n^{-1} sum_i log int_{D_i} phi(y_io, y_ic | x_i) dy_ic`.
pub fn observed_loglik<F: Scalar>(
    dataset: &CensoredDataset<F>,
    estimate: &ModelEstimate<F>,
    mode: LoglikMode,
) -> Result<LoglikEstimate<F>> {
    let p = dataset.p();
    if estimate.p() != p || estimate.q() != dataset.q() {
        return Err(Error::DimensionMismatch("estimate does not match the data".into()));
    }
    let theta = estimate.theta.view();
    let log_det = linalg::log_det_spd(theta).map_err(|_| Error::NotPositiveDefinite("precision matrix"))?;
    let mu = estimate.fitted(dataset.design());
    let rows: Vec<(f64, f64)> = (0..dataset.n())
        .into_par_iter()
        .map(|i| row_loglik(dataset, estimate, &mu, log_det, i, mode))
        .collect::<Result<_>>()?;
    let n = dataset.n() as f64;
    let value: f64 = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let var: f64 = rows.iter().map(|r| r.1 * r.1).sum::<f64>();
    Ok(LoglikEstimate {
        value: F::lit(value),
        std_error: F::lit(var.sqrt() / n),
    })
}

/// `l - lambda sum_k theta_kk ||beta_k||_1 - (rho / 2) ||Theta||_1^-`.
pub fn penalized_observed_loglik<F: Scalar>(
    dataset: &CensoredDataset<F>,
    estimate: &ModelEstimate<F>,
    lambda: F,
    rho: F,
    mode: LoglikMode,
) -> Result<LoglikEstimate<F>> {
    let l = observed_loglik(dataset, estimate, mode)?;
    Ok(LoglikEstimate {
        value: l.value - lambda * estimate.weighted_l1() - rho * F::lit(0.5) * estimate.theta_offdiag_l1(),
        std_error: l.std_error,
    })
}

fn row_loglik<F: Scalar>(
    dataset: &CensoredDataset<F>,
    estimate: &ModelEstimate<F>,
    mu: &Array2<F>,
    log_det: F,
    i: usize,
    mode: LoglikMode,
) -> Result<(f64, f64)> {
    let theta = estimate.theta.view();
    let part = dataset.partition(i)?;
    let yv = dataset.y();
    let y = yv.row(i);
    let o = &part.observed;
    let c = part.censored();
    let half = F::lit(0.5);

    // density of the observed block: precision Theta_oo - Theta_oc Theta_cc^{-1} Theta_co
    let mut dens = F::zero();
    if !o.is_empty() {
        let r: Vec<F> = o.iter().map(|&k| y[k] - mu[[i, k]]).collect();
        let mut quad = F::zero();
        for (a, &h) in o.iter().enumerate() {
            for (b, &k) in o.iter().enumerate() {
                quad += r[a] * theta[[h, k]] * r[b];
            }
        }
        let mut ld = log_det;
        if !c.is_empty() {
            let tcc = linalg::submatrix(theta, &c, &c);
            let l = linalg::cholesky(tcc.view())?;
            ld -= l.diag().iter().map(|d| d.ln()).sum::<F>() * F::lit(2.0);
            let v = Array1::from_iter(c.iter().map(|&h| {
                let mut s = F::zero();
                for (b, &k) in o.iter().enumerate() {
                    s += theta[[h, k]] * r[b];
                }
                s
            }));
            let w = linalg::cholesky_solve(l.view(), v.view());
            quad -= v.iter().zip(w.iter()).map(|(a, b)| *a * *b).sum::<F>();
        }
        dens = half * ld - half * F::from_count(o.len()) * F::lit(LN_2PI) - half * quad;
    }
    if c.is_empty() {
        return Ok((dens.as_f64(), 0.0));
    }
    let law = truncmom::conditional_from_mean(mu.row(i), theta, y, &part)?;
    let region = censored_region(dataset, i, &c)?;
    let (lp, se) = match (c.len(), mode) {
        (1, _) => {
            let s = law.cov[[0, 0]].sqrt();
            let m = law.mean[0];
            let lp = normal::ln_interval_prob((region.lower()[0] - m) / s, (region.upper()[0] - m) / s);
            (lp.as_f64(), 0.0)
        }
        (2, LoglikMode::Quadrature) => (bivariate_log_prob(&law.mean, &law.cov, &region).as_f64(), 0.0),
        (k, LoglikMode::Quadrature) => return Err(Error::QuadratureCap(k)),
        (_, LoglikMode::Mc { seed, n_samples }) => mc_log_prob(&law.mean, &law.cov, &region, n_samples, seed, i as u64)?,
    };
    Ok((dens.as_f64() + lp, se))
}

/// `log P(Y in region)` for a bivariate Gaussian with a rectangular region,
/// integrating the conditional probability of the second coordinate over the
/// truncated law of the first by Gauss-Legendre in the probability scale.
fn bivariate_log_prob<F: Scalar>(mean: &Array1<F>, cov: &Array2<F>, region: &TruncRegion<F>) -> F {
    let m1 = mean[0].as_f64();
    let m2 = mean[1].as_f64();
    let s11 = cov[[0, 0]].as_f64();
    let s12 = cov[[0, 1]].as_f64();
    let s22 = cov[[1, 1]].as_f64();
    let sd1 = s11.sqrt();
    let slope = s12 / s11;
    let sd2 = (s22 - s12 * s12 / s11).sqrt();
    let (lo, hi) = (region.lower(), region.upper());
    let a = (lo[0].as_f64() - m1) / sd1;
    let b = (hi[0].as_f64() - m1) / sd1;
    let (a2, b2) = (lo[1].as_f64(), hi[1].as_f64());

    let ln_p1 = normal::ln_interval_prob(a, b);
    // sample the first coordinate by its truncated quantile function; the
    // reflected tail is used when the interval lies below zero
    let flip = b <= 0.0;
    let (ta, tb) = if flip { (-b, -a) } else { (a, b) };
    let sa = normal::sf(ta);
    let sb = normal::sf(tb);
    let g = |t: f64| -> f64 {
        let mut z = normal::upper_quantile(sa - t * (sa - sb));
        if flip {
            z = -z;
        }
        let y1 = m1 + sd1 * z;
        let c = m2 + slope * (y1 - m1);
        normal::ln_interval_prob((a2 - c) / sd2, (b2 - c) / sd2).exp()
    };
    let (nodes, weights) = linalg::gauss_legendre(GL_NODES);
    let breaks = [
        0.0, 1e-12, 1e-9, 1e-6, 1e-4, 1e-2, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.9999, 1.0 - 1e-6, 1.0 - 1e-9,
        1.0 - 1e-12, 1.0,
    ];
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (l, r) = (w[0], w[1]);
        let half = 0.5 * (r - l);
        let mid = 0.5 * (r + l);
        for (x, wt) in nodes.iter().zip(&weights) {
            total += wt * half * g(mid + half * x);
        }
    }
    F::lit(ln_p1 + total.ln())
}

fn mc_log_prob<F: Scalar>(
    mean: &Array1<F>,
    cov: &Array2<F>,
    region: &TruncRegion<F>,
    n_samples: usize,
    seed: u64,
    stream: u64,
) -> Result<(f64, f64)> {
    let k = mean.len();
    let l = linalg::cholesky(cov.view())?;
    let lf: Vec<f64> = l.iter().map(|v| v.as_f64()).collect();
    let lo: Vec<f64> = region.lower().iter().map(|v| v.as_f64()).collect();
    let hi: Vec<f64> = region.upper().iter().map(|v| v.as_f64()).collect();
    let mu: Vec<f64> = mean.iter().map(|v| v.as_f64()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut z = vec![0.0; k];
    let mut hits = 0usize;
    for _ in 0..n_samples {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let inside = (0..k).all(|a| {
            let mut v = mu[a];
            for b in 0..=a {
                v += lf[a * k + b] * z[b];
            }
            v > lo[a] && v < hi[a]
        });
        hits += inside as usize;
    }
    if hits == 0 {
        return Err(Error::AcceptanceTooLow(0.0));
    }
    let p = hits as f64 / n_samples as f64;
    Ok((p.ln(), ((1.0 - p) / (n_samples as f64 * p)).sqrt()))
}

/// Gradient of the average observed log-likelihood through the E-step
/// moments: `d/dB = n^{-1} X~^T (Y^ - X~B) Theta` and
/// `d/dTheta = (Theta^{-1} - S^(B)) / 2` (entrywise, treating the entries of
/// `Theta` as free).
pub fn loglik_gradient<F: Scalar>(
    dataset: &CensoredDataset<F>,
    estimate: &ModelEstimate<F>,
    mode: MomentMode,
) -> Result<(Array2<F>, Array2<F>)> {
    let m = impute_moments(dataset, estimate, mode)?;
    let n = F::from_count(dataset.n());
    let resid = &m.y_hat - &m.design.dot(&estimate.b);
    let gb = m.design.t().dot(&resid.dot(&estimate.theta)).mapv(|v| v / n);
    let s = conditional_cov(&m, estimate.b.view())?;
    let sigma = linalg::spd_inverse(estimate.theta.view())?;
    let gt = (&sigma - &s).mapv(|v| v * F::lit(0.5));
    Ok((gb, gt))
}
