//! EM driver for a fixed `(lambda, rho)`.
//!
//! Objective conventions: with `S^(B)` the imputed conditional covariance,
//! the penalized Q-function is
//! `log det Theta - tr{Theta S^(B)} - 2 lambda sum_k theta_kk ||beta_k||_1 - rho ||Theta||_1^-`,
//! which is twice the E-step surrogate of the penalized observed
//! log-likelihood `l - lambda sum_k theta_kk ||beta_k||_1 - (rho / 2) ||Theta||_1^-`
//! up to a constant. `lambda` is on the scale of the per-column lasso
//! `(1/2n) ||y - X b||^2 + lambda ||beta||_1`.

pub mod loglik;

use ndarray::{Array2, ArrayView2};

use crate::dataio::CensoredDataset;
use crate::error::{Error, Result};
use crate::estep::{conditional_cov, impute_moments, ImputedMoments, MomentMode};
use crate::glasso::{glasso_fit, glasso_kkt, GlassoOptions};
use crate::linalg;
use crate::model::ModelEstimate;
use crate::multilasso::{multilasso_fit, MultilassoOptions};
use crate::Scalar;

pub use loglik::{loglik_gradient, observed_loglik, penalized_observed_loglik, LoglikEstimate, LoglikMode};

#[derive(Debug, Clone, Copy)]
pub struct EmOptions<F> {
    /// Relative change of the penalized Q-function between EM iterations.
    pub outer_tol: F,
    pub max_em_iter: usize,
    /// Relative change of Q between M-step alternations.
    pub inner_tol: F,
    pub max_m_iter: usize,
    pub mode: MomentMode,
    pub multilasso: MultilassoOptions<F>,
    pub glasso: GlassoOptions<F>,
    /// Relative Q decrease between EM iterations tolerated without a flag.
    pub q_decrease_tol: F,
    /// Keep the estimate after every EM iteration.
    pub keep_iterates: bool,
}

impl<F: Scalar> Default for EmOptions<F> {
    fn default() -> Self {
        Self {
            outer_tol: F::lit(1e-5),
            max_em_iter: 100,
            inner_tol: F::lit(1e-6),
            max_m_iter: 50,
            mode: MomentMode::Approx,
            multilasso: MultilassoOptions::default(),
            glasso: GlassoOptions::default(),
            q_decrease_tol: F::lit(1e-6),
            keep_iterates: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<F> {
    pub estimate: ModelEstimate<F>,
    /// Penalized Q after each E-step followed by its value after every
    /// M-step alternation, one entry per EM iteration.
    pub q_trace: Vec<Vec<F>>,
    pub em_iterations: usize,
    pub m_iterations: Vec<usize>,
    pub kkt_residual: F,
    pub lambda: F,
    pub rho: F,
    pub converged: bool,
    /// EM iterations whose Q fell by more than the tolerated amount.
    pub q_decreases: usize,
    /// `log det Theta - tr{Theta S^(B)}` at the final moments.
    pub q_loglik: F,
    /// Starting point followed by the estimate after each EM iteration,
    /// when requested.
    pub iterates: Vec<ModelEstimate<F>>,
}

impl<F: Scalar> FitResult<F> {
    pub fn final_q(&self) -> F {
        self.q_trace
            .last()
            .and_then(|v| v.last())
            .copied()
            .unwrap_or_else(F::nan)
    }

    pub fn inner_iterations(&self) -> usize {
        self.m_iterations.iter().sum()
    }
}

/// `log det Theta - tr{Theta S^(B)}`.
pub fn q_loglik<F: Scalar>(estimate: &ModelEstimate<F>, moments: &ImputedMoments<F>) -> Result<F> {
    let s = conditional_cov(moments, estimate.b.view())?;
    let ld = linalg::log_det_spd(estimate.theta.view())
        .map_err(|_| Error::NotPositiveDefinite("precision matrix"))?;
    let tr: F = estimate.theta.iter().zip(s.iter()).map(|(a, b)| *a * *b).sum();
    Ok(ld - tr)
}

/// Penalized Q-function at `estimate` for fixed imputed moments.
pub fn penalized_q<F: Scalar>(
    estimate: &ModelEstimate<F>,
    moments: &ImputedMoments<F>,
    lambda: F,
    rho: F,
) -> Result<F> {
    Ok(q_loglik(estimate, moments)?
        - F::lit(2.0) * lambda * estimate.weighted_l1()
        - rho * estimate.theta_offdiag_l1())
}

/// `S^(B) + diag(2 lambda ||beta_k||_1)`: the Theta-step input that makes the
/// graphical lasso an exact maximizer of Q in `Theta`, since the `B` penalty
/// is weighted by the diagonal of `Theta`.
pub fn theta_step_input<F: Scalar>(moments: &ImputedMoments<F>, b: ArrayView2<F>, lambda: F) -> Result<Array2<F>> {
    let mut s = conditional_cov(moments, b)?;
    for k in 0..b.ncols() {
        let l1: F = b.column(k).iter().skip(1).map(|v| v.abs()).sum();
        s[[k, k]] += F::lit(2.0) * lambda * l1;
    }
    Ok(s)
}

/// Result of one M-step: alternations of the `B` and `Theta` updates.
#[derive(Debug, Clone)]
pub struct MStep<F> {
    pub estimate: ModelEstimate<F>,
    pub q_values: Vec<F>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn m_step<F: Scalar>(
    moments: &ImputedMoments<F>,
    init: &ModelEstimate<F>,
    lambda: F,
    rho: F,
    opts: &EmOptions<F>,
) -> Result<MStep<F>> {
    let mut est = init.clone();
    let mut q_prev = penalized_q(&est, moments, lambda, rho)?;
    let mut q_values = vec![q_prev];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_m_iter {
        iterations += 1;
        let b = multilasso_fit(moments, est.theta.view(), lambda, est.b.view(), &opts.multilasso)?.b;
        let s = theta_step_input(moments, b.view(), lambda)?;
        let theta = glasso_fit(s.view(), rho, Some(est.theta.view()), &opts.glasso)?.theta;
        est = ModelEstimate { b, theta };
        let q = penalized_q(&est, moments, lambda, rho)?;
        q_values.push(q);
        let rel = (q - q_prev).abs() / q_prev.abs().max(F::one());
        q_prev = q;
        if rel < opts.inner_tol {
            converged = true;
            break;
        }
    }
    Ok(MStep {
        estimate: est,
        q_values,
        iterations,
        converged,
    })
}

fn validate<F: Scalar>(dataset: &CensoredDataset<F>, lambda: F, rho: F, init: &ModelEstimate<F>) -> Result<()> {
    if !(lambda >= F::zero()) || !(rho >= F::zero()) {
        return Err(Error::InvalidArgument(format!(
            "penalties must be nonnegative (lambda={}, rho={})",
            lambda, rho
        )));
    }
    if init.p() != dataset.p() || init.q() != dataset.q() {
        return Err(Error::DimensionMismatch(format!(
            "initial estimate has p={}, q={} but the data has p={}, q={}",
            init.p(),
            init.q(),
            dataset.p(),
            dataset.q()
        )));
    }
    if !init.is_spd() {
        return Err(Error::NotPositiveDefinite("initial precision matrix"));
    }
    Ok(())
}

/// Fit at `(lambda, rho)` by EM from `init`.
pub fn fit_em<F: Scalar>(
    dataset: &CensoredDataset<F>,
    lambda: F,
    rho: F,
    init: &ModelEstimate<F>,
    opts: &EmOptions<F>,
) -> Result<FitResult<F>> {
    validate(dataset, lambda, rho, init)?;
    let mut est = init.clone();
    let mut q_trace = Vec::new();
    let mut m_iterations = Vec::new();
    let mut q_last: Option<F> = None;
    let mut converged = false;
    let mut q_decreases = 0;
    let mut moments = None;
    let mut iterates = Vec::new();
    if opts.keep_iterates {
        iterates.push(est.clone());
    }
    for _ in 0..opts.max_em_iter {
        let m = impute_moments(dataset, &est, opts.mode)?;
        let step = m_step(&m, &est, lambda, rho, opts)?;
        let q = *step.q_values.last().expect("nonempty trace");
        est = step.estimate;
        if opts.keep_iterates {
            iterates.push(est.clone());
        }
        q_trace.push(step.q_values);
        m_iterations.push(step.iterations);
        moments = Some(m);
        if !dataset.has_censoring() {
            converged = step.converged;
            break;
        }
        if let Some(prev) = q_last {
            let scale = prev.abs().max(F::one());
            if q < prev - opts.q_decrease_tol * scale {
                q_decreases += 1;
            }
            if (q - prev).abs() / scale < opts.outer_tol {
                converged = true;
                break;
            }
        }
        q_last = Some(q);
    }
    let moments = moments.ok_or_else(|| Error::InvalidArgument("max_em_iter must be positive".into()))?;
    let kkt_residual = kkt_residual(&est, &moments, lambda, rho)?;
    let q_loglik = q_loglik(&est, &moments)?;
    Ok(FitResult {
        estimate: est,
        em_iterations: q_trace.len(),
        q_trace,
        m_iterations,
        kkt_residual,
        lambda,
        rho,
        converged,
        q_decreases,
        q_loglik,
        iterates,
    })
}

/// Baseline: censored entries replaced by their bounds, then the M-step run
/// to convergence on the completed data.
pub fn fit_impute_at_limit<F: Scalar>(
    dataset: &CensoredDataset<F>,
    lambda: F,
    rho: F,
    init: &ModelEstimate<F>,
    opts: &EmOptions<F>,
) -> Result<FitResult<F>> {
    fit_em(&dataset.clamped(), lambda, rho, init, opts)
}

/// Largest violation of the stationarity conditions of both sub-problems at
/// fixed moments.
///
/// For `B`: `g_hk = (n theta_kk)^{-1} sum_l theta_kl X~_h^T (Y^_l - X~ b_l)`
/// must vanish for the intercept, equal `lambda sign(beta_hk)` on the
/// support and stay within `[-lambda, lambda]` elsewhere. For `Theta`, the
/// graphical-lasso conditions on `S^(B) + diag(2 lambda ||beta_k||_1)`.
pub fn kkt_residual<F: Scalar>(
    estimate: &ModelEstimate<F>,
    moments: &ImputedMoments<F>,
    lambda: F,
    rho: F,
) -> Result<F> {
    let n = F::from_count(moments.n());
    let resid = &moments.y_hat - &moments.design.dot(&estimate.b);
    let g = moments.design.t().dot(&resid.dot(&estimate.theta));
    let mut worst = F::zero();
    for k in 0..estimate.p() {
        let tkk = estimate.theta[[k, k]];
        if !(tkk > F::zero()) {
            return Err(Error::NonPositivePrecisionDiagonal(k));
        }
        for h in 0..g.nrows() {
            let gk = g[[h, k]] / (n * tkk);
            let b = estimate.b[[h, k]];
            let v = if h == 0 {
                gk.abs()
            } else if b != F::zero() {
                (gk - lambda * b.signum()).abs()
            } else {
                (gk.abs() - lambda).max(F::zero())
            };
            worst = worst.max(v);
        }
    }
    let s = theta_step_input(moments, estimate.b.view(), lambda)?;
    let sigma = linalg::spd_inverse(estimate.theta.view())
        .map_err(|_| Error::NotPositiveDefinite("precision matrix"))?;
    worst = worst.max(glasso_kkt(estimate.theta.view(), sigma.view(), s.view(), rho));
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn q_at_identity() {
        let y = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let x = array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
        // S^(0) = Y^T Y / n = I / 2, scale to I
        let y = y * 2f64.sqrt();
        let m = ImputedMoments::from_complete(y.view(), x.view());
        let est = ModelEstimate::new(Array2::zeros((2, 2)), Array2::eye(2)).unwrap();
        let q = penalized_q(&est, &m, 0.3, 0.7).unwrap();
        assert!((q + 2.0).abs() < 1e-14);
    }

    #[test]
    fn rho_enters_linearly() {
        let y: Array2<f64> = array![[1.0, 0.5], [-1.0, 0.2], [0.3, 1.0], [0.1, -1.0]];
        let x = array![[1.0, 0.1], [1.0, 0.5], [1.0, -0.2], [1.0, 0.9]];
        let m = ImputedMoments::from_complete(y.view(), x.view());
        let est = ModelEstimate::new(array![[0.1, 0.0], [0.2, -0.3]], array![[2.0, -0.4], [-0.4, 1.0]])
            .unwrap();
        let t = est.theta_offdiag_l1();
        let a = penalized_q(&est, &m, 0.1, 0.0).unwrap();
        let b = penalized_q(&est, &m, 0.1, 1.0).unwrap();
        assert!((a - b - t).abs() < 1e-14);
    }
}
