//! E-step: imputed responses, mixed moments and the imputed conditional
//! covariance.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::dataio::{CensoredDataset, LEFT};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ModelEstimate;
use crate::truncmom::{self, mc, TruncMoments, TruncRegion};
use crate::Scalar;

/// How truncated moments of the censored block are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMode {
    /// Mean-field approximation (exact when at most one entry is censored).
    Approx,
    /// Closed form when one entry is censored, rejection sampling otherwise.
    ExactMc { seed: u64, n_samples: usize },
}

/// Imputed sufficient statistics of one E-step.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedMoments<F> {
    /// `Y^` (`n x p`).
    pub y_hat: Array2<F>,
    /// `C^_yy = Y^^T Y^ + censored_cov` (`p x p`).
    pub c_yy: Array2<F>,
    /// `Y^^T X~` (`p x (q+1)`).
    pub c_yx: Array2<F>,
    /// `X~^T X~` (`(q+1) x (q+1)`).
    pub c_xx: Array2<F>,
    /// `C^_yy - Y^^T Y^`, the summed conditional covariances of the
    /// censored blocks (PSD).
    pub censored_cov: Array2<F>,
    /// Design `X~` the moments were computed with.
    pub design: Array2<F>,
}

impl<F: Scalar> ImputedMoments<F> {
    pub fn n(&self) -> usize {
        self.y_hat.nrows()
    }

    pub fn p(&self) -> usize {
        self.y_hat.ncols()
    }

    /// Moments of fully observed data.
    pub fn from_complete(y: ArrayView2<F>, design: ArrayView2<F>) -> Self {
        let p = y.ncols();
        let y_hat = y.to_owned();
        Self::assemble(y_hat, Array2::zeros((p, p)), design)
    }

    fn assemble(y_hat: Array2<F>, censored_cov: Array2<F>, design: ArrayView2<F>) -> Self {
        let mut c_yy = y_hat.t().dot(&y_hat) + &censored_cov;
        linalg::symmetrize(&mut c_yy);
        let c_yx = y_hat.t().dot(&design);
        let c_xx = design.t().dot(&design);
        Self {
            y_hat,
            c_yy,
            c_yx,
            c_xx,
            censored_cov,
            design: design.to_owned(),
        }
    }
}

struct RowMoments<F> {
    censored: Vec<usize>,
    moments: Option<TruncMoments<F>>,
}

/// Run the E-step at `estimate`.
pub fn impute_moments<F: Scalar>(
    dataset: &CensoredDataset<F>,
    estimate: &ModelEstimate<F>,
    mode: MomentMode,
) -> Result<ImputedMoments<F>> {
    let (n, p) = (dataset.n(), dataset.p());
    if estimate.p() != p || estimate.q() != dataset.q() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has p={}, q={} but the data has p={}, q={}",
            estimate.p(),
            estimate.q(),
            p,
            dataset.q()
        )));
    }
    if !dataset.has_censoring() {
        return Ok(ImputedMoments::from_complete(dataset.y(), dataset.design()));
    }
    let mu = estimate.fitted(dataset.design());
    let rows: Vec<RowMoments<F>> = (0..n)
        .into_par_iter()
        .map(|i| row_moments(dataset, estimate, &mu, i, mode))
        .collect::<Result<_>>()?;

    // fixed-order reduction so the output does not depend on scheduling
    let mut y_hat = dataset.y().to_owned();
    let mut censored_cov = Array2::<F>::zeros((p, p));
    for (i, row) in rows.iter().enumerate() {
        let Some(m) = &row.moments else { continue };
        let c = &row.censored;
        for (a, &ca) in c.iter().enumerate() {
            y_hat[[i, ca]] = m.mean[a];
        }
        for (a, &ca) in c.iter().enumerate() {
            for (b, &cb) in c.iter().enumerate() {
                censored_cov[[ca, cb]] += m.second[[a, b]] - m.mean[a] * m.mean[b];
            }
        }
    }
    linalg::symmetrize(&mut censored_cov);
    Ok(ImputedMoments::assemble(y_hat, censored_cov, dataset.design()))
}

fn row_moments<F: Scalar>(
    dataset: &CensoredDataset<F>,
    estimate: &ModelEstimate<F>,
    mu: &Array2<F>,
    i: usize,
    mode: MomentMode,
) -> Result<RowMoments<F>> {
    let part = dataset.partition(i)?;
    if part.n_censored() == 0 {
        return Ok(RowMoments {
            censored: Vec::new(),
            moments: None,
        });
    }
    let c = part.censored();
    let law = truncmom::conditional_from_mean(
        mu.row(i),
        estimate.theta.view(),
        dataset.y().row(i),
        &part,
    )?;
    let region = censored_region(dataset, i, &c)?;
    let moments = match mode {
        MomentMode::Approx => truncmom::trunc_moments_approx(law.mean.view(), law.cov.view(), &region)?,
        MomentMode::ExactMc { .. } if c.len() == 1 => {
            truncmom::trunc_moments_approx(law.mean.view(), law.cov.view(), &region)?
        }
        MomentMode::ExactMc { seed, n_samples } => {
            mc::trunc_moments_mc_stream(law.mean.view(), law.cov.view(), &region, n_samples, seed, i as u64)?
                .moments
        }
    };
    Ok(RowMoments {
        censored: c,
        moments: Some(moments),
    })
}

/// Truncation region of the censored coordinates `c` of row `i`:
/// `(-inf, l_k)` for left-censored and `(u_k, inf)` for right-censored entries.
pub fn censored_region<F: Scalar>(
    dataset: &CensoredDataset<F>,
    i: usize,
    c: &[usize],
) -> Result<TruncRegion<F>> {
    let status = dataset.status();
    let lower = Array1::from_iter(c.iter().map(|&k| {
        if status[[i, k]] == LEFT {
            F::neg_infinity()
        } else {
            dataset.upper()[k]
        }
    }));
    let upper = Array1::from_iter(c.iter().map(|&k| {
        if status[[i, k]] == LEFT {
            dataset.lower()[k]
        } else {
            F::infinity()
        }
    }));
    TruncRegion::new(lower, upper)
}

/// Imputed empirical conditional covariance
/// `S^(B) = n^{-1} (C^_yy - C^_yx B - B^T C^_xy + B^T C_xx B)`.
///
/// Evaluated as `n^{-1} ((Y^ - X~B)^T (Y^ - X~B) + censored_cov)`, which is the
/// same matrix without the cancellation of the expanded form.
pub fn conditional_cov<F: Scalar>(moments: &ImputedMoments<F>, b: ArrayView2<F>) -> Result<Array2<F>> {
    if b.nrows() != moments.design.ncols() || b.ncols() != moments.p() {
        return Err(Error::DimensionMismatch(format!(
            "B is {}x{}, expected {}x{}",
            b.nrows(),
            b.ncols(),
            moments.design.ncols(),
            moments.p()
        )));
    }
    let resid = &moments.y_hat - &moments.design.dot(&b);
    Ok(residual_cov(resid.view(), moments))
}

pub(crate) fn residual_cov<F: Scalar>(resid: ArrayView2<F>, moments: &ImputedMoments<F>) -> Array2<F> {
    let n = F::from_count(moments.n());
    let mut s = resid.t().dot(&resid) + &moments.censored_cov;
    s.mapv_inplace(|v| v / n);
    linalg::symmetrize(&mut s);
    s
}

/// The expanded-form evaluation of [`conditional_cov`].
pub fn conditional_cov_expanded<F: Scalar>(moments: &ImputedMoments<F>, b: ArrayView2<F>) -> Array2<F> {
    let n = F::from_count(moments.n());
    let cyxb = moments.c_yx.dot(&b);
    let mut s = &moments.c_yy - &cyxb - &cyxb.t() + &b.t().dot(&moments.c_xx.dot(&b));
    s.mapv_inplace(|v| v / n);
    linalg::symmetrize(&mut s);
    s
}
