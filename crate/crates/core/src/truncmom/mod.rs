//! Moments of truncated (conditional) Gaussian laws.
//!
//! Three routes are provided: the exact univariate kernel, a mean-field
//! approximation for several censored coordinates at once, and a rejection
//! sampler used as an oracle and as the exact-moment E-step.

pub mod mc;
pub mod normal;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::dataio::CensorPartition;
use crate::error::{Error, Result};
use crate::linalg;
use crate::Scalar;

pub use mc::{trunc_moments_mc, trunc_moments_mc_stream, McMoments};

/// Tolerance on the largest mean change between mean-field sweeps.
pub const MEAN_FIELD_TOL: f64 = 1e-8;
/// Maximum number of mean-field sweeps.
pub const MEAN_FIELD_MAX_SWEEPS: usize = 100;

/// Axis-aligned box `(lower_j, upper_j)`; edges may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncRegion<F> {
    lower: Array1<F>,
    upper: Array1<F>,
}

impl<F: Scalar> TruncRegion<F> {
    pub fn new(lower: Array1<F>, upper: Array1<F>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch(format!(
                "region with {} lower and {} upper edges",
                lower.len(),
                upper.len()
            )));
        }
        for (l, u) in lower.iter().zip(upper.iter()) {
            if !(*l < *u) {
                return Err(Error::InvalidRegion {
                    lower: l.as_f64(),
                    upper: u.as_f64(),
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// The whole space in `dim` dimensions.
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: Array1::from_elem(dim, F::neg_infinity()),
            upper: Array1::from_elem(dim, F::infinity()),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> ArrayView1<'_, F> {
        self.lower.view()
    }

    pub fn upper(&self) -> ArrayView1<'_, F> {
        self.upper.view()
    }

    pub fn contains(&self, y: ArrayView1<F>) -> bool {
        y.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (l, u))| *v > *l && *v < *u)
    }
}

/// First moments and raw second moments `E[y y^T]` of a truncated law.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncMoments<F> {
    pub mean: Array1<F>,
    pub second: Array2<F>,
}

impl<F: Scalar> TruncMoments<F> {
    /// `E[y y^T] - E[y] E[y]^T`.
    pub fn covariance(&self) -> Array2<F> {
        let k = self.mean.len();
        Array2::from_shape_fn((k, k), |(i, j)| {
            self.second[[i, j]] - self.mean[i] * self.mean[j]
        })
    }
}

/// Moments of a univariate truncated normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnivariateMoments<F> {
    pub mean: F,
    pub variance: F,
    pub second: F,
}

/// Mean, variance and raw second moment of `N(mu, sigma2)` truncated to `(a, b)`.
pub fn trunc_univariate<F: Scalar>(mu: F, sigma2: F, a: F, b: F) -> Result<UnivariateMoments<F>> {
    if !(sigma2 > F::zero()) || !sigma2.is_finite() {
        return Err(Error::NonPositiveVariance(sigma2.as_f64()));
    }
    if !(a < b) {
        return Err(Error::InvalidRegion {
            lower: a.as_f64(),
            upper: b.as_f64(),
        });
    }
    let sigma = sigma2.sqrt();
    let alpha = (a - mu) / sigma;
    let beta = (b - mu) / sigma;
    let (m, v) = normal::standard_truncated(alpha, beta).ok_or(Error::DegenerateRegion)?;
    let mean = mu + sigma * m;
    let variance = sigma2 * v;
    Ok(UnivariateMoments {
        mean,
        variance,
        second: variance + mean * mean,
    })
}

/// Gaussian law of the censored block given the observed block.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalLaw<F> {
    pub mean: Array1<F>,
    pub cov: Array2<F>,
}

/// Law of `y_c` given `(x, y_o)` for `y | x ~ N(B^T x~, Theta^{-1})`.
///
/// `x_row` is the predictor row without the intercept entry; `y_row` is the
/// full response row (only observed coordinates are read).
pub fn conditional_gaussian<F: Scalar>(
    b: ArrayView2<F>,
    theta: ArrayView2<F>,
    x_row: ArrayView1<F>,
    y_row: ArrayView1<F>,
    partition: &CensorPartition,
) -> Result<ConditionalLaw<F>> {
    if b.nrows() != x_row.len() + 1 || b.ncols() != theta.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "B is {}x{}, x has {} entries, Theta is {}x{}",
            b.nrows(),
            b.ncols(),
            x_row.len(),
            theta.nrows(),
            theta.ncols()
        )));
    }
    let p = b.ncols();
    let mu = Array1::from_shape_fn(p, |k| {
        let mut s = b[[0, k]];
        for (h, x) in x_row.iter().enumerate() {
            s += *x * b[[h + 1, k]];
        }
        s
    });
    conditional_from_mean(mu.view(), theta, y_row, partition)
}

/// As [`conditional_gaussian`], with the mean vector `mu = B^T x~` precomputed.
///
/// Uses the precision parameterisation: the censored block has precision
/// `Theta_cc` and mean `mu_c - Theta_cc^{-1} Theta_co (y_o - mu_o)`.
pub fn conditional_from_mean<F: Scalar>(
    mu: ArrayView1<F>,
    theta: ArrayView2<F>,
    y_row: ArrayView1<F>,
    partition: &CensorPartition,
) -> Result<ConditionalLaw<F>> {
    let c = partition.censored();
    let o = &partition.observed;
    let tcc = linalg::submatrix(theta, &c, &c);
    let l = linalg::cholesky(tcc.view())
        .map_err(|_| Error::NotPositiveDefinite("censored block of the precision matrix"))?;
    let cov = linalg::inverse_from_cholesky(l.view());
    let mut shift = Array1::<F>::zeros(c.len());
    for (a, &ci) in c.iter().enumerate() {
        let mut s = F::zero();
        for &oj in o {
            s += theta[[ci, oj]] * (y_row[oj] - mu[oj]);
        }
        shift[a] = s;
    }
    let correction = linalg::cholesky_solve(l.view(), shift.view());
    let mean = Array1::from_shape_fn(c.len(), |a| mu[c[a]] - correction[a]);
    Ok(ConditionalLaw { mean, cov })
}

/// Mean-field approximation of the truncated moments.
///
/// First moments solve the fixed point where each coordinate equals the
/// univariate truncated mean of its conditional law given the other
/// coordinates at their current means. Second moments combine the exact
/// univariate variances `v_j` at the fixed point with the conditional
/// covariance rescaled by `sqrt(v_h / s_hh) sqrt(v_k / s_kk)`.
///
/// Exact in one dimension and under independence. For unit-scale
/// covariances with correlations up to 0.7 the errors stay below 0.04 in
/// the means and 0.15 in the second moments.
pub fn trunc_moments_approx<F: Scalar>(
    cond_mean: ArrayView1<F>,
    cond_cov: ArrayView2<F>,
    region: &TruncRegion<F>,
) -> Result<TruncMoments<F>> {
    let k = cond_mean.len();
    if cond_cov.nrows() != k || cond_cov.ncols() != k || region.dim() != k {
        return Err(Error::DimensionMismatch(format!(
            "mean of length {}, covariance {}x{}, region of dimension {}",
            k,
            cond_cov.nrows(),
            cond_cov.ncols(),
            region.dim()
        )));
    }
    let (lo, hi) = (region.lower(), region.upper());
    if k == 1 {
        let u = trunc_univariate(cond_mean[0], cond_cov[[0, 0]], lo[0], hi[0])?;
        return Ok(TruncMoments {
            mean: Array1::from_elem(1, u.mean),
            second: Array2::from_elem((1, 1), u.second),
        });
    }
    let prec = linalg::spd_inverse(cond_cov)?;
    let diagonal = (0..k).all(|i| (0..k).all(|j| i == j || prec[[i, j]] == F::zero()));

    let local_mean = |j: usize, m: &Array1<F>| -> F {
        let mut s = F::zero();
        for l in 0..k {
            if l != j {
                s += prec[[j, l]] * (m[l] - cond_mean[l]);
            }
        }
        cond_mean[j] - s / prec[[j, j]]
    };

    let mut m = Array1::<F>::zeros(k);
    for j in 0..k {
        m[j] = trunc_univariate(cond_mean[j], cond_cov[[j, j]], lo[j], hi[j])?.mean;
    }
    if !diagonal {
        let tol = F::lit(MEAN_FIELD_TOL);
        let mut converged = false;
        for _ in 0..MEAN_FIELD_MAX_SWEEPS {
            let mut delta = F::zero();
            for j in 0..k {
                let cm = local_mean(j, &m);
                let next = trunc_univariate(cm, F::one() / prec[[j, j]], lo[j], hi[j])?.mean;
                delta = delta.max((next - m[j]).abs());
                m[j] = next;
            }
            if delta < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::FixedPointNotConverged(MEAN_FIELD_MAX_SWEEPS));
        }
    }

    let mut var = Array1::<F>::zeros(k);
    for j in 0..k {
        let u = trunc_univariate(local_mean(j, &m), F::one() / prec[[j, j]], lo[j], hi[j])?;
        var[j] = u.variance;
    }
    let ratio = Array1::from_shape_fn(k, |j| (var[j] / cond_cov[[j, j]]).sqrt());
    let mut second = Array2::<F>::zeros((k, k));
    for h in 0..k {
        second[[h, h]] = var[h] + m[h] * m[h];
        for l in (h + 1)..k {
            let v = m[h] * m[l] + cond_cov[[h, l]] * ratio[h] * ratio[l];
            second[[h, l]] = v;
            second[[l, h]] = v;
        }
    }
    Ok(TruncMoments { mean: m, second })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::CensorPartition;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn symmetric_interval_has_zero_mean() {
        for a in [0.1, 1.0, 3.0, 9.0] {
            let u = trunc_univariate(0.0f64, 1.0, -a, a).unwrap();
            assert_abs_diff_eq!(u.mean, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn half_line_moments() {
        let u = trunc_univariate(0.0f64, 1.0, 0.0, f64::INFINITY).unwrap();
        assert_abs_diff_eq!(u.mean, 0.797_884_560_802_865_4, epsilon = 1e-14);
        assert_abs_diff_eq!(u.variance, 0.363_380_227_632_418_6, epsilon = 1e-14);
        assert_abs_diff_eq!(u.second, u.variance + u.mean * u.mean, epsilon = 1e-15);
    }

    #[test]
    fn untruncated_is_identity() {
        let u = trunc_univariate(5.0f64, 4.0, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert_abs_diff_eq!(u.mean, 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u.variance, 4.0, epsilon = 1e-14);
    }

    #[test]
    fn univariate_errors() {
        assert!(matches!(
            trunc_univariate(0.0f64, 1.0, 1.0, 1.0),
            Err(Error::InvalidRegion { .. })
        ));
        assert!(matches!(
            trunc_univariate(0.0f64, 0.0, 0.0, 1.0),
            Err(Error::NonPositiveVariance(_))
        ));
        let far = trunc_univariate(0.0f64, 1.0, 1e200, f64::INFINITY).unwrap();
        assert!(far.mean >= 1e200 && far.variance.is_finite());
    }

    #[test]
    fn works_in_single_precision() {
        let u = trunc_univariate(0.0f32, 1.0, 0.0, f32::INFINITY).unwrap();
        assert!((u.mean - 0.797_884_6).abs() < 1e-6);
    }

    #[test]
    fn conditional_of_two_dimensional_example() {
        // Sigma = Theta^{-1} = [[4/3, 2/3], [2/3, 4/3]]; y_2 | y_1 = 1:
        // mean = 0.5 * 1 = 0.5, variance = 4/3 - (2/3)^2 / (4/3) = 1.
        let theta = array![[1.0, -0.5], [-0.5, 1.0]];
        let b = Array2::<f64>::zeros((2, 2));
        let part = CensorPartition::from_status(&[0, 1]);
        let law = conditional_gaussian(
            b.view(),
            theta.view(),
            array![0.7].view(),
            array![1.0, 0.0].view(),
            &part,
        )
        .unwrap();
        // brute force through the covariance parameterisation
        let sigma = linalg::spd_inverse(theta.view()).unwrap();
        let mean_bf = sigma[[1, 0]] / sigma[[0, 0]] * 1.0;
        let var_bf = sigma[[1, 1]] - sigma[[1, 0]] * sigma[[0, 1]] / sigma[[0, 0]];
        assert_abs_diff_eq!(law.mean[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(law.cov[[0, 0]], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(law.mean[0], mean_bf, epsilon = 1e-14);
        assert_abs_diff_eq!(law.cov[[0, 0]], var_bf, epsilon = 1e-14);
    }

    #[test]
    fn conditional_with_diagonal_precision() {
        let theta = array![[2.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 0.5]];
        let b = array![[1.0, 2.0, 3.0], [0.5, 0.0, -1.0]];
        let part = CensorPartition::from_status(&[1, 0, -1]);
        let law = conditional_gaussian(
            b.view(),
            theta.view(),
            array![2.0].view(),
            array![9.0, 1.0, 9.0].view(),
            &part,
        )
        .unwrap();
        assert_abs_diff_eq!(law.mean[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(law.mean[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(law.cov[[0, 0]], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(law.cov[[1, 1]], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(law.cov[[0, 1]], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn fully_censored_row_is_the_full_law() {
        let theta = array![[1.0, -0.3], [-0.3, 2.0]];
        let b = array![[1.0, -1.0], [0.5, 0.25]];
        let part = CensorPartition::from_status(&[1, 1]);
        let law = conditional_gaussian(
            b.view(),
            theta.view(),
            array![2.0].view(),
            array![0.0, 0.0].view(),
            &part,
        )
        .unwrap();
        let sigma = linalg::spd_inverse(theta.view()).unwrap();
        assert_abs_diff_eq!(law.mean[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(law.mean[1], -0.5, epsilon = 1e-14);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(law.cov[[i, j]], sigma[[i, j]], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn approximation_is_exact_in_one_dimension() {
        let region = TruncRegion::new(array![1.0], array![f64::INFINITY]).unwrap();
        let t = trunc_moments_approx(array![0.3].view(), array![[2.0]].view(), &region).unwrap();
        let u = trunc_univariate(0.3, 2.0, 1.0, f64::INFINITY).unwrap();
        assert_eq!(t.mean[0], u.mean);
        assert_eq!(t.second[[0, 0]], u.second);
    }

    #[test]
    fn approximation_is_exact_under_independence() {
        let region =
            TruncRegion::new(array![1.0, f64::NEG_INFINITY], array![f64::INFINITY, -0.5]).unwrap();
        let cov = array![[2.0, 0.0], [0.0, 0.5]];
        let mean = array![0.3, 0.1];
        let t = trunc_moments_approx(mean.view(), cov.view(), &region).unwrap();
        let u0 = trunc_univariate(0.3, 2.0, 1.0, f64::INFINITY).unwrap();
        let u1 = trunc_univariate(0.1, 0.5, f64::NEG_INFINITY, -0.5).unwrap();
        assert_abs_diff_eq!(t.mean[0], u0.mean, epsilon = 1e-15);
        assert_abs_diff_eq!(t.mean[1], u1.mean, epsilon = 1e-15);
        assert_abs_diff_eq!(t.second[[0, 0]], u0.second, epsilon = 1e-14);
        assert_abs_diff_eq!(t.second[[1, 1]], u1.second, epsilon = 1e-14);
        assert_abs_diff_eq!(t.second[[0, 1]], u0.mean * u1.mean, epsilon = 1e-15);
    }

    #[test]
    fn approximation_covariance_is_psd_and_mean_inside() {
        let cov = array![[1.0, 0.8, 0.3], [0.8, 1.5, -0.2], [0.3, -0.2, 0.7]];
        let mean = array![0.0, 0.5, -0.2];
        let region = TruncRegion::new(
            array![0.5, f64::NEG_INFINITY, 0.0],
            array![f64::INFINITY, 0.0, f64::INFINITY],
        )
        .unwrap();
        let t = trunc_moments_approx(mean.view(), cov.view(), &region).unwrap();
        assert!(region.contains(t.mean.view()));
        let c = t.covariance();
        assert!(linalg::min_eigenvalue(c.view()) > -1e-10);
        assert_abs_diff_eq!(t.second[[0, 2]], t.second[[2, 0]], epsilon = 0.0);
    }

    #[test]
    fn region_validation() {
        assert!(TruncRegion::new(array![1.0], array![1.0]).is_err());
        assert!(TruncRegion::new(array![1.0, 0.0], array![2.0]).is_err());
    }
}
