//! Rejection-sampling estimates of truncated Gaussian moments.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{TruncMoments, TruncRegion};
use crate::error::{Error, Result};
use crate::linalg;
use crate::Scalar;

/// Smallest acceptance rate the sampler will attempt.
pub const ACCEPTANCE_FLOOR: f64 = 1e-4;
const PILOT_DRAWS: usize = 20_000;

/// Monte Carlo moments with their standard errors.
#[derive(Debug, Clone)]
pub struct McMoments<F> {
    pub moments: TruncMoments<F>,
    pub mean_se: Array1<F>,
    pub second_se: Array2<F>,
    pub accepted: usize,
    pub proposed: usize,
}

/// Rejection-sampled moments on stream 0 of `seed`.
pub fn trunc_moments_mc<F: Scalar>(
    cond_mean: ArrayView1<F>,
    cond_cov: ArrayView2<F>,
    region: &TruncRegion<F>,
    n_samples: usize,
    seed: u64,
) -> Result<McMoments<F>> {
    trunc_moments_mc_stream(cond_mean, cond_cov, region, n_samples, seed, 0)
}

/// Rejection-sampled moments on an explicit stream of the counter-based
/// generator keyed by `seed`, so per-row draws never depend on scheduling.
pub fn trunc_moments_mc_stream<F: Scalar>(
    cond_mean: ArrayView1<F>,
    cond_cov: ArrayView2<F>,
    region: &TruncRegion<F>,
    n_samples: usize,
    seed: u64,
    stream: u64,
) -> Result<McMoments<F>> {
    let k = cond_mean.len();
    if cond_cov.nrows() != k || region.dim() != k {
        return Err(Error::DimensionMismatch(format!(
            "mean of length {}, covariance {}x{}, region of dimension {}",
            k,
            cond_cov.nrows(),
            cond_cov.ncols(),
            region.dim()
        )));
    }
    if n_samples < 2 {
        return Err(Error::InvalidArgument("n_samples must be at least 2".into()));
    }
    let l = linalg::cholesky(cond_cov)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let lo: Vec<f64> = region.lower().iter().map(|v| v.as_f64()).collect();
    let hi: Vec<f64> = region.upper().iter().map(|v| v.as_f64()).collect();
    let mu: Vec<f64> = cond_mean.iter().map(|v| v.as_f64()).collect();
    let lf: Vec<f64> = l.iter().map(|v| v.as_f64()).collect();

    let mut z = vec![0.0f64; k];
    let mut y = vec![0.0f64; k];
    let mut draw = |rng: &mut ChaCha8Rng, y: &mut [f64]| -> bool {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        for i in 0..k {
            let mut s = mu[i];
            for j in 0..=i {
                s += lf[i * k + j] * z[j];
            }
            y[i] = s;
        }
        (0..k).all(|i| y[i] > lo[i] && y[i] < hi[i])
    };

    let mut s1 = vec![0.0f64; k];
    let mut s1sq = vec![0.0f64; k];
    let mut s2 = vec![0.0f64; k * k];
    let mut s2sq = vec![0.0f64; k * k];
    let mut accepted = 0usize;
    let mut proposed = 0usize;
    let mut accumulate = |y: &[f64], accepted: &mut usize| {
        for i in 0..k {
            s1[i] += y[i];
            s1sq[i] += y[i] * y[i];
            for j in 0..k {
                let v = y[i] * y[j];
                s2[i * k + j] += v;
                s2sq[i * k + j] += v * v;
            }
        }
        *accepted += 1;
    };

    // pilot batch, kept as part of the sample
    for _ in 0..PILOT_DRAWS {
        proposed += 1;
        if draw(&mut rng, &mut y) {
            if accepted < n_samples {
                accumulate(&y, &mut accepted);
            }
        }
    }
    let rate = accepted as f64 / PILOT_DRAWS as f64;
    if rate < ACCEPTANCE_FLOOR {
        return Err(Error::AcceptanceTooLow(rate));
    }
    while accepted < n_samples {
        proposed += 1;
        if draw(&mut rng, &mut y) {
            accumulate(&y, &mut accepted);
        }
    }

    let n = accepted as f64;
    let se = |sum: f64, sumsq: f64| -> f64 {
        let m = sum / n;
        ((sumsq / n - m * m).max(0.0) / (n - 1.0)).sqrt()
    };
    let mean = Array1::from_shape_fn(k, |i| F::lit(s1[i] / n));
    let mean_se = Array1::from_shape_fn(k, |i| F::lit(se(s1[i], s1sq[i])));
    let second = Array2::from_shape_fn((k, k), |(i, j)| F::lit(s2[i * k + j] / n));
    let second_se =
        Array2::from_shape_fn((k, k), |(i, j)| F::lit(se(s2[i * k + j], s2sq[i * k + j])));
    Ok(McMoments {
        moments: TruncMoments { mean, second },
        mean_se,
        second_se,
        accepted,
        proposed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::truncmom::trunc_univariate;
    use ndarray::array;

    #[test]
    fn deterministic_given_seed() {
        let region = TruncRegion::new(array![0.0, -1.0], array![f64::INFINITY, 1.0]).unwrap();
        let cov = array![[1.0, 0.3], [0.3, 1.0]];
        let a = trunc_moments_mc(array![0.0, 0.0].view(), cov.view(), &region, 5_000, 42).unwrap();
        let b = trunc_moments_mc(array![0.0, 0.0].view(), cov.view(), &region, 5_000, 42).unwrap();
        assert_eq!(a.moments, b.moments);
        let c = trunc_moments_mc_stream(array![0.0, 0.0].view(), cov.view(), &region, 5_000, 42, 1)
            .unwrap();
        assert_ne!(a.moments, c.moments);
    }

    #[test]
    fn full_space_converges_to_gaussian_moments() {
        let cov: ndarray::Array2<f64> = array![[2.0, 0.5], [0.5, 1.0]];
        let mean: ndarray::Array1<f64> = array![1.0, -1.0];
        let r = trunc_moments_mc(mean.view(), cov.view(), &TruncRegion::unbounded(2), 200_000, 7)
            .unwrap();
        for i in 0..2 {
            assert!((r.moments.mean[i] - mean[i]).abs() < 4.0 * r.mean_se[i]);
            for j in 0..2 {
                let truth = cov[[i, j]] + mean[i] * mean[j];
                assert!((r.moments.second[[i, j]] - truth).abs() < 4.0 * r.second_se[[i, j]]);
            }
        }
    }

    #[test]
    fn univariate_agrees_with_closed_form() {
        let region = TruncRegion::new(array![0.5], array![f64::INFINITY]).unwrap();
        let r = trunc_moments_mc(array![0.2].view(), array![[1.5]].view(), &region, 200_000, 3)
            .unwrap();
        let u = trunc_univariate(0.2, 1.5, 0.5, f64::INFINITY).unwrap();
        assert!((r.moments.mean[0] - u.mean).abs() < 3.0 * r.mean_se[0]);
        assert!((r.moments.second[[0, 0]] - u.second).abs() < 3.0 * r.second_se[[0, 0]]);
    }

    #[test]
    fn rejects_tiny_acceptance() {
        let region = TruncRegion::new(array![6.0], array![f64::INFINITY]).unwrap();
        let r = trunc_moments_mc(array![0.0].view(), array![[1.0]].view(), &region, 100, 1);
        assert!(matches!(r, Err(Error::AcceptanceTooLow(_))));
    }
}
