//! Independent reference implementations and data generators for the
//! integration tests.

#![allow(dead_code)]

use ccglasso::{CensoredDataset64, ImputedMoments64};
use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut impl Rng, n: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, m), || rng.sample(StandardNormal))
}

/// Dense SPD matrix `A A^T / p + 0.5 I` with a random `A`.
pub fn random_spd(rng: &mut impl Rng, p: usize) -> Array2<f64> {
    let a = normal_matrix(rng, p, p);
    a.dot(&a.t()) / p as f64 + Array2::<f64>::eye(p) * 0.5
}

/// Lower Cholesky factor by the textbook recurrence.
pub fn cholesky(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum();
            if i == j {
                l[[i, i]] = (a[[i, i]] - s).sqrt();
            } else {
                l[[i, j]] = (a[[i, j]] - s) / l[[j, j]];
            }
        }
    }
    l
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(n);
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs())).unwrap();
        for k in 0..n {
            m.swap([c, k], [piv, k]);
            inv.swap([c, k], [piv, k]);
        }
        let d = m[[c, c]];
        for k in 0..n {
            m[[c, k]] /= d;
            inv[[c, k]] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[[r, c]];
                if f != 0.0 {
                    for k in 0..n {
                        m[[r, k]] -= f * m[[c, k]];
                        inv[[r, k]] -= f * inv[[c, k]];
                    }
                }
            }
        }
    }
    inv
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn max_eigenvalue(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut v = Array1::<f64>::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lam = 0.0;
    for _ in 0..5000 {
        let w = a.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w.dot(&v);
        v = w / norm;
        if (next - lam).abs() <= 1e-15 * next.abs() {
            return next;
        }
        lam = next;
    }
    lam
}

/// Gaussian responses `y = B^T [1, x] + e`, `e ~ N(0, Theta^{-1})`, with the
/// top `censor_frac` of every column right-censored at its empirical
/// quantile.
pub fn censored_dataset(
    rng: &mut impl Rng,
    n: usize,
    p: usize,
    q: usize,
    censor_frac: f64,
) -> (CensoredDataset64, Array2<f64>, Array2<f64>) {
    let theta = random_spd(rng, p);
    let mut b = normal_matrix(rng, q + 1, p) * 0.7;
    for k in 0..p {
        b[[0, k]] = rng.gen_range(-1.0..1.0);
    }
    let x = normal_matrix(rng, n, q);
    let mut design = Array2::<f64>::ones((n, q + 1));
    design.slice_mut(ndarray::s![.., 1..]).assign(&x);
    let l = cholesky(&inverse(&theta));
    let e = normal_matrix(rng, n, p).dot(&l.t());
    let y = design.dot(&b) + e;
    let upper = Array1::from_shape_fn(p, |k| {
        let mut col = y.column(k).to_vec();
        col.sort_by(f64::total_cmp);
        let idx = ((1.0 - censor_frac) * n as f64).floor() as usize;
        if idx >= n {
            f64::INFINITY
        } else {
            col[idx.max(1)]
        }
    });
    let ds = CensoredDataset64::from_raw(y, Array1::from_elem(p, f64::NEG_INFINITY), upper, x).unwrap();
    (ds, b, theta)
}

pub fn uncensored_dataset(rng: &mut impl Rng, n: usize, p: usize, q: usize) -> CensoredDataset64 {
    censored_dataset(rng, n, p, q, 0.0).0
}

/// `tr(Theta S(B)) + 2 lambda sum_k theta_kk ||beta_k||_1` from first
/// principles.
pub fn trace_objective(
    y: ArrayView2<f64>,
    design: ArrayView2<f64>,
    theta: &Array2<f64>,
    b: &Array2<f64>,
    lambda: f64,
) -> f64 {
    let n = y.nrows() as f64;
    let r = &y - &design.dot(b);
    let s = r.t().dot(&r) / n;
    let tr: f64 = (theta * &s).sum();
    let pen: f64 = (0..b.ncols())
        .map(|k| theta[[k, k]] * b.column(k).iter().skip(1).map(|v| v.abs()).sum::<f64>())
        .sum();
    tr + 2.0 * lambda * pen
}

/// Accelerated proximal gradient (with adaptive restart) on the trace
/// objective over the full coefficient matrix.
pub fn fista_trace(moments: &ImputedMoments64, theta: &Array2<f64>, lambda: f64, max_iter: usize) -> Array2<f64> {
    let y = moments.y_hat.view();
    let x = moments.design.view();
    let n = y.nrows() as f64;
    let q1 = x.ncols();
    let p = y.ncols();
    let xtx = x.t().dot(&x) / n;
    let step = 1.0 / (2.0 * max_eigenvalue(&xtx) * max_eigenvalue(theta));
    let prox = |z: &Array2<f64>| -> Array2<f64> {
        Array2::from_shape_fn((q1, p), |(h, k)| {
            let v = z[[h, k]];
            if h == 0 {
                v
            } else {
                let t = step * 2.0 * lambda * theta[[k, k]];
                v.signum() * (v.abs() - t).max(0.0)
            }
        })
    };
    let grad = |b: &Array2<f64>| -> Array2<f64> {
        let r = &y - &x.dot(b);
        x.t().dot(&r.dot(theta)) * (-2.0 / n)
    };
    let mut b = Array2::<f64>::zeros((q1, p));
    let mut z = b.clone();
    let mut t = 1.0f64;
    let mut f_prev = f64::INFINITY;
    for _ in 0..max_iter {
        let next = prox(&(&z - &(grad(&z) * step)));
        let f = trace_objective(y, x, theta, &next, lambda);
        if f > f_prev {
            // restart the momentum
            t = 1.0;
            z = b.clone();
            f_prev = f64::INFINITY;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + &((&next - &b) * ((t - 1.0) / t_next));
        let delta = (&next - &b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        b = next;
        t = t_next;
        f_prev = f;
        if delta < 1e-15 {
            break;
        }
    }
    b
}

/// Draw from `N(0, 1)` restricted to `[a, inf)` with `a > 0`, by rejection
/// from a shifted exponential proposal.
pub fn exponential_tail(rng: &mut impl Rng, a: f64) -> f64 {
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = a + e / alpha;
        let u: f64 = rng.gen();
        if u <= (-(z - alpha) * (z - alpha) / 2.0).exp() {
            return z;
        }
    }
}

/// Draw from `N(0, 1)` restricted to `(a, b)`.
pub fn truncated_standard_normal(rng: &mut impl Rng, a: f64, b: f64) -> f64 {
    if a >= 3.0 {
        loop {
            let z = exponential_tail(rng, a);
            if z < b {
                return z;
            }
        }
    }
    if b <= -3.0 {
        return -truncated_standard_normal(rng, -b, -a);
    }
    if b - a < 0.5 {
        // uniform proposal under the density's maximum on the interval
        let peak = if a > 0.0 { a } else if b < 0.0 { b } else { 0.0 };
        loop {
            let z = rng.gen_range(a..b);
            let u: f64 = rng.gen();
            if u <= (-(z * z - peak * peak) / 2.0).exp() {
                return z;
            }
        }
    }
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z > a && z < b {
            return z;
        }
    }
}

/// Sample mean and variance with their standard errors.
pub struct SampleMoments {
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
}

pub fn sample_moments(draws: &[f64]) -> SampleMoments {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &d in draws {
        let c = (d - mean) * (d - mean);
        m2 += c;
        m4 += c * c;
    }
    m2 /= n;
    m4 /= n;
    SampleMoments {
        mean,
        mean_se: (m2 / n).sqrt(),
        variance: m2 * n / (n - 1.0),
        variance_se: ((m4 - m2 * m2) / n).sqrt(),
    }
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
