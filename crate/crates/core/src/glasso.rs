//! Graphical lasso with an unpenalized diagonal:
//! maximize `log det Theta - tr(Theta S) - rho sum_{h != k} |theta_hk|`.
//!
//! The solver works on the precision matrix directly. For each column it
//! minimizes the exact block objective in `(theta_12, theta_22)` with the rest
//! of `Theta` fixed, which makes every column update an ascent step.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::offdiag_l1;
use crate::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct GlassoOptions<F> {
    /// Stop once the mean absolute change of `Sigma` over a sweep drops below this.
    pub tol: F,
    pub max_iter: usize,
    /// Split the problem into the connected components of `|s_hk| > rho`.
    pub screening: bool,
}

impl<F: Scalar> Default for GlassoOptions<F> {
    fn default() -> Self {
        Self {
            tol: F::lit(1e-6),
            max_iter: 500,
            screening: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlassoSolution<F> {
    pub theta: Array2<F>,
    pub sigma: Array2<F>,
    pub iterations: usize,
    pub kkt_residual: F,
    pub converged: bool,
}

/// Graphical lasso objective `log det Theta - tr(Theta S) - rho ||Theta||_1^-`.
pub fn glasso_objective<F: Scalar>(theta: ArrayView2<F>, s: ArrayView2<F>, rho: F) -> Result<F> {
    let ld = linalg::log_det_spd(theta)?;
    let tr: F = theta.iter().zip(s.iter()).map(|(a, b)| *a * *b).sum();
    Ok(ld - tr - rho * offdiag_l1(theta))
}

/// Largest violation of the stationarity conditions
/// `sigma_hk - s_hk = rho sign(theta_hk)` on the support,
/// `|sigma_hk - s_hk| <= rho` off it, and `sigma_kk = s_kk`.
pub fn glasso_kkt<F: Scalar>(theta: ArrayView2<F>, sigma: ArrayView2<F>, s: ArrayView2<F>, rho: F) -> F {
    let p = theta.nrows();
    let mut worst = F::zero();
    for h in 0..p {
        for k in 0..p {
            let g = sigma[[h, k]] - s[[h, k]];
            let v = if h == k {
                g.abs()
            } else if theta[[h, k]] != F::zero() {
                (g - rho * theta[[h, k]].signum()).abs()
            } else {
                (g.abs() - rho).max(F::zero())
            };
            worst = worst.max(v);
        }
    }
    worst
}

/// Connected components of the graph with an edge wherever `|s_hk| > rho`.
pub fn block_partition<F: Scalar>(s: ArrayView2<F>, rho: F) -> Vec<Vec<usize>> {
    linalg::connected_components(s.nrows(), |h, k| s[[h, k]].abs() > rho)
}

pub fn glasso_fit<F: Scalar>(
    s: ArrayView2<F>,
    rho: F,
    init: Option<ArrayView2<F>>,
    opts: &GlassoOptions<F>,
) -> Result<GlassoSolution<F>> {
    let p = s.nrows();
    if s.ncols() != p || p == 0 {
        return Err(Error::DimensionMismatch(format!(
            "S is {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    if let Some(t) = init {
        if t.dim() != (p, p) {
            return Err(Error::DimensionMismatch("warm start has the wrong shape".into()));
        }
    }
    if !(rho >= F::zero()) {
        return Err(Error::InvalidArgument(format!("rho must be nonnegative, got {}", rho)));
    }
    for k in 0..p {
        if !(s[[k, k]] > F::zero()) {
            return Err(Error::NonPositiveDiagonal(k));
        }
    }
    if rho == F::zero() && !linalg::is_spd(s) {
        return Err(Error::SingularCovariance);
    }

    let blocks = if opts.screening {
        block_partition(s, rho)
    } else {
        vec![(0..p).collect()]
    };
    // a warm start that couples different blocks is solved jointly so the
    // iterates stay monotone from it
    let init_fits_blocks = init.map_or(true, |t| {
        let mut label = vec![0usize; p];
        for (b, comp) in blocks.iter().enumerate() {
            for &v in comp {
                label[v] = b;
            }
        }
        (0..p).all(|h| (0..p).all(|k| label[h] == label[k] || t[[h, k]] == F::zero()))
    });
    if blocks.len() == 1 || !init_fits_blocks {
        return solve_block(s, rho, init, opts);
    }

    let sols: Vec<(Vec<usize>, GlassoSolution<F>)> = blocks
        .par_iter()
        .map(|comp| {
            let sub = linalg::submatrix(s, comp, comp);
            let sub_init = init.map(|t| linalg::submatrix(t, comp, comp));
            solve_block(sub.view(), rho, sub_init.as_ref().map(|a| a.view()), opts)
                .map(|sol| (comp.clone(), sol))
        })
        .collect::<Result<_>>()?;

    let mut theta = Array2::<F>::zeros((p, p));
    let mut sigma = Array2::<F>::zeros((p, p));
    let mut iterations = 0;
    let mut converged = true;
    for (comp, sol) in &sols {
        for (a, &h) in comp.iter().enumerate() {
            for (b, &k) in comp.iter().enumerate() {
                theta[[h, k]] = sol.theta[[a, b]];
                sigma[[h, k]] = sol.sigma[[a, b]];
            }
        }
        iterations = iterations.max(sol.iterations);
        converged &= sol.converged;
    }
    let kkt_residual = glasso_kkt(theta.view(), sigma.view(), s, rho);
    Ok(GlassoSolution {
        theta,
        sigma,
        iterations,
        kkt_residual,
        converged,
    })
}

fn solve_block<F: Scalar>(
    s: ArrayView2<F>,
    rho: F,
    init: Option<ArrayView2<F>>,
    opts: &GlassoOptions<F>,
) -> Result<GlassoSolution<F>> {
    let p = s.nrows();
    if p == 1 {
        let theta = Array2::from_elem((1, 1), F::one() / s[[0, 0]]);
        let sigma = Array2::from_elem((1, 1), s[[0, 0]]);
        return Ok(GlassoSolution {
            theta,
            sigma,
            iterations: 0,
            kkt_residual: F::zero(),
            converged: true,
        });
    }
    let (mut theta, mut w) = match init {
        Some(t) if linalg::is_spd(t) => (t.to_owned(), linalg::spd_inverse(t)?),
        _ => (
            Array2::from_diag(&s.diag().mapv(|v| F::one() / v)),
            Array2::from_diag(&s.diag().to_owned()),
        ),
    };

    let m = p - 1;
    let mut a = Array2::<F>::zeros((m, m));
    let mut t = Array1::<F>::zeros(m);
    let mut at = Array1::<F>::zeros(m);
    let mut s12 = Array1::<F>::zeros(m);
    let mut others = vec![0usize; m];
    let mut iterations = 0;
    let mut converged = false;
    let pf = F::from_count(p * p);

    while iterations < opts.max_iter {
        iterations += 1;
        let w_old = w.clone();
        for j in 0..p {
            for (idx, o) in others.iter_mut().enumerate() {
                *o = if idx < j { idx } else { idx + 1 };
            }
            let w22 = w[[j, j]];
            for (x, &h) in others.iter().enumerate() {
                s12[x] = s[[h, j]];
                t[x] = theta[[h, j]];
                for (y, &k) in others.iter().enumerate() {
                    // inverse of Theta_11 from the current Sigma
                    a[[x, y]] = w[[h, k]] - w[[h, j]] * w[[k, j]] / w22;
                }
            }
            let s22 = s[[j, j]];
            column_cd(&a, &s12, s22, rho, &mut t, &mut at);
            // at = A t after column_cd
            let tat: F = t.iter().zip(at.iter()).map(|(x, y)| *x * *y).sum();
            theta[[j, j]] = F::one() / s22 + tat;
            for (x, &h) in others.iter().enumerate() {
                theta[[h, j]] = t[x];
                theta[[j, h]] = t[x];
            }
            w[[j, j]] = s22;
            for (x, &h) in others.iter().enumerate() {
                let v = -s22 * at[x];
                w[[h, j]] = v;
                w[[j, h]] = v;
                for (y, &k) in others.iter().enumerate() {
                    w[[h, k]] = a[[x, y]] + s22 * at[x] * at[y];
                }
            }
        }
        // refresh Sigma from Theta so rank-one drift cannot accumulate
        w = match linalg::spd_inverse(theta.view()) {
            Ok(inv) => inv,
            Err(_) => w,
        };
        let delta: F = w.iter().zip(w_old.iter()).map(|(a, b)| (*a - *b).abs()).sum::<F>() / pf;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    let kkt_residual = glasso_kkt(theta.view(), w.view(), s, rho);
    Ok(GlassoSolution {
        theta,
        sigma: w,
        iterations,
        kkt_residual,
        converged,
    })
}

/// Coordinate descent for `min_t s22 t^T A t + 2 s12^T t + 2 rho |t|_1`,
/// warm-started at `t`. Leaves `at = A t`.
fn column_cd<F: Scalar>(a: &Array2<F>, s12: &Array1<F>, s22: F, rho: F, t: &mut Array1<F>, at: &mut Array1<F>) {
    let m = t.len();
    for x in 0..m {
        let mut v = F::zero();
        for y in 0..m {
            v += a[[x, y]] * t[y];
        }
        at[x] = v;
    }
    let scale = s12.iter().fold(F::zero(), |acc, v| acc.max(v.abs())).max(s22);
    let tol = F::epsilon() * F::lit(16.0) * scale;
    for _ in 0..1000 {
        let mut change = F::zero();
        for k in 0..m {
            let akk = a[[k, k]];
            let rest = at[k] - akk * t[k];
            let z = -(s12[k] + s22 * rest);
            let new = soft(z, rho) / (s22 * akk);
            let d = new - t[k];
            if d != F::zero() {
                for x in 0..m {
                    at[x] += a[[x, k]] * d;
                }
                t[k] = new;
                change = change.max((d * s22 * akk).abs());
            }
        }
        if change <= tol {
            break;
        }
    }
}

#[inline]
pub(crate) fn soft<F: Scalar>(z: F, gamma: F) -> F {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        F::zero()
    }
}
