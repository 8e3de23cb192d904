//! The `B` sub-problem
//! `min_B tr{Theta S^(B)} + 2 lambda sum_k theta_kk ||beta_k||_1`,
//! solved column by column: with the other columns fixed, column `k` is a
//! lasso `(1/2n) ||y~_k - X~ b_k||^2 + lambda ||beta_k||_1` on a working
//! response that absorbs the residuals of the columns it is linked to
//! through `Theta`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estep::{residual_cov, ImputedMoments};
use crate::glasso::soft;
use crate::linalg;
use crate::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct LassoOptions<F> {
    /// Stop when no coordinate moves the fitted values by more than this
    /// (root mean square).
    pub tol: F,
    pub max_iter: usize,
}

impl<F: Scalar> Default for LassoOptions<F> {
    fn default() -> Self {
        Self {
            tol: F::lit(1e-9),
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MultilassoOptions<F> {
    /// Stop when a full cycle over the columns changes no coefficient by
    /// more than this (in fitted-value units).
    pub tol: F,
    pub max_iter: usize,
    pub lasso: LassoOptions<F>,
}

impl<F: Scalar> Default for MultilassoOptions<F> {
    fn default() -> Self {
        Self {
            tol: F::lit(1e-8),
            max_iter: 1000,
            lasso: LassoOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit<F> {
    pub coef: Array1<F>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct MultilassoFit<F> {
    pub b: Array2<F>,
    pub cycles: usize,
    pub converged: bool,
}

#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut s = F::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

/// `n^{-1} x^T (y - mean(y))`, evaluated exactly as the first lasso step
/// from zero slopes evaluates it, so a penalty equal to the largest of these
/// keeps every slope at zero.
pub fn centered_gradient<F: Scalar>(x: &[F], y: &[F]) -> F {
    let n = F::from_count(y.len());
    let mean = y.iter().copied().sum::<F>() / n;
    let r: Vec<F> = y.iter().map(|v| *v - mean).collect();
    dot(x, &r) / n
}

/// Design in column-major form plus the scaled squared column norms.
pub(crate) struct Design<F> {
    /// `(q+1) x n`, row `h` is column `h` of `X~`.
    pub xt: Array2<F>,
    /// `||X~_h||^2 / n`.
    pub col_sq: Vec<F>,
}

impl<F: Scalar> Design<F> {
    pub fn new(design: ArrayView2<F>) -> Self {
        let n = F::from_count(design.nrows());
        let xt = design.t().as_standard_layout().into_owned();
        let col_sq = xt
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| *v * *v).sum::<F>() / n)
            .collect();
        Self { xt, col_sq }
    }

    fn col(&self, h: usize) -> &[F] {
        let row = self.xt.row(h);
        row.to_slice().expect("standard layout")
    }
}

/// Lasso with unpenalized intercept (coordinate 0) by cyclic coordinate
/// descent with an active-set phase.
pub fn lasso_cd<F: Scalar>(
    y_tilde: ArrayView1<F>,
    design: ArrayView2<F>,
    lambda: F,
    init: ArrayView1<F>,
    opts: &LassoOptions<F>,
) -> Result<LassoFit<F>> {
    if design.nrows() != y_tilde.len() || init.len() != design.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries, design is {}x{}, init has {}",
            y_tilde.len(),
            design.nrows(),
            design.ncols(),
            init.len()
        )));
    }
    if !(lambda >= F::zero()) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {}", lambda)));
    }
    let d = Design::new(design);
    let y = y_tilde.to_vec();
    let mut coef = init.to_vec();
    let (iterations, converged) = lasso_inner(&y, &d, lambda, &mut coef, opts);
    Ok(LassoFit {
        coef: Array1::from(coef),
        iterations,
        converged,
    })
}

pub(crate) fn lasso_inner<F: Scalar>(
    y: &[F],
    d: &Design<F>,
    lambda: F,
    coef: &mut [F],
    opts: &LassoOptions<F>,
) -> (usize, bool) {
    let n = y.len();
    let nf = F::from_count(n);
    let q1 = coef.len();

    let mut r: Vec<F> = y.to_vec();
    for h in 1..q1 {
        if coef[h] != F::zero() {
            let b = coef[h];
            for (ri, x) in r.iter_mut().zip(d.col(h)) {
                *ri -= *x * b;
            }
        }
    }
    let b0 = r.iter().copied().sum::<F>() / nf;
    coef[0] = b0;
    for ri in r.iter_mut() {
        *ri -= b0;
    }

    let sweep = |set: &mut dyn Iterator<Item = usize>, coef: &mut [F], r: &mut [F]| -> F {
        let mut change = F::zero();
        for h in set {
            let c = d.col_sq[h];
            if c == F::zero() {
                continue;
            }
            let x = d.col(h);
            let z = dot(x, r) / nf + c * coef[h];
            let new = soft(z, lambda) / c;
            let delta = new - coef[h];
            if delta != F::zero() {
                for (ri, xi) in r.iter_mut().zip(x) {
                    *ri -= *xi * delta;
                }
                coef[h] = new;
                change = change.max(delta.abs() * c.sqrt());
            }
        }
        let m = r.iter().copied().sum::<F>() / nf;
        if m != F::zero() {
            coef[0] += m;
            for ri in r.iter_mut() {
                *ri -= m;
            }
            change = change.max(m.abs());
        }
        change
    };

    let mut iterations = 0;
    let mut full_sweeps = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        full_sweeps += 1;
        let change = sweep(&mut (1..q1), coef, &mut r);
        if change < opts.tol {
            return (iterations, true);
        }
        if full_sweeps < 2 {
            continue;
        }
        let active: Vec<usize> = (1..q1).filter(|&h| coef[h] != F::zero()).collect();
        while iterations < opts.max_iter {
            iterations += 1;
            let change = sweep(&mut active.iter().copied(), coef, &mut r);
            if change < opts.tol {
                break;
            }
        }
    }
    (iterations, false)
}

/// Working response `y~_k = y^_k + theta_kk^{-1} sum_{h != k} theta_hk (y^_h - X~ b_h)`.
pub fn working_response<F: Scalar>(
    k: usize,
    moments: &ImputedMoments<F>,
    b: ArrayView2<F>,
    theta: ArrayView2<F>,
) -> Result<Array1<F>> {
    let p = moments.p();
    if k >= p || theta.dim() != (p, p) || b.ncols() != p {
        return Err(Error::DimensionMismatch("working response shapes".into()));
    }
    let tkk = theta[[k, k]];
    if !(tkk > F::zero()) {
        return Err(Error::NonPositivePrecisionDiagonal(k));
    }
    let resid = &moments.y_hat - &moments.design.dot(&b);
    let mut y = moments.y_hat.column(k).to_owned();
    for h in 0..p {
        if h != k && theta[[h, k]] != F::zero() {
            let w = theta[[h, k]] / tkk;
            y.zip_mut_with(&resid.column(h), |a, r| *a += w * *r);
        }
    }
    Ok(y)
}

/// Connected components of the support graph of `Theta`.
pub fn parallel_blocks<F: Scalar>(theta: ArrayView2<F>) -> Vec<Vec<usize>> {
    linalg::connected_components(theta.nrows(), |h, k| {
        theta[[h, k]] != F::zero() || theta[[k, h]] != F::zero()
    })
}

/// `tr{Theta S^(B)} + 2 lambda sum_k theta_kk ||beta_k||_1`.
pub fn trace_objective<F: Scalar>(
    moments: &ImputedMoments<F>,
    theta: ArrayView2<F>,
    b: ArrayView2<F>,
    lambda: F,
) -> F {
    let resid = &moments.y_hat - &moments.design.dot(&b);
    let s = residual_cov(resid.view(), moments);
    let tr: F = theta.iter().zip(s.iter()).map(|(a, b)| *a * *b).sum();
    let mut pen = F::zero();
    for k in 0..b.ncols() {
        let l1: F = b.column(k).iter().skip(1).map(|v| v.abs()).sum();
        pen += theta[[k, k]] * l1;
    }
    tr + F::lit(2.0) * lambda * pen
}

/// Block coordinate descent over the columns of `B`, in parallel over the
/// connected components of `Theta`.
pub fn multilasso_fit<F: Scalar>(
    moments: &ImputedMoments<F>,
    theta: ArrayView2<F>,
    lambda: F,
    init: ArrayView2<F>,
    opts: &MultilassoOptions<F>,
) -> Result<MultilassoFit<F>> {
    let p = moments.p();
    let q1 = moments.design.ncols();
    if theta.dim() != (p, p) || init.dim() != (q1, p) {
        return Err(Error::DimensionMismatch(format!(
            "Theta is {}x{}, init is {}x{}, expected {}x{} and {}x{}",
            theta.nrows(),
            theta.ncols(),
            init.nrows(),
            init.ncols(),
            p,
            p,
            q1,
            p
        )));
    }
    if !(lambda >= F::zero()) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {}", lambda)));
    }
    for k in 0..p {
        if !(theta[[k, k]] > F::zero()) {
            return Err(Error::NonPositivePrecisionDiagonal(k));
        }
    }
    let d = Design::new(moments.design.view());
    let groups = parallel_blocks(theta);
    let fits: Vec<(Vec<Vec<F>>, usize, bool)> = groups
        .par_iter()
        .map(|g| fit_group(g, moments, &d, theta, lambda, init, opts))
        .collect();

    let mut b = init.to_owned();
    let mut cycles = 0;
    let mut converged = true;
    for (g, (cols, c, ok)) in groups.iter().zip(fits) {
        for (&k, col) in g.iter().zip(cols) {
            b.column_mut(k).assign(&Array1::from(col));
        }
        cycles = cycles.max(c);
        converged &= ok;
    }
    Ok(MultilassoFit { b, cycles, converged })
}

fn fit_group<F: Scalar>(
    cols: &[usize],
    moments: &ImputedMoments<F>,
    d: &Design<F>,
    theta: ArrayView2<F>,
    lambda: F,
    init: ArrayView2<F>,
    opts: &MultilassoOptions<F>,
) -> (Vec<Vec<F>>, usize, bool) {
    let n = moments.n();
    let q1 = d.xt.nrows();
    let yhat: Vec<Vec<F>> = cols.iter().map(|&k| moments.y_hat.column(k).to_vec()).collect();
    let mut coef: Vec<Vec<F>> = cols.iter().map(|&k| init.column(k).to_vec()).collect();
    let residual = |y: &[F], b: &[F]| -> Vec<F> {
        let mut r = y.to_vec();
        for h in 0..q1 {
            if b[h] != F::zero() {
                for (ri, x) in r.iter_mut().zip(d.col(h)) {
                    *ri -= *x * b[h];
                }
            }
        }
        r
    };
    let mut resid: Vec<Vec<F>> = (0..cols.len()).map(|a| residual(&yhat[a], &coef[a])).collect();
    let mut ytil = vec![F::zero(); n];
    let mut new = vec![F::zero(); q1];
    for cycle in 1..=opts.max_iter {
        let mut change = F::zero();
        for (a, &k) in cols.iter().enumerate() {
            let tkk = theta[[k, k]];
            ytil.copy_from_slice(&yhat[a]);
            for (bidx, &h) in cols.iter().enumerate() {
                if h != k && theta[[h, k]] != F::zero() {
                    let w = theta[[h, k]] / tkk;
                    for (yi, ri) in ytil.iter_mut().zip(&resid[bidx]) {
                        *yi += w * *ri;
                    }
                }
            }
            new.copy_from_slice(&coef[a]);
            lasso_inner(&ytil, d, lambda, &mut new, &opts.lasso);
            for h in 0..q1 {
                let scale = if h == 0 { F::one() } else { d.col_sq[h].sqrt() };
                change = change.max((new[h] - coef[a][h]).abs() * scale);
            }
            coef[a].copy_from_slice(&new);
            resid[a] = residual(&yhat[a], &coef[a]);
        }
        if change < opts.tol {
            return (coef, cycle, true);
        }
    }
    (coef, opts.max_iter, false)
}
