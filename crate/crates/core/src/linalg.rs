//! Small dense linear-algebra kernels for symmetric matrices.
//!
//! Problem sizes here are a few hundred at most, so plain triangular
//! algorithms on `ndarray` storage are enough.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::Scalar;

/// Lower Cholesky factor `L` with `a = L L^T`.
pub fn cholesky<F: Scalar>(a: ArrayView2<F>) -> Result<Array2<F>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "cholesky of a {}x{} matrix",
            n,
            a.ncols()
        )));
    }
    let mut l = Array2::<F>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > F::zero()) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite("cholesky pivot is not positive"));
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Ok(l)
}

/// Solve `L L^T x = b` given the lower factor.
pub fn cholesky_solve<F: Scalar>(l: ArrayView2<F>, b: ArrayView1<F>) -> Array1<F> {
    let n = l.nrows();
    let mut y = b.to_owned();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse<F: Scalar>(a: ArrayView2<F>) -> Result<Array2<F>> {
    let l = cholesky(a)?;
    Ok(inverse_from_cholesky(l.view()))
}

pub fn inverse_from_cholesky<F: Scalar>(l: ArrayView2<F>) -> Array2<F> {
    let n = l.nrows();
    // invert L in place, then form L^{-T} L^{-1}
    let mut linv = Array2::<F>::zeros((n, n));
    for j in 0..n {
        linv[[j, j]] = F::one() / l[[j, j]];
        for i in (j + 1)..n {
            let mut s = F::zero();
            for k in j..i {
                s -= l[[i, k]] * linv[[k, j]];
            }
            linv[[i, j]] = s / l[[i, i]];
        }
    }
    let mut inv = Array2::<F>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = F::zero();
            for k in i..n {
                s += linv[[k, i]] * linv[[k, j]];
            }
            inv[[i, j]] = s;
            inv[[j, i]] = s;
        }
    }
    inv
}

/// `log det a` for symmetric positive definite `a`.
pub fn log_det_spd<F: Scalar>(a: ArrayView2<F>) -> Result<F> {
    let l = cholesky(a)?;
    Ok(l.diag().iter().map(|d| d.ln()).sum::<F>() * F::lit(2.0))
}

pub fn is_spd<F: Scalar>(a: ArrayView2<F>) -> bool {
    cholesky(a).is_ok()
}

/// Replace `a` by `(a + a^T) / 2`.
pub fn symmetrize<F: Scalar>(a: &mut Array2<F>) {
    let n = a.nrows();
    let half = F::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (a[[i, j]] + a[[j, i]]) * half;
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn sym_eigenvalues<F: Scalar>(a: ArrayView2<F>) -> Array1<F> {
    let n = a.nrows();
    let mut m = a.to_owned();
    let eps = F::epsilon();
    for _sweep in 0..100 {
        let mut off = F::zero();
        let mut total = F::zero();
        for i in 0..n {
            for j in 0..n {
                let v = m[[i, j]] * m[[i, j]];
                total += v;
                if i != j {
                    off += v;
                }
            }
        }
        if off <= eps * eps * total || off == F::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == F::zero() {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (F::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<F> = (0..n).map(|i| m[[i, i]]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Array1::from(ev)
}

pub fn min_eigenvalue<F: Scalar>(a: ArrayView2<F>) -> F {
    let ev = sym_eigenvalues(a);
    if ev.is_empty() {
        F::zero()
    } else {
        ev[0]
    }
}

/// Connected components of the undirected graph on `0..n` with edge `(i, j)`
/// whenever `edge(i, j)` holds for `i < j`. Components are ordered by their
/// smallest vertex and each is sorted ascending.
pub fn connected_components(n: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut comp = vec![start];
        label[start] = id;
        let mut head = 0;
        while head < comp.len() {
            let v = comp[head];
            head += 1;
            for w in 0..n {
                if label[w] == usize::MAX && w != v {
                    let (a, b) = if v < w { (v, w) } else { (w, v) };
                    if edge(a, b) {
                        label[w] = id;
                        comp.push(w);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Sub-matrix with the given row and column indices.
pub fn submatrix<F: Scalar>(a: ArrayView2<F>, rows: &[usize], cols: &[usize]) -> Array2<F> {
    Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| a[[rows[i], cols[j]]])
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Cached 20-node rule.
pub(crate) fn gauss_legendre_20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn inverse_of_spd_matrix() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let inv = spd_inverse(a.view()).unwrap();
        let id = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(id[[i, j]], e, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn log_det_matches_eigenvalues() {
        let a = array![[2.0, -0.5], [-0.5, 1.0]];
        let ld = log_det_spd(a.view()).unwrap();
        assert_abs_diff_eq!(ld, (2.0f64 - 0.25).ln(), epsilon = 1e-14);
        let ev = sym_eigenvalues(a.view());
        assert_abs_diff_eq!(ev[0] * ev[1], 1.75, epsilon = 1e-13);
    }

    #[test]
    fn rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(a.view()).is_err());
        assert_abs_diff_eq!(min_eigenvalue(a.view()), -1.0, epsilon = 1e-13);
    }

    #[test]
    fn components_of_two_blocks() {
        let comps = connected_components(5, |i, j| (i, j) == (0, 3) || (i, j) == (1, 2));
        assert_eq!(comps, vec![vec![0, 3], vec![1, 2], vec![4]]);
    }

    #[test]
    fn cholesky_solve_roundtrip() {
        let a = array![[4.0f32, 1.0], [1.0, 3.0]];
        let l = cholesky(a.view()).unwrap();
        let x = cholesky_solve(l.view(), array![1.0f32, 2.0].view());
        let b = a.dot(&x);
        assert!((b[0] - 1.0).abs() < 1e-5 && (b[1] - 2.0).abs() < 1e-5);
    }
}
