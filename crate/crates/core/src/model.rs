//! The estimated pair `(B, Theta)`.

use ndarray::{Array1, Array2, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::Scalar;

/// Coefficients `B` (`(q+1) x p`, row 0 holds the intercepts) and precision
/// matrix `Theta` (`p x p`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEstimate<F> {
    pub b: Array2<F>,
    pub theta: Array2<F>,
}

impl<F: Scalar> ModelEstimate<F> {
    pub fn new(b: Array2<F>, theta: Array2<F>) -> Result<Self> {
        let p = b.ncols();
        if theta.dim() != (p, p) || b.nrows() < 1 {
            return Err(Error::DimensionMismatch(format!(
                "B is {}x{} but Theta is {}x{}",
                b.nrows(),
                b.ncols(),
                theta.nrows(),
                theta.ncols()
            )));
        }
        Ok(Self { b, theta })
    }

    /// Intercepts `mu`, zero slopes and diagonal precision `1 / sigma2`.
    pub fn null(q: usize, mu: &Array1<F>, sigma2: &Array1<F>) -> Self {
        let p = mu.len();
        let mut b = Array2::zeros((q + 1, p));
        b.row_mut(0).assign(mu);
        let theta = Array2::from_diag(&sigma2.mapv(|s| F::one() / s));
        Self { b, theta }
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn q(&self) -> usize {
        self.b.nrows() - 1
    }

    /// Fitted means `X~ B` for a design matrix with intercept column.
    pub fn fitted(&self, design: ArrayView2<F>) -> Array2<F> {
        design.dot(&self.b)
    }

    pub fn n_beta_nonzero(&self) -> usize {
        self.b.rows().into_iter().skip(1).flatten().filter(|v| **v != F::zero()).count()
    }

    pub fn n_edges(&self) -> usize {
        let p = self.p();
        (0..p)
            .flat_map(|h| ((h + 1)..p).map(move |k| (h, k)))
            .filter(|&(h, k)| self.theta[[h, k]] != F::zero())
            .count()
    }

    /// `sum_k theta_kk ||beta_k||_1`.
    pub fn weighted_l1(&self) -> F {
        let mut s = F::zero();
        for k in 0..self.p() {
            let l1: F = self.b.column(k).iter().skip(1).map(|v| v.abs()).sum();
            s += self.theta[[k, k]] * l1;
        }
        s
    }

    /// Off-diagonal l1 norm of `Theta`, counting both triangles.
    pub fn theta_offdiag_l1(&self) -> F {
        offdiag_l1(self.theta.view())
    }

    pub fn is_spd(&self) -> bool {
        linalg::is_spd(self.theta.view())
    }

    pub fn to_f64(&self) -> ModelEstimate<f64> {
        ModelEstimate {
            b: self.b.mapv(|v| v.as_f64()),
            theta: self.theta.mapv(|v| v.as_f64()),
        }
    }

    /// Serializable form: dense `B`, and `Theta` as edge list plus diagonal.
    pub fn to_record(&self, response_names: &[String], predictor_names: &[String]) -> EstimateRecord {
        let p = self.p();
        let mut edges = Vec::new();
        for h in 0..p {
            for k in (h + 1)..p {
                let v = self.theta[[h, k]];
                if v != F::zero() {
                    edges.push(EdgeRecord {
                        node_h: response_names[h].clone(),
                        node_k: response_names[k].clone(),
                        theta_hk: v.as_f64(),
                    });
                }
            }
        }
        let mut rows = vec!["(Intercept)".to_string()];
        rows.extend(predictor_names.iter().cloned());
        EstimateRecord {
            responses: response_names.to_vec(),
            predictors: rows,
            b: self
                .b
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|v| v.as_f64()).collect())
                .collect(),
            theta_diagonal: self.theta.diag().iter().map(|v| v.as_f64()).collect(),
            theta_edges: edges,
        }
    }
}

pub fn offdiag_l1<F: Scalar>(a: ArrayView2<F>) -> F {
    let mut s = F::zero();
    for ((i, j), v) in a.indexed_iter() {
        if i != j {
            s += v.abs();
        }
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeRecord {
    pub node_h: String,
    pub node_k: String,
    pub theta_hk: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRecord {
    pub responses: Vec<String>,
    pub predictors: Vec<String>,
    pub b: Vec<Vec<f64>>,
    pub theta_diagonal: Vec<f64>,
    pub theta_edges: Vec<EdgeRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn null_model_layout() {
        let m = ModelEstimate::null(2, &array![1.0, 2.0], &array![4.0, 0.5]);
        assert_eq!(m.b, array![[1.0, 2.0], [0.0, 0.0], [0.0, 0.0]]);
        assert_eq!(m.theta, array![[0.25, 0.0], [0.0, 2.0]]);
        assert_eq!((m.n_edges(), m.n_beta_nonzero()), (0, 0));
    }

    #[test]
    fn penalty_terms() {
        let m = ModelEstimate::new(
            array![[9.0, 9.0], [1.0, 0.0], [-2.0, 0.5]],
            array![[2.0, -0.3], [-0.3, 1.0]],
        )
        .unwrap();
        assert_eq!(m.weighted_l1(), 2.0 * 3.0 + 0.5);
        assert_eq!(m.theta_offdiag_l1(), 0.6);
        assert_eq!((m.n_edges(), m.n_beta_nonzero()), (1, 3));
    }
}
