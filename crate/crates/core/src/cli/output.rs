use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use ndarray::Array2;
use serde::Serialize;

use ccglasso::model::EstimateRecord;
use ccglasso::tuning::PathResult;
use ccglasso::FitResult64;

pub fn write_text(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    write_text(dir, name, &body)
}

/// `node_h,node_k,theta_hk` for every nonzero edge with `h < k`.
pub fn edges_csv(rec: &EstimateRecord) -> String {
    let mut s = String::from("node_h,node_k,theta_hk\n");
    for e in &rec.theta_edges {
        let _ = writeln!(s, "{},{},{}", e.node_h, e.node_k, e.theta_hk);
    }
    s
}

pub fn diagonal_csv(rec: &EstimateRecord) -> String {
    let mut s = String::from("node,theta_kk\n");
    for (name, v) in rec.responses.iter().zip(&rec.theta_diagonal) {
        let _ = writeln!(s, "{},{}", name, v);
    }
    s
}

pub fn matrix_csv(m: &Array2<f64>, header: &[String]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
pub struct Diagnostics<'a> {
    pub method: &'a str,
    pub moment_mode: &'a str,
    pub lambda: f64,
    pub rho: f64,
    pub converged: bool,
    pub em_iterations: usize,
    pub m_iterations: &'a [usize],
    pub kkt_residual: f64,
    pub q_decreases: usize,
    pub q_loglik: f64,
    pub q_trace: &'a [Vec<f64>],
}

impl<'a> Diagnostics<'a> {
    pub fn new(fit: &'a FitResult64, method: &'a str, moment_mode: &'a str) -> Self {
        Self {
            method,
            moment_mode,
            lambda: fit.lambda,
            rho: fit.rho,
            converged: fit.converged,
            em_iterations: fit.em_iterations,
            m_iterations: &fit.m_iterations,
            kkt_residual: fit.kkt_residual,
            q_decreases: fit.q_decreases,
            q_loglik: fit.q_loglik,
            q_trace: &fit.q_trace,
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per grid point in fitting order.
pub fn path_csv(path: &PathResult<f64>) -> String {
    let mut s = String::from(
        "order,lambda_index,rho_index,lambda,rho,warm_start_from,df,bic,n_edges,n_beta,em_iters,kkt_residual,converged,error\n",
    );
    for (i, pt) in path.points.iter().enumerate() {
        let warm = pt
            .warm_start
            .map(|(l, r)| format!("{}:{}", l, r))
            .unwrap_or_else(|| "null".into());
        let (n_edges, n_beta, iters, kkt, conv, err) = match &pt.fit {
            Ok(f) => (
                f.estimate.n_edges().to_string(),
                f.estimate.n_beta_nonzero().to_string(),
                f.em_iterations.to_string(),
                f.kkt_residual.to_string(),
                f.converged.to_string(),
                String::new(),
            ),
            Err(e) => (
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "false".into(),
                format!("\"{}\"", e.replace('"', "'")),
            ),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            i,
            pt.lambda_index,
            pt.rho_index,
            pt.lambda,
            pt.rho,
            warm,
            opt(pt.df),
            opt(pt.bic),
            n_edges,
            n_beta,
            iters,
            kkt,
            conv,
            err
        );
    }
    s
}
