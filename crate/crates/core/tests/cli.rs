use std::path::Path;
use std::process::{Command, Output};

fn ccglasso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccglasso")).args(args).output().unwrap()
}

fn simulate(dir: &Path) {
    let out = dir.to_str().unwrap();
    let o = ccglasso(&["simulate", "--n", "40", "--p", "5", "--q", "3", "--seed", "8", "--out-dir", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

fn paths(dir: &Path) -> (String, String) {
    (
        dir.join("responses.csv").to_str().unwrap().to_owned(),
        dir.join("predictors.csv").to_str().unwrap().to_owned(),
    )
}

#[test]
fn methods_coincide_without_censoring() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let (r, x) = paths(tmp.path());
    let mut estimates = Vec::new();
    for method in ["em", "impute"] {
        let out = tmp.path().join(method);
        let o = ccglasso(&[
            "fit", "--responses", &r, "--predictors", &x, "--lambda", "0.05", "--rho", "0.05", "--method", method,
            "--out-dir", out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        estimates.push(std::fs::read(out.join("estimate.json")).unwrap());
        assert_eq!(
            std::fs::read(out.join("edges.csv")).unwrap(),
            std::fs::read(tmp.path().join("em").join("edges.csv")).unwrap()
        );
    }
    assert_eq!(estimates[0], estimates[1]);
}

#[test]
fn boundary_flags_give_the_null_model() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let (r, x) = paths(tmp.path());
    let out = tmp.path().join("null");
    let o = ccglasso(&[
        "fit", "--responses", &r, "--predictors", &x, "--upper", "50", "--lambda-max", "--rho-max", "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let edges = std::fs::read_to_string(out.join("edges.csv")).unwrap();
    assert_eq!(edges, "node_h,node_k,theta_hk\n");
    let est: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("estimate.json")).unwrap()).unwrap();
    for row in est["b"].as_array().unwrap().iter().skip(1) {
        assert!(row.as_array().unwrap().iter().all(|v| v.as_f64() == Some(0.0)));
    }
    assert_eq!(est["predictors"][0], "(Intercept)");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let (r, x) = paths(tmp.path());
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();

    let o = ccglasso(&["fit", "--responses", "missing.csv", "--predictors", &x, "--lambda", "0.1", "--rho", "0.1", "--out-dir", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());

    let o = ccglasso(&["fit", "--responses", &r, "--predictors", &x, "--lambda", "0.1", "--rho", "0.1", "--bogus", "--out-dir", out]);
    assert_eq!(o.status.code(), Some(1));

    let o = ccglasso(&["fit", "--responses", &r, "--predictors", &x, "--lambda", "-1", "--rho", "0.1", "--out-dir", out]);
    assert_eq!(o.status.code(), Some(1));

    // one EM iteration on censored data cannot meet the tolerance
    let o = ccglasso(&[
        "fit", "--responses", &r, "--predictors", &x, "--upper", "50", "--lambda", "0.01", "--rho", "0.01", "--max-iter",
        "1", "--out-dir", out,
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(Path::new(out).join("estimate.json").exists());
    assert!(Path::new(out).join("diagnostics.json").exists());

    let o = ccglasso(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn path_writes_every_grid_point() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let (r, x) = paths(tmp.path());
    let out = tmp.path().join("path");
    let o = ccglasso(&[
        "path", "--responses", &r, "--predictors", &x, "--upper", "50", "--n-lambda", "3", "--n-rho", "2", "--bic",
        "exact", "--out-dir", out.to_str().unwrap(),
    ]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("path.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    let sel: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("selected.json")).unwrap()).unwrap();
    assert_eq!(sel["bic_mode"], "exact");
    assert!(sel["selected_index"].as_u64().unwrap() < 6);
}

#[test]
fn moments_prints_json() {
    let o = ccglasso(&["moments", "--mean", "0", "--cov", "1", "--lower", "0", "--upper", "inf"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let m = v["mean"][0].as_f64().unwrap();
    assert!((m - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
}
