mod common;

use ccglasso::em::{fit_em, EmOptions};
use ccglasso::simbench::{self, SimScenario};
use ccglasso::tuning::{fit_path, lambda_rho_max, make_grid, PathOptions};
use ccglasso::{GlassoOptions, MomentMode};
use common::*;
use proptest::prelude::*;

fn tight() -> EmOptions<f64> {
    let mut o = EmOptions {
        outer_tol: 1e-10,
        inner_tol: 1e-10,
        max_em_iter: 500,
        max_m_iter: 200,
        glasso: GlassoOptions {
            tol: 1e-10,
            ..GlassoOptions::default()
        },
        ..EmOptions::default()
    };
    o.multilasso.tol = 1e-12;
    o.multilasso.lasso.tol = 1e-13;
    o
}

#[test]
fn permuting_responses_permutes_the_estimate() {
    let mut rng = rng(3);
    let (ds, _, _) = censored_dataset(&mut rng, 60, 4, 3, 0.25);
    let perm = [2, 0, 3, 1];
    let pds = ds.permute_columns(&perm).unwrap();
    let bd = lambda_rho_max(&ds).unwrap();
    let pbd = lambda_rho_max(&pds).unwrap();
    assert!((bd.lambda_max - pbd.lambda_max).abs() < 1e-12);
    assert!((bd.rho_max - pbd.rho_max).abs() < 1e-12);
    let (l, r) = (0.3 * bd.lambda_max, 0.3 * bd.rho_max);
    let a = fit_em(&ds, l, r, &bd.null_estimate, &tight()).unwrap().estimate;
    let b = fit_em(&pds, l, r, &pbd.null_estimate, &tight()).unwrap().estimate;
    for (j, &k) in perm.iter().enumerate() {
        for h in 0..a.b.nrows() {
            assert!((b.b[[h, j]] - a.b[[h, k]]).abs() < 1e-6, "B[{h},{j}]");
        }
        for (i, &m) in perm.iter().enumerate() {
            assert!((b.theta[[i, j]] - a.theta[[m, k]]).abs() < 1e-6, "Theta[{i},{j}]");
        }
    }
}

#[test]
fn path_is_bit_identical_and_starts_empty() {
    let mut rng = rng(5);
    let (ds, _, _) = censored_dataset(&mut rng, 50, 4, 3, 0.2);
    let bd = lambda_rho_max(&ds).unwrap();
    let grid = make_grid(bd.lambda_max, bd.rho_max, 3, 4, 0.2, 0.2).unwrap();
    let run = || fit_path(&ds, &grid, &bd.null_estimate, &PathOptions::default()).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.selected, b.selected);
    for (p, q) in a.points.iter().zip(&b.points) {
        let (fp, fq) = (p.fit.as_ref().unwrap(), q.fit.as_ref().unwrap());
        assert_eq!(fp.estimate, fq.estimate);
        assert_eq!(p.bic.map(f64::to_bits), q.bic.map(f64::to_bits));
        assert_eq!(p.warm_start, q.warm_start);
    }
    for li in 0..3 {
        let est = &a.point(li, 0).fit.as_ref().unwrap().estimate;
        assert_eq!(est.n_edges(), 0, "edges at rho_max for lambda index {li}");
    }
    assert_eq!(a.point(0, 0).fit.as_ref().unwrap().estimate.n_beta_nonzero(), 0);
}

#[test]
fn calibrated_intercepts_hit_the_censoring_rate() {
    let sc = SimScenario {
        n: 1_000_000,
        p: 5,
        q: 5,
        censor_fraction: 0.4,
        ..SimScenario::desk()
    };
    let truth = simbench::gen_truth(&sc).unwrap();
    let ds = simbench::simulate(&sc, &truth, 99).unwrap();
    let n = sc.n as f64;
    let band = 3.0 * (sc.target_pi * (1.0 - sc.target_pi) / n).sqrt();
    for k in 0..sc.n_censored_columns() {
        let freq = ds.status().column(k).iter().filter(|&&s| s != 0).count() as f64 / n;
        assert!((freq - sc.target_pi).abs() <= band, "column {k}: {freq}");
    }
    for k in sc.n_censored_columns()..sc.p {
        let count = ds.status().column(k).iter().filter(|&&s| s != 0).count();
        assert!(count <= 6, "column {k}: {count} censored");
    }
}

#[test]
fn desk_scenario_censors_near_target() {
    let sc = SimScenario::desk();
    let truth = simbench::gen_truth(&sc).unwrap();
    let ds = simbench::simulate(&sc, &truth, simbench::replicate_seed(sc.seed, 0)).unwrap();
    let kc = sc.n_censored_columns();
    let cells = (sc.n * kc) as f64;
    let censored = (0..kc)
        .map(|k| ds.status().column(k).iter().filter(|&&s| s != 0).count())
        .sum::<usize>() as f64;
    let band = 3.0 * (sc.target_pi * (1.0 - sc.target_pi) / cells).sqrt();
    assert!((censored / cells - sc.target_pi).abs() <= band);
    let others: usize = (kc..sc.p)
        .map(|k| ds.status().column(k).iter().filter(|&&s| s != 0).count())
        .sum();
    assert!(others <= 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn q_never_falls_within_an_m_step(
        seed in 0u64..10_000,
        frac in 0.05f64..0.45,
        lf in 0.05f64..1.0,
        rf in 0.05f64..1.0,
        mc in any::<bool>(),
    ) {
        let mut rng = rng(seed);
        let (ds, _, _) = censored_dataset(&mut rng, 30, 3, 2, frac);
        let bd = lambda_rho_max(&ds).unwrap();
        let mode = if mc {
            MomentMode::ExactMc { seed, n_samples: 2_000 }
        } else {
            MomentMode::Approx
        };
        let opts = EmOptions { mode, max_em_iter: 20, ..EmOptions::default() };
        let fit = fit_em(&ds, lf * bd.lambda_max, rf * bd.rho_max, &bd.null_estimate, &opts).unwrap();
        for step in &fit.q_trace {
            for w in step.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-10 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
            }
        }
        prop_assert!(fit.estimate.is_spd());
    }
}
