mod common;

use common::dense_trim_oracle;
use ddl_core::bench::{error_decomposition, jaccard_topk, run_replication, scaled_bias_terms, Method};
use ddl_core::ddl::{fit_detailed, DdlConfig};
use ddl_core::simgen::{sample_dataset, Scenario};
use proptest::prelude::*;

#[test]
fn bias_terms_match_dense_evaluation() {
    let sc = Scenario::default();
    let d = sample_dataset(&sc, 3).unwrap();
    let cfg = DdlConfig::default();
    let j = sc.target;
    let f = fit_detailed(&d.x, &d.y, &[j], &cfg).unwrap();
    let dir = f.directions[0].as_ref().unwrap();
    let beta_init = f.init.coef();
    let (b_beta, b_b) = scaled_bias_terms(&f.data.x, beta_init, dir, &d.truth.beta, &d.truth.b, 1.0).unwrap();

    // Oracle: P^(j) from a full SVD of the centred X_{-j}, then plain dense algebra.
    let x = &f.data.x;
    let x_minus = x.clone().remove_column(j);
    let p = dense_trim_oracle(&x_minus, cfg.rho_j);
    let p2 = &p * &p;
    let p4 = &p2 * &p2;
    let z = x.column(j) - &x_minus * &dir.gamma_hat;
    let den = (z.transpose() * &p2 * x.column(j))[0];
    let scale = (z.transpose() * &p4 * &z)[0].sqrt();
    let gap = (&d.truth.beta - beta_init).remove_row(j);
    let want_beta = (z.transpose() * &p2 * (&x_minus * gap))[0] / scale * den.signum();
    let want_b = (z.transpose() * &p2 * (x * &d.truth.b))[0] / scale * den.signum();
    assert!((b_beta - want_beta).abs() < 1e-8 * want_beta.abs().max(1.0), "{b_beta} vs {want_beta}");
    assert!((b_b - want_b).abs() < 1e-8 * want_b.abs().max(1.0), "{b_b} vs {want_b}");

    let parts = error_decomposition(x, beta_init, dir, &d).unwrap();
    let r = &f.results[0];
    let resid = r.beta_hat - d.truth.beta[j] - parts.v_true.sqrt() * (parts.b_beta + parts.b_b) - parts.noise_term;
    assert!(resid.abs() < 1e-10);
}

#[test]
fn default_scenario_smoke() {
    let rec = run_replication(&Scenario::default(), Method::Ddl, &DdlConfig::default(), 5);
    assert!(!rec.failed, "{}", rec.flags);
    assert!(rec.variance.is_finite() && rec.variance > 0.0);
    assert_eq!(rec.covered, rec.ci_low <= 1.0 && 1.0 <= rec.ci_high);
}

proptest! {
    #[test]
    fn jaccard_is_a_bounded_symmetric_distance(
        a in prop::collection::vec(0.0f64..1.0, 1..30),
        seed in any::<u64>(),
        k in 1usize..30,
    ) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| (v + (seed.rotate_left(i as u32) % 97) as f64 / 97.0) % 1.0).collect();
        let k = k.min(a.len());
        let d = jaccard_topk(&a, &b, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, jaccard_topk(&b, &a, k).unwrap());
        prop_assert_eq!(jaccard_topk(&a, &a, k).unwrap(), 0.0);
    }
}

/// Long-running: standard debiased Lasso coverage without confounding.
/// Run with `cargo test --release -- --ignored`.
#[test]
#[ignore]
fn debiased_lasso_covers_nominally_without_confounding() {
    use ddl_core::bench::{run_grid, GridCell, GridSpec};
    use ddl_core::ddl::TransformChoice;
    let spec = GridSpec {
        axis: "none".into(),
        cells: vec![GridCell {
            axis_value: 0.0,
            scenario: Scenario { n: 200, p: 300, q: 0, ..Scenario::default() },
            config: DdlConfig::default().with_transforms(TransformChoice::Identity),
        }],
        methods: vec![Method::DebiasedLasso],
        reps: 500,
    };
    let report = run_grid(&spec, 0, std::thread::available_parallelism().map_or(1, |n| n.get())).unwrap();
    let s = report.summary(0, Method::DebiasedLasso).unwrap();
    let k = (s.replications - s.failures) as f64;
    let se = (0.95 * 0.05 / k).sqrt();
    assert!((s.coverage - 0.95).abs() <= 3.0 * se, "coverage {} over {k}", s.coverage);
}
