mod common;

use common::{dense_p, dense_trim_oracle, gaussian_matrix, gaussian_vector, sorted_singular_values};
use ddl_core::spectral::{check_p1, trim_count, P1Limits, SpectralTransform};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn shape() -> impl Strategy<Value = (usize, usize, u64)> {
    (2usize..40, 2usize..40, any::<u64>())
}

/// A design with a few spiked directions, like a confounded one.
fn spiked(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let k = 2.min(n.min(d));
    let h = gaussian_matrix(n, k, seed ^ 1);
    let w = gaussian_matrix(k, d, seed ^ 2) * 3.0;
    gaussian_matrix(n, d, seed) + h * w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transforms_are_contractions((n, d, seed) in shape(), rho in 0.0f64..=1.0, q in 0usize..4) {
        let x = spiked(n, d, seed);
        let v = gaussian_vector(n, seed.wrapping_add(7));
        let q = q.min(n.min(d));
        for t in [
            SpectralTransform::trim_of(&x, rho).unwrap(),
            SpectralTransform::pca_of(&x, q).unwrap(),
            SpectralTransform::identity(n),
        ] {
            let pv = t.apply_vec(&v, 1).unwrap();
            prop_assert!(pv.norm() <= v.norm() * (1.0 + 1e-12));
            let eig = dense_p(&t).symmetric_eigen().eigenvalues;
            prop_assert!(eig.iter().all(|&e| (-1e-12..=1.0 + 1e-12).contains(&e)));
        }
    }

    #[test]
    fn powers_compose((n, d, seed) in shape(), rho in 0.0f64..=1.0) {
        let x = spiked(n, d, seed);
        let t = SpectralTransform::trim_of(&x, rho).unwrap();
        let m = gaussian_matrix(n, 3, seed ^ 9);
        let twice = t.apply(&t.apply(&m, 1).unwrap(), 1).unwrap();
        let squared = t.apply(&m, 2).unwrap();
        prop_assert!((&twice - &squared).norm() <= 1e-10 * squared.norm().max(1.0));
    }

    #[test]
    fn trim_matches_full_svd_oracle((n, d, seed) in shape(), rho in 0.0f64..=1.0) {
        let x = spiked(n, d, seed);
        let t = SpectralTransform::trim_of(&x, rho).unwrap();
        let diff = (dense_p(&t) - dense_trim_oracle(&x, rho)).amax();
        prop_assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn trim_caps_singular_values((n, d, seed) in shape(), rho in 0.0f64..=1.0) {
        let x = spiked(n, d, seed);
        let t = SpectralTransform::trim_of(&x, rho).unwrap();
        let before = sorted_singular_values(&x);
        let after = sorted_singular_values(&t.apply(&x, 1).unwrap());
        let k = trim_count(rho, before.len());
        let tau = if k == 0 { f64::INFINITY } else { before[k - 1] };
        for (a, b) in after.iter().zip(&before) {
            prop_assert!((a - b.min(tau)).abs() <= 1e-8 * before[0].max(1.0));
        }
    }

    #[test]
    fn traces_match_dense_powers((n, d, seed) in shape(), rho in 0.0f64..=1.0, k in 1u32..5) {
        let x = spiked(n, d, seed);
        let t = SpectralTransform::trim_of(&x, rho).unwrap();
        let p = dense_p(&t);
        let mut pk = DMatrix::identity(n, n);
        for _ in 0..k {
            pk = &pk * &p;
        }
        prop_assert!((t.trace_power(k) - pk.trace()).abs() < 1e-8);
    }

    #[test]
    fn trace4_ratio_respects_trim_floor((n, d, seed) in shape(), rho in 0.0f64..=1.0) {
        let x = spiked(n, d, seed);
        let t = SpectralTransform::trim_of(&x, rho).unwrap();
        let diag = check_p1(&t, &x, &P1Limits { max_op_norm_ratio: f64::INFINITY, min_trace4_ratio: 1.0 - rho }).unwrap();
        prop_assert!(diag.trace4_ratio >= 1.0 - rho - 1e-12);
        prop_assert!(!diag.violated);
    }

    #[test]
    fn trimming_one_value_leaves_design_unchanged((n, d, seed) in shape()) {
        // ⌊ρm⌋ = 1 caps at Λ₁ itself.
        let x = spiked(n, d, seed);
        let m = n.min(d);
        let rho = 1.5 / m as f64;
        prop_assume!(trim_count(rho, m) <= 1);
        let t = SpectralTransform::trim_of(&x, rho).unwrap();
        prop_assert!((t.apply(&x, 1).unwrap() - &x).amax() <= 1e-10 * x.amax());
    }
}

#[test]
fn p1_examples() {
    let x = gaussian_matrix(200, 200, 5);
    let id = SpectralTransform::identity(200);
    let diag = check_p1(&id, &x, &P1Limits::default()).unwrap();
    assert_eq!(diag.trace4_ratio, 1.0);

    let x = gaussian_matrix(200, 400, 6);
    let t = SpectralTransform::trim_of(&x, 0.5).unwrap();
    let diag = check_p1(&t, &x, &P1Limits::default()).unwrap();
    assert!(diag.trace4_ratio >= 0.5);
    assert!(!diag.violated);
}
