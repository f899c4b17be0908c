mod common;

use common::{gaussian_matrix, gaussian_vector};
use ddl_core::lasso::{column_weights, lambda_max, prox_grad_reference, solve, LassoProblem, SolverOptions};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[derive(Debug)]
struct Instance {
    x: DMatrix<f64>,
    y: DVector<f64>,
    w: DVector<f64>,
    lambda: f64,
}

fn instance() -> impl Strategy<Value = Instance> {
    (3usize..=50, 1usize..=20, any::<u64>(), 0.001f64..1.0, prop::collection::vec(0.0f64..2.0, 20)).prop_map(
        |(n, d, seed, frac, ws)| {
            let x = gaussian_matrix(n, d, seed);
            let beta = DVector::from_fn(d, |l, _| if l < 3 { 1.0 } else { 0.0 });
            let y = &x * beta + gaussian_vector(n, seed ^ 0xabc);
            let mut w = column_weights(&x);
            for l in 0..d {
                // Some columns unpenalised or excluded, the rest reweighted.
                w[l] *= if ws[l] < 0.15 { 0.0 } else { ws[l] };
            }
            let lambda = frac * lambda_max(&x, &y, &w).max(1e-3);
            Instance { x, y, w, lambda }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn converged_fits_satisfy_kkt(inst in instance()) {
        let prob = LassoProblem::new(&inst.x, &inst.y, &inst.w, inst.lambda);
        let fit = solve(&prob, &SolverOptions::with_tol(1e-9)).unwrap();
        if fit.converged {
            prop_assert!(fit.kkt_violation <= 1e-9);
            prop_assert!(prob.kkt_violation(&fit.coef) <= 1e-9 * 1.0001);
        }
        for l in 0..inst.w.len() {
            if inst.w[l] == 0.0 && inst.x.column(l).norm() == 0.0 {
                prop_assert_eq!(fit.coef[l], 0.0);
            }
        }
    }

    #[test]
    fn objective_never_increases_with_more_sweeps(inst in instance()) {
        let prob = LassoProblem::new(&inst.x, &inst.y, &inst.w, inst.lambda);
        let mut last = f64::INFINITY;
        for sweeps in 1..=12 {
            let opts = SolverOptions { tol: 1e-14, max_iter: Some(sweeps) };
            let obj = solve(&prob, &opts).unwrap().objective;
            prop_assert!(obj <= last * (1.0 + 1e-13) + 1e-15, "sweep {}: {} > {}", sweeps, obj, last);
            last = obj;
        }
    }

    #[test]
    fn agrees_with_proximal_gradient(inst in instance()) {
        let prob = LassoProblem::new(&inst.x, &inst.y, &inst.w, inst.lambda);
        let cd = solve(&prob, &SolverOptions::with_tol(1e-10)).unwrap();
        let pg = prox_grad_reference(&prob, 1e-10).unwrap();
        prop_assert!((cd.objective - pg.objective).abs() <= 1e-8);
    }

    #[test]
    fn objective_is_homogeneous(inst in instance(), c in 0.1f64..10.0) {
        let opts = SolverOptions::with_tol(1e-13);
        let base = solve(&LassoProblem::new(&inst.x, &inst.y, &inst.w, inst.lambda), &opts).unwrap();
        let (xc, yc) = (&inst.x * c, &inst.y * c);
        let scaled = solve(&LassoProblem::new(&xc, &yc, &inst.w, inst.lambda * c * c), &opts).unwrap();
        let scale = base.coef.amax().max(1.0);
        prop_assert!((&scaled.coef - &base.coef).amax() <= 1e-10 * scale,
            "{}", (&scaled.coef - &base.coef).amax());
    }

    #[test]
    fn zero_weight_norm_columns_stay_zero(inst in instance(), k in 0usize..20) {
        let mut x = inst.x.clone();
        let k = k % x.ncols();
        x.column_mut(k).fill(0.0);
        let prob = LassoProblem::new(&x, &inst.y, &inst.w, inst.lambda);
        prop_assert_eq!(solve(&prob, &SolverOptions::default()).unwrap().coef[k], 0.0);
    }
}
