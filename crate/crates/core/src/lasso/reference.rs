use nalgebra::DVector;

use super::{kkt_from_gradient, soft_threshold, LassoFit, LassoProblem};
use crate::error::{DdlError, Result};
use crate::scalar::Real;

const MAX_STEPS: usize = 2_000_000;

/// Slow proximal-gradient solver for the same objective as [`super::solve`].
///
/// Backtracking step size with Nesterov momentum and gradient-based restarts;
/// exists as an independent oracle for the coordinate-descent solver.
pub fn prox_grad_reference<T: Real>(problem: &LassoProblem<'_, T>, tol: T) -> Result<LassoFit<T>> {
    problem.validate()?;
    let x = problem.design;
    let y = problem.response;
    let (n, d) = x.shape();
    let n_t = T::lit(n as f64);
    let lambda = problem.lambda;
    let usable: Vec<bool> = (0..d)
        .map(|l| problem.weights[l] > T::zero() && x.column(l).norm_squared() > T::zero())
        .collect();
    let thresholds = DVector::from_fn(d, |l, _| {
        if usable[l] {
            lambda * problem.weights[l]
        } else {
            T::zero()
        }
    });

    let smooth = |b: &DVector<T>| (y - x * b).norm_squared() / (n_t + n_t);
    let gradient = |b: &DVector<T>| -(x.tr_mul(&(y - x * b))) / n_t;
    let prox = |v: &DVector<T>, step: T| {
        DVector::from_fn(d, |l, _| {
            if usable[l] {
                soft_threshold(v[l], step * thresholds[l])
            } else {
                T::zero()
            }
        })
    };

    let mut beta = DVector::zeros(d);
    let mut momentum_point = beta.clone();
    let mut t_k = T::one();
    let mut step = T::one();
    let half = T::lit(0.5);

    for iter in 1..=MAX_STEPS {
        let f_z = smooth(&momentum_point);
        let g_z = gradient(&momentum_point);
        let candidate = loop {
            let cand = prox(&(&momentum_point - &g_z * step), step);
            let diff = &cand - &momentum_point;
            let bound = f_z + g_z.dot(&diff) + diff.norm_squared() / (step + step);
            if smooth(&cand) <= bound + T::default_epsilon() * (T::one() + f_z.abs()) {
                break cand;
            }
            step *= half;
        };

        // Restart momentum when it points uphill.
        let uphill = (&momentum_point - &candidate).dot(&(&candidate - &beta)) > T::zero();
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t_k * t_k).sqrt()) * half;
        if uphill {
            momentum_point = candidate.clone();
            t_k = T::one();
        } else {
            momentum_point = &candidate + (&candidate - &beta) * ((t_k - T::one()) / t_next);
            t_k = t_next;
        }
        beta = candidate;
        // Let the step grow back slowly after backtracking.
        step *= T::lit(1.1);

        let grad = -gradient(&beta);
        let kkt = kkt_from_gradient(&grad, &beta, problem.weights, lambda, |l| usable[l]);
        if kkt <= tol {
            return Ok(LassoFit {
                objective: problem.objective(&beta),
                coef: beta,
                iterations: iter,
                kkt_violation: kkt,
                lambda_used: lambda,
                converged: true,
            });
        }
    }
    Err(DdlError::MaxIterExceeded {
        iterations: MAX_STEPS,
    })
}
