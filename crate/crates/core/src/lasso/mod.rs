//! Weighted Lasso on (spectrally transformed) data.
//!
//! Minimises `(1/2n)‖y - Xβ‖² + λ Σ_l w_l |β_l|` by coordinate descent, with a
//! proximal-gradient solver kept as an independent reference, a warm-started
//! path, K-fold cross-validation, and the variance-inflation rule used to pick
//! the penalty of the projection-direction regression.

mod cd;
mod cv;
mod reference;

use nalgebra::{DMatrix, DVector};

pub use cd::{lasso_path, solve, PathFit};
pub use cv::{
    cv_lambda, cv_lambda_with_folds, fold_assignment, inflate_lambda_for_variance, CvOutcome,
    VarianceInflation, CV_STOP_PATIENCE, CV_STOP_RATIO,
};
pub use reference::prox_grad_reference;

use crate::error::{DdlError, Result};
use crate::scalar::Real;

/// Number of grid points in the default penalty path.
pub const DEFAULT_GRID_LEN: usize = 100;
/// Ratio `λ_min / λ_max` of the default penalty path.
pub const DEFAULT_GRID_RATIO: f64 = 1e-3;
/// Columns at or above this count switch the solver to residual (naive) updates.
pub const COVARIANCE_UPDATE_LIMIT: usize = 5000;

/// A weighted Lasso instance. Columns with zero weight are excluded and their
/// coefficients pinned to zero.
#[derive(Clone, Copy, Debug)]
pub struct LassoProblem<'a, T: Real> {
    pub design: &'a DMatrix<T>,
    pub response: &'a DVector<T>,
    pub weights: &'a DVector<T>,
    pub lambda: T,
}

impl<'a, T: Real> LassoProblem<'a, T> {
    pub fn new(
        design: &'a DMatrix<T>,
        response: &'a DVector<T>,
        weights: &'a DVector<T>,
        lambda: T,
    ) -> Self {
        Self {
            design,
            response,
            weights,
            lambda,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let (n, d) = self.design.shape();
        if self.response.len() != n {
            return Err(DdlError::DimensionMismatch {
                expected: n,
                found: self.response.len(),
            });
        }
        if self.weights.len() != d {
            return Err(DdlError::DimensionMismatch {
                expected: d,
                found: self.weights.len(),
            });
        }
        if n == 0 {
            return Err(DdlError::invalid("empty design"));
        }
        if !(self.lambda >= T::zero()) || !self.lambda.is_finite() {
            return Err(DdlError::invalid("penalty must be finite and nonnegative"));
        }
        if self.weights.iter().any(|&w| !(w >= T::zero()) || !w.is_finite()) {
            return Err(DdlError::invalid("weights must be finite and nonnegative"));
        }
        crate::spectral::ensure_finite(self.design.iter().copied())?;
        crate::spectral::ensure_finite(self.response.iter().copied())?;
        Ok(())
    }

    pub fn objective(&self, coef: &DVector<T>) -> T {
        objective(self.design, self.response, self.weights, self.lambda, coef)
    }

    /// Largest KKT residual of `coef`.
    pub fn kkt_violation(&self, coef: &DVector<T>) -> T {
        let n = T::lit(self.design.nrows() as f64);
        let resid = self.response - self.design * coef;
        let grad = self.design.tr_mul(&resid) / n;
        kkt_from_gradient(&grad, coef, self.weights, self.lambda, |l| {
            self.weights[l] > T::zero() && self.design.column(l).norm_squared() > T::zero()
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions<T> {
    /// Tolerance on the largest KKT residual.
    pub tol: T,
    /// Maximum number of coordinate sweeps; `None` means `max(10·d, 1000)`.
    pub max_iter: Option<usize>,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::default_tolerance(),
            max_iter: None,
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self {
            tol,
            max_iter: None,
        }
    }

    pub(crate) fn sweep_limit(&self, d: usize) -> usize {
        self.max_iter.unwrap_or_else(|| (10 * d).max(1000))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit<T: Real> {
    pub coef: DVector<T>,
    pub objective: T,
    pub iterations: usize,
    pub kkt_violation: T,
    pub lambda_used: T,
    pub converged: bool,
}

impl<T: Real> LassoFit<T> {
    pub fn active_count(&self) -> usize {
        self.coef.iter().filter(|&&c| c != T::zero()).count()
    }
}

/// `w_l = ‖X_l‖₂ / √n`.
pub fn column_weights<T: Real>(design: &DMatrix<T>) -> DVector<T> {
    let sqrt_n = T::lit(design.nrows() as f64).sqrt();
    DVector::from_iterator(
        design.ncols(),
        design.column_iter().map(|c| c.norm() / sqrt_n),
    )
}

pub fn objective<T: Real>(
    design: &DMatrix<T>,
    response: &DVector<T>,
    weights: &DVector<T>,
    lambda: T,
    coef: &DVector<T>,
) -> T {
    let n = T::lit(design.nrows() as f64);
    let resid = response - design * coef;
    let penalty = weights
        .iter()
        .zip(coef.iter())
        .fold(T::zero(), |acc, (&w, &c)| acc + w * c.abs());
    resid.norm_squared() / (n + n) + lambda * penalty
}

pub(crate) fn kkt_from_gradient<T: Real>(
    grad: &DVector<T>,
    coef: &DVector<T>,
    weights: &DVector<T>,
    lambda: T,
    usable: impl Fn(usize) -> bool,
) -> T {
    let mut worst = T::zero();
    for l in 0..coef.len() {
        if !usable(l) {
            continue;
        }
        let bound = lambda * weights[l];
        let v = if coef[l] == T::zero() {
            (grad[l].abs() - bound).max(T::zero())
        } else {
            (grad[l] - bound * coef[l].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// `λ_max = max_l |X_l'y / n| / w_l`: the smallest penalty with an all-zero solution.
pub fn lambda_max<T: Real>(design: &DMatrix<T>, response: &DVector<T>, weights: &DVector<T>) -> T {
    let n = T::lit(design.nrows() as f64);
    let xty = design.tr_mul(response);
    (0..design.ncols())
        .filter(|&l| weights[l] > T::zero())
        .map(|l| (xty[l] / n).abs() / weights[l])
        .fold(T::zero(), T::max)
}

/// `len` log-spaced penalties from `lambda_max` down to `ratio · lambda_max`.
pub fn lambda_grid<T: Real>(lambda_max: T, len: usize, ratio: f64) -> Vec<T> {
    if len <= 1 || lambda_max <= T::zero() {
        return vec![lambda_max.max(T::zero()); len.max(1)];
    }
    let top = lambda_max.as_f64();
    let step = ratio.ln() / (len - 1) as f64;
    (0..len)
        .map(|i| T::lit(top * (step * i as f64).exp()))
        .collect()
}

pub(crate) fn soft_threshold<T: Real>(z: T, gamma: T) -> T {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        T::zero()
    }
}
