//! Doubly debiased Lasso for a single coefficient under hidden confounding.
//!
//! The pipeline for a target column `j`:
//!
//! 1. `Q`: trim transform of `X`; `β̂init` is the weighted Lasso on `(QX, QY)`.
//! 2. `P`: trim transform of `X_{-j}`; `γ̂` is the weighted Lasso of `PX_j` on
//!    `PX_{-j}` and `Z_j = X_j - X_{-j}γ̂`.
//! 3. `β̂_j = Z_jᵀP²(Y - X_{-j}β̂init_{-j}) / Z_jᵀP²X_j`,
//!    `V̂ = σ̂_e² Z_jᵀP⁴Z_j / (Z_jᵀP²X_j)²` with `σ̂_e² = ‖Q(Y - Xβ̂init)‖² / Tr(Q²)`.
//!
//! Setting both transforms to the identity gives the standard debiased Lasso.

mod normal;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use normal::{normal_cdf, normal_quantile, two_sided_p_value};

use crate::error::{DdlError, Result};
use crate::lasso::{
    column_weights, cv_lambda, inflate_lambda_for_variance, lambda_grid, lambda_max, solve,
    CvOutcome, LassoFit, LassoProblem, SolverOptions, DEFAULT_GRID_LEN, DEFAULT_GRID_RATIO,
};
use crate::scalar::Real;
use crate::seeding::derive_seed;
use crate::spectral::{ensure_finite, trim_count, SpectralTransform};

/// Relative size below which `Z_jᵀP²X_j` counts as zero.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// How the two penalties are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum Tuning<T> {
    /// 10-fold CV for both; `λ_j` then lowered until the variance grows by `variance_inflation`.
    CrossValidation,
    /// `λ = A σ_e √(log p / n)` and `λ_j = A σ_j √(log p / n)`.
    Theoretical { a: T, sigma_e: T, sigma_j: T },
    /// Both penalties given directly.
    Fixed { lambda: T, lambda_j: T },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformChoice {
    Trim,
    PcaAdjust(usize),
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    deny_unknown_fields,
    bound(serialize = "T: Serialize", deserialize = "T: Real + Deserialize<'de>")
)]
pub struct DdlConfig<T: Real> {
    /// Trim level of `Q`.
    pub rho: T,
    /// Trim level of every `P^(j)`.
    pub rho_j: T,
    pub alpha: T,
    pub tuning: Tuning<T>,
    pub init_transform: TransformChoice,
    pub nuisance_transform: TransformChoice,
    /// Subtract column means (and the mean of `Y`) before fitting.
    pub center: bool,
    pub folds: usize,
    pub grid_len: usize,
    pub grid_ratio: f64,
    /// Required ratio `v(λ_j) / v(λ_cv)` of the variance functional.
    pub variance_inflation: T,
    pub seed: u64,
    /// KKT tolerance, relative to the root-mean-square of the Lasso response.
    pub tol: T,
    pub max_iter: Option<usize>,
    /// Believed number of confounders; only used to warn about too little trimming.
    pub confounder_hint: Option<usize>,
}

impl<T: Real> Default for DdlConfig<T> {
    fn default() -> Self {
        Self {
            rho: T::lit(0.5),
            rho_j: T::lit(0.5),
            alpha: T::lit(0.05),
            tuning: Tuning::CrossValidation,
            init_transform: TransformChoice::Trim,
            nuisance_transform: TransformChoice::Trim,
            center: true,
            folds: 10,
            grid_len: DEFAULT_GRID_LEN,
            grid_ratio: DEFAULT_GRID_RATIO,
            variance_inflation: T::lit(1.25),
            seed: 0,
            tol: T::default_tolerance(),
            max_iter: None,
            confounder_hint: None,
        }
    }
}

impl<T: Real> DdlConfig<T> {
    /// Same settings with both transforms replaced by `choice`.
    pub fn with_transforms(&self, choice: TransformChoice) -> Self {
        Self {
            init_transform: choice,
            nuisance_transform: choice,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if !unit(self.rho) || !unit(self.rho_j) {
            return Err(DdlError::invalid("trim levels must lie in [0, 1]"));
        }
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(DdlError::invalid("alpha must lie in (0, 1)"));
        }
        if !(self.variance_inflation > T::zero()) || !self.variance_inflation.is_finite() {
            return Err(DdlError::invalid("variance inflation must be positive"));
        }
        if !(self.tol > T::zero()) {
            return Err(DdlError::invalid("tolerance must be positive"));
        }
        if self.grid_len == 0 || !(self.grid_ratio > 0.0 && self.grid_ratio <= 1.0) {
            return Err(DdlError::invalid("penalty grid needs len >= 1 and ratio in (0, 1]"));
        }
        match self.tuning {
            Tuning::CrossValidation if self.folds < 2 => {
                Err(DdlError::invalid("cross-validation needs at least two folds"))
            }
            Tuning::Theoretical { a, sigma_e, sigma_j }
                if !(a > T::zero() && sigma_e >= T::zero() && sigma_j >= T::zero()) =>
            {
                Err(DdlError::invalid("theoretical tuning needs A > 0 and nonnegative scales"))
            }
            Tuning::Fixed { lambda, lambda_j }
                if !(lambda >= T::zero() && lambda_j >= T::zero()) =>
            {
                Err(DdlError::invalid("fixed penalties must be nonnegative"))
            }
            _ => Ok(()),
        }
    }

    fn solver_for(&self, response: &DVector<T>) -> SolverOptions<T> {
        let rms = (response.norm_squared() / T::lit(response.len().max(1) as f64)).sqrt();
        let scale = if rms > T::zero() && rms.is_finite() { rms } else { T::one() };
        SolverOptions {
            tol: self.tol * scale,
            max_iter: self.max_iter,
        }
    }

    fn theory_rate(&self, n: usize, p: usize) -> T {
        T::lit(((p as f64).ln() / n as f64).sqrt())
    }
}

/// Column-centred copy of the data together with the removed means.
#[derive(Clone, Debug)]
pub struct CenteredData<T: Real> {
    pub x: DMatrix<T>,
    pub y: DVector<T>,
    pub x_means: DVector<T>,
    pub y_mean: T,
}

impl<T: Real> CenteredData<T> {
    pub fn new(x: &DMatrix<T>, y: &DVector<T>) -> Result<Self> {
        check_inputs(x, y)?;
        let n_t = T::lit(x.nrows() as f64);
        let x_means = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n_t));
        let y_mean = y.sum() / n_t;
        let mut xc = x.clone();
        for (mut col, &m) in xc.column_iter_mut().zip(x_means.iter()) {
            col.add_scalar_mut(-m);
        }
        Ok(Self {
            x: xc,
            y: y.add_scalar(-y_mean),
            x_means,
            y_mean,
        })
    }

    /// Wraps data that is used as given.
    pub fn uncentered(x: &DMatrix<T>, y: &DVector<T>) -> Result<Self> {
        check_inputs(x, y)?;
        Ok(Self {
            x: x.clone(),
            y: y.clone(),
            x_means: DVector::zeros(x.ncols()),
            y_mean: T::zero(),
        })
    }

    pub fn prepare(x: &DMatrix<T>, y: &DVector<T>, config: &DdlConfig<T>) -> Result<Self> {
        if config.center {
            Self::new(x, y)
        } else {
            Self::uncentered(x, y)
        }
    }
}

fn check_inputs<T: Real>(x: &DMatrix<T>, y: &DVector<T>) -> Result<()> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(DdlError::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if n < 5 || p < 2 {
        return Err(DdlError::invalid(format!("need n >= 5 and p >= 2, got n = {n}, p = {p}")));
    }
    ensure_finite(x.iter().copied())?;
    ensure_finite(y.iter().copied())
}

fn build_transform<T: Real>(
    x: &DMatrix<T>,
    choice: TransformChoice,
    rho: T,
) -> Result<SpectralTransform<T>> {
    match choice {
        TransformChoice::Trim => SpectralTransform::trim_of(x, rho),
        TransformChoice::PcaAdjust(q) => SpectralTransform::pca_of(x, q),
        TransformChoice::Identity => Ok(SpectralTransform::identity(x.nrows())),
    }
}

/// `target - design · coef`, touching only the nonzero coefficients.
fn sparse_residual<T: Real>(target: &DVector<T>, design: &DMatrix<T>, coef: &DVector<T>) -> DVector<T> {
    let mut out = target.clone();
    for (l, &c) in coef.iter().enumerate() {
        if c != T::zero() {
            out.axpy(-c, &design.column(l), T::one());
        }
    }
    out
}

/// Cross-validated penalty, or zero when the response is orthogonal to every column.
fn cv_select<T: Real>(
    design: &DMatrix<T>,
    response: &DVector<T>,
    weights: &DVector<T>,
    config: &DdlConfig<T>,
    seed: u64,
    opts: &SolverOptions<T>,
) -> Result<Option<CvOutcome<T>>> {
    let top = lambda_max(design, response, weights);
    if !(top > T::zero()) {
        return Ok(None);
    }
    let grid = lambda_grid(top, config.grid_len, config.grid_ratio);
    cv_lambda(design, response, weights, config.folds, &grid, seed, opts).map(Some)
}

#[derive(Clone, Debug)]
pub struct InitialEstimate<T: Real> {
    pub fit: LassoFit<T>,
    pub transform: SpectralTransform<T>,
    pub lambda: T,
    pub cv: Option<CvOutcome<T>>,
    pub sigma_e2_hat: T,
}

impl<T: Real> InitialEstimate<T> {
    pub fn coef(&self) -> &DVector<T> {
        &self.fit.coef
    }
}

/// Spectral deconfounding estimator: the weighted Lasso on `(QX, QY)`.
pub fn initial_estimator<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    config: &DdlConfig<T>,
) -> Result<InitialEstimate<T>> {
    config.validate()?;
    check_inputs(x, y)?;
    let (n, p) = x.shape();
    let q = build_transform(x, config.init_transform, config.rho)?;
    let qx = q.apply(x, 1)?;
    let qy = q.apply_vec(y, 1)?;
    let weights = column_weights(&qx);
    let opts = config.solver_for(&qy);

    let (lambda, cv) = match config.tuning {
        Tuning::CrossValidation => {
            let cv = cv_select(&qx, &qy, &weights, config, derive_seed(config.seed, &[0]), &opts)?;
            (cv.as_ref().map_or(T::zero(), |c| c.lambda), cv)
        }
        Tuning::Theoretical { a, sigma_e, .. } => (a * sigma_e * config.theory_rate(n, p), None),
        Tuning::Fixed { lambda, .. } => (lambda, None),
    };
    let fit = solve(&LassoProblem::new(&qx, &qy, &weights, lambda), &opts)?;
    if !fit.converged {
        warn!("initial Lasso stopped before reaching tolerance");
    }
    let sigma_e2_hat = noise_level(x, y, &fit.coef, &q)?;
    Ok(InitialEstimate {
        fit,
        transform: q,
        lambda,
        cv,
        sigma_e2_hat,
    })
}

/// `σ̂_e² = ‖Q(Y - Xβ̂init)‖² / Tr(Q²)`.
pub fn noise_level<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    beta_init: &DVector<T>,
    q: &SpectralTransform<T>,
) -> Result<T> {
    if beta_init.len() != x.ncols() {
        return Err(DdlError::DimensionMismatch {
            expected: x.ncols(),
            found: beta_init.len(),
        });
    }
    let trace = q.trace_power(2);
    if !(trace > T::zero()) {
        return Err(DdlError::invalid("Tr(Q^2) must be positive"));
    }
    let resid = sparse_residual(y, x, beta_init);
    Ok(q.apply_vec(&resid, 1)?.norm_squared() / trace)
}

/// Everything about the regression of `X_j` on `X_{-j}` needed downstream.
#[derive(Clone, Debug)]
pub struct ProjectionDirection<T: Real> {
    pub j: usize,
    pub gamma_hat: DVector<T>,
    /// `Z_j = X_j - X_{-j}γ̂`.
    pub z: DVector<T>,
    pub pz: DVector<T>,
    pub p2z: DVector<T>,
    /// `Z_jᵀP²X_j`.
    pub denominator: T,
    /// `Z_jᵀP⁴Z_j`.
    pub p4_quadratic: T,
    pub lambda_j: T,
    /// Cross-validated penalty before variance inflation.
    pub lambda_cv: Option<T>,
    /// `v(λ_j) / v(λ_cv)` and whether the requested inflation was reached.
    pub inflation: Option<(T, bool)>,
    pub converged: bool,
    pub transform: SpectralTransform<T>,
}

impl<T: Real> ProjectionDirection<T> {
    /// Variance functional `Z_jᵀP⁴Z_j / (Z_jᵀP²X_j)²`, i.e. `V̂ / σ̂_e²`.
    pub fn variance_factor(&self) -> T {
        self.p4_quadratic / (self.denominator * self.denominator)
    }
}

struct DirectionParts<T: Real> {
    z: DVector<T>,
    pz: DVector<T>,
    p2z: DVector<T>,
    denominator: T,
    p4_quadratic: T,
}

/// The spectral pieces of `Z_j` for a given `γ̂`, or `DegenerateDenominator`.
fn direction_parts<T: Real>(
    x_minus: &DMatrix<T>,
    xj: &DVector<T>,
    px_minus: &DMatrix<T>,
    pxj: &DVector<T>,
    transform: &SpectralTransform<T>,
    gamma: &DVector<T>,
) -> Result<DirectionParts<T>> {
    let z = sparse_residual(xj, x_minus, gamma);
    let pz = sparse_residual(pxj, px_minus, gamma);
    let p2z = transform.apply_vec(&pz, 1)?;
    let denominator = p2z.dot(xj);
    let scale = z.norm() * xj.norm();
    if !(denominator.abs() >= T::lit(DEGENERACY_THRESHOLD) * scale) || scale == T::zero() {
        return Err(DdlError::DegenerateDenominator {
            value: denominator.as_f64(),
        });
    }
    let p4_quadratic = p2z.norm_squared();
    Ok(DirectionParts {
        z,
        pz,
        p2z,
        denominator,
        p4_quadratic,
    })
}

/// Builds `P^(j)` from `X_{-j}` and regresses `PX_j` on `PX_{-j}`.
///
/// `j` is zero-based.
pub fn projection_direction<T: Real>(
    x: &DMatrix<T>,
    j: usize,
    config: &DdlConfig<T>,
) -> Result<ProjectionDirection<T>> {
    config.validate()?;
    let (n, p) = x.shape();
    if j >= p {
        return Err(DdlError::IndexOutOfRange { index: j, limit: p });
    }
    if p < 2 {
        return Err(DdlError::invalid("need at least two columns"));
    }
    let xj = x.column(j).into_owned();
    let x_minus = x.clone().remove_column(j);
    let transform = build_transform(&x_minus, config.nuisance_transform, config.rho_j)?;
    let px_minus = transform.apply(&x_minus, 1)?;
    let pxj = transform.apply_vec(&xj, 1)?;
    let weights = column_weights(&px_minus);
    let opts = config.solver_for(&pxj);

    let (fit, lambda_cv, inflation) = match config.tuning {
        Tuning::CrossValidation => {
            let seed = derive_seed(config.seed, &[1, j as u64]);
            match cv_select(&px_minus, &pxj, &weights, config, seed, &opts)? {
                None => {
                    let fit = solve(&LassoProblem::new(&px_minus, &pxj, &weights, T::zero()), &opts)?;
                    (fit, None, None)
                }
                Some(cv) => {
                    let variance = |gamma: &DVector<T>| {
                        direction_parts(&x_minus, &xj, &px_minus, &pxj, &transform, gamma).map(|d| {
                            d.p4_quadratic / (d.denominator * d.denominator)
                        })
                    };
                    let inflated = inflate_lambda_for_variance(
                        &px_minus,
                        &pxj,
                        &weights,
                        &cv.grid,
                        cv.index,
                        config.variance_inflation,
                        variance,
                        &opts,
                    )?;
                    (inflated.fit, Some(cv.lambda), Some((inflated.ratio, inflated.reached)))
                }
            }
        }
        Tuning::Theoretical { a, sigma_j, .. } => {
            let lambda = a * sigma_j * config.theory_rate(n, p);
            (solve(&LassoProblem::new(&px_minus, &pxj, &weights, lambda), &opts)?, None, None)
        }
        Tuning::Fixed { lambda_j, .. } => (
            solve(&LassoProblem::new(&px_minus, &pxj, &weights, lambda_j), &opts)?,
            None,
            None,
        ),
    };

    let parts = direction_parts(&x_minus, &xj, &px_minus, &pxj, &transform, &fit.coef)?;
    Ok(ProjectionDirection {
        j,
        lambda_j: fit.lambda_used,
        converged: fit.converged,
        gamma_hat: fit.coef,
        z: parts.z,
        pz: parts.pz,
        p2z: parts.p2z,
        denominator: parts.denominator,
        p4_quadratic: parts.p4_quadratic,
        lambda_cv,
        inflation,
        transform,
    })
}

/// `β̂_j = Z_jᵀP²(Y - X_{-j}β̂init_{-j}) / Z_jᵀP²X_j`.
pub fn point_estimate<T: Real>(
    y: &DVector<T>,
    x: &DMatrix<T>,
    j: usize,
    beta_init: &DVector<T>,
    proj: &ProjectionDirection<T>,
) -> Result<T> {
    if beta_init.len() != x.ncols() {
        return Err(DdlError::DimensionMismatch {
            expected: x.ncols(),
            found: beta_init.len(),
        });
    }
    if j >= x.ncols() {
        return Err(DdlError::IndexOutOfRange {
            index: j,
            limit: x.ncols(),
        });
    }
    if proj.denominator == T::zero() || !proj.denominator.is_finite() {
        return Err(DdlError::DegenerateDenominator {
            value: proj.denominator.as_f64(),
        });
    }
    let mut resid = sparse_residual(y, x, beta_init);
    resid.axpy(beta_init[j], &x.column(j), T::one());
    Ok(proj.p2z.dot(&resid) / proj.denominator)
}

/// `V̂ = σ̂_e² Z_jᵀP⁴Z_j / (Z_jᵀP²X_j)²`.
pub fn variance_estimate<T: Real>(proj: &ProjectionDirection<T>, sigma_e2_hat: T) -> Result<T> {
    if proj.denominator == T::zero() || !proj.denominator.is_finite() {
        return Err(DdlError::DegenerateDenominator {
            value: proj.denominator.as_f64(),
        });
    }
    Ok(sigma_e2_hat * proj.variance_factor())
}

/// `β̂ ∓ z_{1-α/2} √V̂`.
pub fn confidence_interval<T: Real>(beta_hat: T, variance: T, alpha: T) -> Result<(T, T)> {
    if !(variance >= T::zero()) {
        return Err(DdlError::invalid("variance must be nonnegative"));
    }
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(DdlError::invalid("alpha must lie in (0, 1)"));
    }
    let z = T::lit(normal_quantile(1.0 - alpha.as_f64() / 2.0)?);
    let half = z * variance.sqrt();
    Ok((beta_hat - half, beta_hat + half))
}

/// Asymptotic relative efficiency bounds `[1/min(c*,1), 1/((1-ρ*) min(c*,1))]`.
///
/// `c_star` may be `f64::INFINITY`.
pub fn are(c_star: f64, rho_star: f64) -> Result<(f64, f64)> {
    if !(c_star > 0.0) {
        return Err(DdlError::invalid("c* must be positive"));
    }
    if !(0.0..1.0).contains(&rho_star) {
        return Err(DdlError::invalid("rho* must lie in [0, 1)"));
    }
    let c = c_star.min(1.0);
    Ok((1.0 / c, 1.0 / ((1.0 - rho_star) * c)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DdlResult<T: Real> {
    /// Zero-based target column.
    pub j: usize,
    pub beta_hat: T,
    pub variance: T,
    pub std_err: T,
    pub ci_low: T,
    pub ci_high: T,
    pub sigma_e2_hat: T,
    pub p_value: T,
    pub denominator: T,
    pub lambda: T,
    pub lambda_j: T,
    pub flags: Vec<String>,
    /// Set when this target could not be estimated; numeric fields are then NaN.
    pub error: Option<DdlError>,
}

impl<T: Real> DdlResult<T> {
    fn failed(j: usize, lambda: T, sigma_e2_hat: T, error: DdlError) -> Self {
        let nan = T::lit(f64::NAN);
        let flag = match error {
            DdlError::DegenerateDenominator { .. } => "degenerate_denominator".to_string(),
            ref e => format!("error: {e}"),
        };
        Self {
            j,
            beta_hat: nan,
            variance: nan,
            std_err: nan,
            ci_low: nan,
            ci_high: nan,
            sigma_e2_hat,
            p_value: nan,
            denominator: nan,
            lambda,
            lambda_j: nan,
            flags: vec![flag],
            error: Some(error),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Combines an initial estimate and a projection direction into the final inference.
pub fn estimate_target<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    init: &InitialEstimate<T>,
    proj: &ProjectionDirection<T>,
    alpha: T,
) -> Result<DdlResult<T>> {
    let j = proj.j;
    let beta_hat = point_estimate(y, x, j, &init.fit.coef, proj)?;
    let variance = variance_estimate(proj, init.sigma_e2_hat)?;
    let (ci_low, ci_high) = confidence_interval(beta_hat, variance, alpha)?;
    let std_err = variance.sqrt();
    let p_value = if std_err > T::zero() {
        T::lit(two_sided_p_value((beta_hat / std_err).as_f64()))
    } else if beta_hat == T::zero() {
        T::one()
    } else {
        T::zero()
    };

    let mut flags = Vec::new();
    if !init.fit.converged {
        flags.push("init_not_converged".to_string());
    }
    if !proj.converged {
        flags.push("projection_not_converged".to_string());
    }
    if let Some((_, false)) = proj.inflation {
        flags.push("inflation_not_reached".to_string());
    }
    Ok(DdlResult {
        j,
        beta_hat,
        variance,
        std_err,
        ci_low,
        ci_high,
        sigma_e2_hat: init.sigma_e2_hat,
        p_value,
        denominator: proj.denominator,
        lambda: init.lambda,
        lambda_j: proj.lambda_j,
        flags,
        error: None,
    })
}

/// Full output of [`fit_detailed`], keeping the internals for diagnostics.
#[derive(Clone, Debug)]
pub struct DdlFit<T: Real> {
    pub data: CenteredData<T>,
    pub init: InitialEstimate<T>,
    /// Intercept on the original scale, `ȳ - x̄ᵀβ̂init`.
    pub intercept: T,
    pub results: Vec<DdlResult<T>>,
    pub directions: Vec<Option<ProjectionDirection<T>>>,
}

/// Runs the estimator for every (zero-based) index in `targets`.
pub fn fit<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    targets: &[usize],
    config: &DdlConfig<T>,
) -> Result<Vec<DdlResult<T>>> {
    fit_detailed(x, y, targets, config).map(|f| f.results)
}

/// Like [`fit`], but returns the shared initial estimate and every projection direction.
///
/// `β̂init` is computed once; targets run in parallel and independently. A failing
/// target yields a result with `error` set instead of aborting the others.
pub fn fit_detailed<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    targets: &[usize],
    config: &DdlConfig<T>,
) -> Result<DdlFit<T>> {
    config.validate()?;
    let p = x.ncols();
    if let Some(&bad) = targets.iter().find(|&&j| j >= p) {
        return Err(DdlError::IndexOutOfRange { index: bad, limit: p });
    }
    let data = CenteredData::prepare(x, y, config)?;
    let init = initial_estimator(&data.x, &data.y, config)?;
    let intercept = data.y_mean - data.x_means.dot(&init.fit.coef);

    let mut trim_warning = None;
    if let (Some(q), TransformChoice::Trim) = (config.confounder_hint, config.nuisance_transform) {
        let m = data.x.nrows().min(p - 1);
        let t = trim_count(config.rho_j.as_f64(), m);
        if t < q + 1 {
            warn!("rho_j trims {t} singular values, fewer than the hinted {q} confounders + 1");
            trim_warning = Some(format!("trim_count_{t}_below_hint"));
        }
    }

    let outcomes: Vec<(DdlResult<T>, Option<ProjectionDirection<T>>)> = targets
        .par_iter()
        .map(|&j| {
            let attempt = projection_direction(&data.x, j, config).and_then(|proj| {
                estimate_target(&data.x, &data.y, &init, &proj, config.alpha).map(|r| (r, proj))
            });
            match attempt {
                Ok((mut result, proj)) => {
                    result.flags.extend(trim_warning.iter().cloned());
                    (result, Some(proj))
                }
                Err(e) => {
                    warn!("target {j}: {e}");
                    (DdlResult::failed(j, init.lambda, init.sigma_e2_hat, e), None)
                }
            }
        })
        .collect();
    let (results, directions) = outcomes.into_iter().unzip();
    Ok(DdlFit {
        data,
        init,
        intercept,
        results,
        directions,
    })
}

/// The standard debiased Lasso: both transforms replaced by the identity.
pub fn debiased_lasso_baseline<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    j: usize,
    config: &DdlConfig<T>,
) -> Result<DdlResult<T>> {
    let plain = config.with_transforms(TransformChoice::Identity);
    let mut results = fit(x, y, &[j], &plain)?;
    let result = results.pop().expect("one target requested");
    match result.error {
        Some(e) => Err(e),
        None => Ok(result),
    }
}
