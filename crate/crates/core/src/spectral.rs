//! Thin SVD and spectral shrinkage transforms.
//!
//! A transform is the symmetric operator `P = I - U diag(1 - S) U'` where the
//! columns of `U` are left singular vectors of a design matrix and `S` holds
//! shrinkage factors in `[0, 1]`. `P` acts as the identity on the orthogonal
//! complement of `col(U)`. Transforms are kept in factored form; applying one
//! costs `O(n k d)` where `k` is the number of shrunk directions.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{DdlError, Result};
use crate::scalar::Real;

/// Thin singular value decomposition `X = U diag(Λ) V'`.
#[derive(Clone, Debug)]
pub struct SvdFactors<T: Real> {
    /// `n × m` matrix with orthonormal columns.
    pub u: DMatrix<T>,
    /// Nonincreasing, nonnegative singular values (length `m = min(n, d)`).
    pub singular_values: DVector<T>,
    /// `d × m` right singular vectors; absent when only the left factor was requested.
    pub v: Option<DMatrix<T>>,
    pub ncols: usize,
}

impl<T: Real> SvdFactors<T> {
    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    /// `m = min(n, d)`.
    pub fn rank_dim(&self) -> usize {
        self.singular_values.len()
    }
}

pub(crate) fn ensure_finite<T: Real>(values: impl IntoIterator<Item = T>) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DdlError::NonFinite)
    }
}

/// Full thin SVD with both singular-vector factors.
pub fn svd_thin<T: Real>(x: &DMatrix<T>) -> Result<SvdFactors<T>> {
    decompose(x, true)
}

/// Thin SVD computing only `U` and `Λ`, which is all a transform needs.
pub fn svd_left<T: Real>(x: &DMatrix<T>) -> Result<SvdFactors<T>> {
    decompose(x, false)
}

fn decompose<T: Real>(x: &DMatrix<T>, want_v: bool) -> Result<SvdFactors<T>> {
    let (n, d) = x.shape();
    if n == 0 || d == 0 {
        return Err(DdlError::invalid("SVD of an empty matrix"));
    }
    ensure_finite(x.iter().copied())?;
    let svd = SVD::try_new(x.clone(), true, want_v, T::default_epsilon(), 0)
        .ok_or(DdlError::ConvergenceFailure)?;
    let u = svd.u.ok_or(DdlError::ConvergenceFailure)?;
    let v_t = svd.v_t;

    // Reorder so the singular values are nonincreasing regardless of backend conventions.
    let m = svd.singular_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let singular_values =
        DVector::from_iterator(m, order.iter().map(|&i| svd.singular_values[i].max(T::zero())));
    let u = DMatrix::from_fn(n, m, |r, c| u[(r, order[c])]);
    let v = v_t.map(|vt| DMatrix::from_fn(d, m, |r, c| vt[(order[c], r)]));
    Ok(SvdFactors {
        u,
        singular_values,
        v,
        ncols: d,
    })
}

/// Which shrinkage rule produced a transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransformKind<T> {
    /// Cap the singular values at the `⌊ρm⌋`-th largest one.
    Trim { rho: T },
    /// Zero the top `q_hat` singular values.
    PcaAdjust { q_hat: usize },
    Identity,
}

/// Number of directions shrunk by a `rho`-Trim on `m` singular values.
pub fn trim_count(rho: f64, m: usize) -> usize {
    // The epsilon absorbs representation error in fractions such as 2/3.
    ((rho * m as f64) + 1e-9).floor().max(0.0) as usize
}

#[derive(Clone, Debug)]
pub struct SpectralTransform<T: Real> {
    n: usize,
    u: DMatrix<T>,
    shrink: DVector<T>,
    singular_values: DVector<T>,
    kind: TransformKind<T>,
    /// Leading columns whose shrink factor may differ from one.
    support: usize,
    threshold: Option<T>,
}

impl<T: Real> SpectralTransform<T> {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            u: DMatrix::zeros(n, 0),
            shrink: DVector::zeros(0),
            singular_values: DVector::zeros(0),
            kind: TransformKind::Identity,
            support: 0,
            threshold: None,
        }
    }

    /// `ρ`-Trim transform. `ρ = 0` (or any `ρ` with `⌊ρm⌋ = 0`) gives the identity.
    pub fn trim(svd: &SvdFactors<T>, rho: T) -> Result<Self> {
        validate_rho(rho)?;
        let m = svd.rank_dim();
        let t = trim_count(rho.as_f64(), m);
        let mut shrink = DVector::from_element(m, T::one());
        let mut threshold = None;
        if t == 0 {
            log::info!("trim level {rho:?} shrinks no singular values; using the identity");
        } else {
            let tau = svd.singular_values[t - 1];
            if tau <= T::zero() {
                log::warn!("trim threshold is zero: every direction with a positive singular value is annihilated");
            }
            for l in 0..t {
                let lam = svd.singular_values[l];
                if lam > tau {
                    shrink[l] = tau / lam;
                }
            }
            threshold = Some(tau);
        }
        Ok(Self {
            n: svd.nrows(),
            u: svd.u.clone(),
            shrink,
            singular_values: svd.singular_values.clone(),
            kind: TransformKind::Trim { rho },
            support: t,
            threshold,
        })
    }

    /// PCA adjustment: removes the top `q_hat` left singular directions.
    pub fn pca_adjust(svd: &SvdFactors<T>, q_hat: usize) -> Result<Self> {
        let m = svd.rank_dim();
        if q_hat > m {
            return Err(DdlError::IndexOutOfRange {
                index: q_hat,
                limit: m,
            });
        }
        let shrink = DVector::from_fn(m, |l, _| if l < q_hat { T::zero() } else { T::one() });
        Ok(Self {
            n: svd.nrows(),
            u: svd.u.clone(),
            shrink,
            singular_values: svd.singular_values.clone(),
            kind: TransformKind::PcaAdjust { q_hat },
            support: q_hat,
            threshold: None,
        })
    }

    /// `ρ`-Trim of `x`, skipping the decomposition when nothing would be shrunk.
    pub fn trim_of(x: &DMatrix<T>, rho: T) -> Result<Self> {
        validate_rho(rho)?;
        let m = x.nrows().min(x.ncols());
        if trim_count(rho.as_f64(), m) == 0 {
            ensure_finite(x.iter().copied())?;
            let mut t = Self::identity(x.nrows());
            t.kind = TransformKind::Trim { rho };
            return Ok(t);
        }
        Self::trim(&svd_left(x)?, rho)
    }

    pub fn pca_of(x: &DMatrix<T>, q_hat: usize) -> Result<Self> {
        if q_hat == 0 {
            ensure_finite(x.iter().copied())?;
            let mut t = Self::identity(x.nrows());
            t.kind = TransformKind::PcaAdjust { q_hat: 0 };
            return Ok(t);
        }
        Self::pca_adjust(&svd_left(x)?, q_hat)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> TransformKind<T> {
        self.kind
    }

    pub fn u(&self) -> &DMatrix<T> {
        &self.u
    }

    pub fn shrink_factors(&self) -> &DVector<T> {
        &self.shrink
    }

    pub fn singular_values(&self) -> &DVector<T> {
        &self.singular_values
    }

    /// The Trim cap `τ`, if any direction is shrunk.
    pub fn threshold(&self) -> Option<T> {
        self.threshold
    }

    /// True when the operator is exactly the identity.
    pub fn is_identity(&self) -> bool {
        self.support == 0 || self.shrink.rows(0, self.support).iter().all(|&s| s == T::one())
    }

    fn check_rows(&self, rows: usize) -> Result<()> {
        if rows != self.n {
            return Err(DdlError::DimensionMismatch {
                expected: self.n,
                found: rows,
            });
        }
        Ok(())
    }

    fn complement_weights(&self, power: u32) -> DVector<T> {
        DVector::from_fn(self.support, |l, _| {
            T::one() - self.shrink[l].powi(power as i32)
        })
    }

    /// `P^power · M`, computed as `M - U diag(1 - S^power) U'M`.
    pub fn apply(&self, m: &DMatrix<T>, power: u32) -> Result<DMatrix<T>> {
        self.check_rows(m.nrows())?;
        if power == 0 || self.is_identity() {
            return Ok(m.clone());
        }
        let uk = self.u.columns(0, self.support);
        let mut coef = uk.tr_mul(m);
        let w = self.complement_weights(power);
        for (mut row, &wl) in coef.row_iter_mut().zip(w.iter()) {
            row *= wl;
        }
        let mut out = m.clone();
        out.gemm(-T::one(), &uk, &coef, T::one());
        Ok(out)
    }

    /// `P^power · v` for a single vector.
    pub fn apply_vec(&self, v: &DVector<T>, power: u32) -> Result<DVector<T>> {
        self.check_rows(v.len())?;
        if power == 0 || self.is_identity() {
            return Ok(v.clone());
        }
        let uk = self.u.columns(0, self.support);
        let mut coef = uk.tr_mul(v);
        coef.component_mul_assign(&self.complement_weights(power));
        let mut out = v.clone();
        out.gemv(-T::one(), &uk, &coef, T::one());
        Ok(out)
    }

    /// `Tr(P^k) = Σ_l S_l^k + (n - m)`.
    pub fn trace_power(&self, k: u32) -> T {
        let spectral: T = self
            .shrink
            .iter()
            .fold(T::zero(), |acc, &s| acc + s.powi(k as i32));
        spectral + T::lit((self.n - self.shrink.len()) as f64)
    }
}

fn validate_rho<T: Real>(rho: T) -> Result<()> {
    if !(rho >= T::zero() && rho <= T::one()) {
        return Err(DdlError::invalid(format!(
            "trim fraction must lie in [0, 1], got {rho:?}"
        )));
    }
    Ok(())
}

/// Finite-sample diagnostics for the spectral transformation property.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct P1Diagnostics {
    /// `‖PX‖₂² / (n · max(1, d/n))`.
    pub op_norm_ratio: f64,
    /// `Tr(P⁴) / m` with `m = min(n, d)`.
    pub trace4_ratio: f64,
    pub trace2: f64,
    pub trace4: f64,
    pub violated: bool,
}

/// Acceptance limits for [`check_p1`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct P1Limits {
    pub max_op_norm_ratio: f64,
    /// Typically `1 - ρ` for a `ρ`-Trim.
    pub min_trace4_ratio: f64,
}

impl Default for P1Limits {
    fn default() -> Self {
        Self {
            max_op_norm_ratio: 4.0,
            min_trace4_ratio: 0.5,
        }
    }
}

pub fn check_p1<T: Real>(
    transform: &SpectralTransform<T>,
    x: &DMatrix<T>,
    limits: &P1Limits,
) -> Result<P1Diagnostics> {
    let px = transform.apply(x, 1)?;
    let (n, d) = x.shape();
    let top = singular_values_only(&px)?.iter().copied().fold(T::zero(), T::max);
    let op_norm_ratio = top.as_f64().powi(2) / (n.max(d) as f64);
    let trace2 = transform.trace_power(2).as_f64();
    let trace4 = transform.trace_power(4).as_f64();
    let trace4_ratio = trace4 / n.min(d) as f64;
    let violated =
        op_norm_ratio > limits.max_op_norm_ratio || trace4_ratio < limits.min_trace4_ratio;
    Ok(P1Diagnostics {
        op_norm_ratio,
        trace4_ratio,
        trace2,
        trace4,
        violated,
    })
}

fn singular_values_only<T: Real>(x: &DMatrix<T>) -> Result<DVector<T>> {
    ensure_finite(x.iter().copied())?;
    if x.is_empty() {
        return Ok(DVector::zeros(0));
    }
    let svd = SVD::try_new(x.clone(), false, false, T::default_epsilon(), 0)
        .ok_or(DdlError::ConvergenceFailure)?;
    let mut values: Vec<T> = svd.singular_values.iter().map(|&s| s.max(T::zero())).collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(DVector::from_vec(values))
}

/// Sorted singular values for scree inspection.
#[derive(Clone, Debug)]
pub struct Spectrum<T: Real> {
    pub values: DVector<T>,
    /// 1-based index `⌊ρm⌋` and the value there, when a fraction was supplied.
    pub quantile: Option<(usize, T)>,
}

impl<T: Real> Spectrum<T> {
    /// Largest singular value over the median one; near 1 for flat spectra.
    pub fn spike_ratio(&self) -> Option<T> {
        let m = self.values.len();
        if m == 0 {
            return None;
        }
        let median = self.values[(m - 1) / 2];
        if median > T::zero() {
            Some(self.values[0] / median)
        } else {
            None
        }
    }
}

pub fn singular_spectrum<T: Real>(x: &DMatrix<T>, rho: Option<T>) -> Result<Spectrum<T>> {
    let values = singular_values_only(x)?;
    let quantile = match rho {
        Some(r) => {
            validate_rho(r)?;
            let t = trim_count(r.as_f64(), values.len());
            (t > 0).then(|| (t, values[t - 1]))
        }
        None => None,
    };
    Ok(Spectrum { values, quantile })
}
