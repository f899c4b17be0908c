//! Seeded data-generating processes for the hidden-confounding model
//! `X = HΨ + E`, `Y = Xβ + Hφ + e`, with the ground truth needed to score
//! estimators (the perturbation `b = Σ_X⁻¹Ψᵀφ` and the per-column `σ_j`).
//!
//! Every dataset is a pure function of `(Scenario, seed)`. Independent
//! sub-streams are used for loadings, confounders, design noise and response
//! noise, so changing e.g. `q` does not shift the draws of `e`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution as _, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{DdlError, Result};
use crate::seeding::derive_seed;

const STREAM_LOADINGS: u64 = 0;
const STREAM_CONFOUNDERS: u64 = 1;
const STREAM_DESIGN: u64 = 2;
const STREAM_NOISE: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Identity,
    /// `(Σ_E)_{ik} = κ^{|i-k|}`.
    Toeplitz(f64),
    /// Unit diagonal, `κ` off the diagonal.
    Equicorrelation(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingKind {
    DenseGaussian,
    /// Each row of `Ψ` keeps a random `frac` share of nonzero entries.
    SparseProportion(f64),
    /// `Ψ_{il} ~ N(0, σ_i(l)^{-a})` for an independent random ranking `σ_i` per row.
    Decay(f64),
}

/// Zero-mean, unit-variance law used for `H`, the design noise and `e`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    Gaussian,
    #[serde(rename = "chi2_1")]
    Chi2One,
    #[serde(rename = "t5")]
    StudentT5,
    #[serde(rename = "bin16")]
    Binomial16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Confounded,
    /// Confounded design, but `Y ← Y - Xb` so that the regression coefficient is exactly `β`.
    NoBias,
    /// `X = X⁰ + ΨᵀH` observed with error, `Y = X⁰β + e`.
    MeasurementError,
    /// `q` forced to zero.
    Unconfounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    /// Leading entries of `β`; the remaining `p - len` entries are zero.
    pub beta: Vec<f64>,
    pub sigma_e: f64,
    pub cov_e: CovarianceKind,
    pub loadings: LoadingKind,
    pub dist: NoiseDistribution,
    pub mode: Mode,
    /// Zero-based column whose coefficient is the inferential target.
    pub target: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            n: 300,
            p: 1000,
            q: 3,
            beta: vec![1.0; 5],
            sigma_e: 1.0,
            cov_e: CovarianceKind::Identity,
            loadings: LoadingKind::DenseGaussian,
            dist: NoiseDistribution::Gaussian,
            mode: Mode::Confounded,
            target: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.n < 5 || self.p < 2 {
            return Err(DdlError::invalid("scenario needs n >= 5 and p >= 2"));
        }
        if self.beta.len() > self.p {
            return Err(DdlError::invalid("more nonzero coefficients than columns"));
        }
        if self.target >= self.p {
            return Err(DdlError::IndexOutOfRange {
                index: self.target,
                limit: self.p,
            });
        }
        if !(self.sigma_e >= 0.0) || !self.sigma_e.is_finite() {
            return Err(DdlError::invalid("sigma_e must be finite and nonnegative"));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(DdlError::NonFinite);
        }
        match self.cov_e {
            CovarianceKind::Toeplitz(k) | CovarianceKind::Equicorrelation(k) if !(0.0..1.0).contains(&k) => {
                return Err(DdlError::invalid("correlation kappa must lie in [0, 1)"));
            }
            _ => {}
        }
        match self.loadings {
            LoadingKind::SparseProportion(f) if !(f > 0.0 && f <= 1.0) => {
                Err(DdlError::invalid("loading proportion must lie in (0, 1]"))
            }
            LoadingKind::Decay(a) if !(a >= 1.0) || !a.is_finite() => {
                Err(DdlError::invalid("loading decay exponent must be >= 1"))
            }
            _ => Ok(()),
        }
    }

    /// Number of confounders actually generated.
    pub fn effective_q(&self) -> usize {
        if self.mode == Mode::Unconfounded {
            0
        } else {
            self.q
        }
    }

    pub fn beta_vector(&self) -> DVector<f64> {
        DVector::from_fn(self.p, |l, _| self.beta.get(l).copied().unwrap_or(0.0))
    }
}

/// Cholesky factor `L` of `Σ_E` in a structured, O(p)-storage form.
#[derive(Clone, Debug, PartialEq)]
pub enum CovarianceFactor {
    Identity(usize),
    /// AR(1) factor: `L_{ik} = κ^{i-k}` for `k = 0`, `κ^{i-k}√(1-κ²)` for `0 < k ≤ i`.
    Toeplitz { p: usize, kappa: f64 },
    /// Equicorrelation factor: diagonal `d_k` and a constant `c_k` below the diagonal in column `k`.
    Equicorrelation { kappa: f64, diag: Vec<f64>, below: Vec<f64> },
}

/// Cholesky factor of `Σ_E`.
pub fn make_covariance(kind: CovarianceKind, p: usize) -> Result<CovarianceFactor> {
    match kind {
        CovarianceKind::Identity => Ok(CovarianceFactor::Identity(p)),
        CovarianceKind::Toeplitz(k) | CovarianceKind::Equicorrelation(k) if !(0.0..1.0).contains(&k) => {
            Err(DdlError::NotPositiveDefinite)
        }
        CovarianceKind::Toeplitz(k) if k == 0.0 => Ok(CovarianceFactor::Identity(p)),
        CovarianceKind::Toeplitz(kappa) => Ok(CovarianceFactor::Toeplitz { p, kappa }),
        CovarianceKind::Equicorrelation(k) if k == 0.0 => Ok(CovarianceFactor::Identity(p)),
        CovarianceKind::Equicorrelation(kappa) => {
            // Column k of L below the diagonal is constant: c_k = (κ - Σ_{l<k} c_l²) / d_k,
            // with d_k = √(1 - Σ_{l<k} c_l²).
            let mut diag = Vec::with_capacity(p);
            let mut below = Vec::with_capacity(p);
            let mut acc: f64 = 0.0;
            for _ in 0..p {
                let d2 = 1.0 - acc;
                if !(d2 > 0.0) {
                    return Err(DdlError::NotPositiveDefinite);
                }
                let d = d2.sqrt();
                let c = (kappa - acc) / d;
                diag.push(d);
                below.push(c);
                acc += c * c;
            }
            Ok(CovarianceFactor::Equicorrelation { kappa, diag, below })
        }
    }
}

impl CovarianceFactor {
    pub fn dim(&self) -> usize {
        match self {
            CovarianceFactor::Identity(p) | CovarianceFactor::Toeplitz { p, .. } => *p,
            CovarianceFactor::Equicorrelation { diag, .. } => diag.len(),
        }
    }

    /// The factor as a dense lower-triangular matrix.
    pub fn dense(&self) -> DMatrix<f64> {
        let p = self.dim();
        match self {
            CovarianceFactor::Identity(_) => DMatrix::identity(p, p),
            CovarianceFactor::Toeplitz { kappa, .. } => {
                let s = (1.0 - kappa * kappa).sqrt();
                DMatrix::from_fn(p, p, |i, k| match (i, k) {
                    (i, k) if k > i => 0.0,
                    (i, 0) => kappa.powi(i as i32),
                    (i, k) => kappa.powi((i - k) as i32) * s,
                })
            }
            CovarianceFactor::Equicorrelation { diag, below, .. } => DMatrix::from_fn(p, p, |i, k| {
                if k > i {
                    0.0
                } else if k == i {
                    diag[k]
                } else {
                    below[k]
                }
            }),
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let l = self.dense();
        &l * l.transpose()
    }

    /// `E = Z Lᵀ`, i.e. every row `z` is mapped to `L z`.
    pub fn correlate(&self, z: &mut DMatrix<f64>) {
        let (n, p) = z.shape();
        match self {
            CovarianceFactor::Identity(_) => {}
            CovarianceFactor::Toeplitz { kappa, .. } => {
                let s = (1.0 - kappa * kappa).sqrt();
                for k in 1..p {
                    for i in 0..n {
                        z[(i, k)] = kappa * z[(i, k - 1)] + s * z[(i, k)];
                    }
                }
            }
            CovarianceFactor::Equicorrelation { diag, below, .. } => {
                let mut running = vec![0.0; n];
                for k in 0..p {
                    for (i, r) in running.iter_mut().enumerate() {
                        let zk = z[(i, k)];
                        z[(i, k)] = *r + diag[k] * zk;
                        *r += below[k] * zk;
                    }
                }
            }
        }
    }

    /// `Σ_E⁻¹ v` in closed form.
    pub fn precision_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let p = v.len();
        match self {
            CovarianceFactor::Identity(_) => v.clone(),
            CovarianceFactor::Toeplitz { kappa, .. } => {
                // The AR(1) precision is tridiagonal.
                let k = *kappa;
                let scale = 1.0 / (1.0 - k * k);
                DVector::from_fn(p, |i, _| {
                    let centre = if i == 0 || i + 1 == p { 1.0 } else { 1.0 + k * k };
                    let mut acc = centre * v[i];
                    if i > 0 {
                        acc -= k * v[i - 1];
                    }
                    if i + 1 < p {
                        acc -= k * v[i + 1];
                    }
                    acc * scale
                })
            }
            CovarianceFactor::Equicorrelation { kappa, .. } => {
                let k = *kappa;
                let sum = v.sum();
                let shift = k / (1.0 + (p as f64 - 1.0) * k);
                v.map(|x| (x - shift * sum) / (1.0 - k))
            }
        }
    }

    /// `(Σ_E⁻¹)_{jj}` for every `j`.
    pub fn precision_diagonal(&self) -> DVector<f64> {
        let p = self.dim();
        match self {
            CovarianceFactor::Identity(_) => DVector::from_element(p, 1.0),
            CovarianceFactor::Toeplitz { kappa, .. } => {
                let k = *kappa;
                DVector::from_fn(p, |i, _| {
                    let centre = if i == 0 || i + 1 == p { 1.0 } else { 1.0 + k * k };
                    centre / (1.0 - k * k)
                })
            }
            CovarianceFactor::Equicorrelation { kappa, .. } => {
                let k = *kappa;
                let d = (1.0 - k / (1.0 + (p as f64 - 1.0) * k)) / (1.0 - k);
                DVector::from_element(p, d)
            }
        }
    }
}

/// Loadings `Ψ` (`q × p`) and confounder effects `φ` (length `q`).
pub fn make_loadings(q: usize, p: usize, kind: LoadingKind, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi = DMatrix::zeros(q, p);
    for i in 0..q {
        for l in 0..p {
            psi[(i, l)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    match kind {
        LoadingKind::DenseGaussian => {}
        LoadingKind::SparseProportion(frac) => {
            let keep = ((frac * p as f64).round() as usize).min(p);
            let mut cols: Vec<usize> = (0..p).collect();
            for i in 0..q {
                cols.shuffle(&mut rng);
                for &l in &cols[keep..] {
                    psi[(i, l)] = 0.0;
                }
            }
        }
        LoadingKind::Decay(a) => {
            let mut ranks: Vec<usize> = (1..=p).collect();
            for i in 0..q {
                ranks.shuffle(&mut rng);
                for l in 0..p {
                    psi[(i, l)] *= (ranks[l] as f64).powf(-a / 2.0);
                }
            }
        }
    }
    let phi = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
    (psi, phi)
}

/// `b = (Σ_E + ΨᵀΨ)⁻¹Ψᵀφ` through the Woodbury identity (only a `q × q` solve).
pub fn true_perturbation(
    psi: &DMatrix<f64>,
    phi: &DVector<f64>,
    cov: &CovarianceFactor,
) -> Result<DVector<f64>> {
    let (q, p) = psi.shape();
    if phi.len() != q {
        return Err(DdlError::DimensionMismatch {
            expected: q,
            found: phi.len(),
        });
    }
    if cov.dim() != p {
        return Err(DdlError::DimensionMismatch {
            expected: p,
            found: cov.dim(),
        });
    }
    if q == 0 {
        return Ok(DVector::zeros(p));
    }
    let rhs = psi.tr_mul(phi);
    let w = cov.precision_mul(&rhs);
    // Ω Ψᵀ, one column per confounder.
    let mut omega_psi_t = DMatrix::zeros(p, q);
    for i in 0..q {
        let col = cov.precision_mul(&psi.row(i).transpose());
        omega_psi_t.set_column(i, &col);
    }
    let inner = DMatrix::identity(q, q) + psi * &omega_psi_t;
    let chol = inner.cholesky().ok_or(DdlError::SingularSystem)?;
    let correction = chol.solve(&(psi * &w));
    let b = w - omega_psi_t * correction;
    if b.iter().any(|v| !v.is_finite()) {
        return Err(DdlError::SingularSystem);
    }
    Ok(b)
}

/// Draws of a standardized distribution.
#[derive(Clone, Debug)]
pub struct StandardizedSampler {
    dist: NoiseDistribution,
    rng: ChaCha8Rng,
    t5: StudentT<f64>,
    bin16: Binomial,
}

impl StandardizedSampler {
    pub fn new(dist: NoiseDistribution, seed: u64) -> Self {
        Self {
            dist,
            rng: ChaCha8Rng::seed_from_u64(seed),
            t5: StudentT::new(5.0).expect("valid degrees of freedom"),
            bin16: Binomial::new(16, 0.5).expect("valid binomial"),
        }
    }

    pub fn draw(&mut self) -> f64 {
        match self.dist {
            NoiseDistribution::Gaussian => self.rng.sample(StandardNormal),
            NoiseDistribution::Chi2One => {
                let z: f64 = self.rng.sample(StandardNormal);
                (z * z - 1.0) / std::f64::consts::SQRT_2
            }
            NoiseDistribution::StudentT5 => self.t5.sample(&mut self.rng) / (5.0f64 / 3.0).sqrt(),
            NoiseDistribution::Binomial16 => (self.bin16.sample(&mut self.rng) as f64 - 8.0) / 2.0,
        }
    }
}

impl Iterator for StandardizedSampler {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.draw())
    }
}

pub fn standardized_sampler(dist: NoiseDistribution, seed: u64) -> StandardizedSampler {
    StandardizedSampler::new(dist, seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub beta: DVector<f64>,
    /// Perturbation of the regression of `Y` on `X` (zero in the `NoBias` mode).
    pub b: DVector<f64>,
    /// Residual sd of `E_j` given `E_{-j}`, `1/√((Σ_E⁻¹)_{jj})`.
    pub sigma_j: DVector<f64>,
    pub sigma_e: f64,
    pub h: DMatrix<f64>,
    /// Unconfounded part of the design (`X⁰` in the measurement-error mode).
    pub e_design: DMatrix<f64>,
    pub noise: DVector<f64>,
    pub psi: DMatrix<f64>,
    /// Effect of `H` on `Y` in `Y = Xβ + Hφ + e` (`-Ψβ` in the measurement-error mode).
    pub phi: DVector<f64>,
    /// `Δ = Y - X(β + b) - e`, i.e. `Hφ - Xb₀` with `b₀ = Σ_X⁻¹Ψᵀφ`.
    pub delta: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub truth: Truth,
}

fn fill(rows: usize, cols: usize, sampler: &mut StandardizedSampler) -> DMatrix<f64> {
    // Row-major draw order, so a dataset with more columns extends rows rather than reshuffling.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for l in 0..cols {
            m[(i, l)] = sampler.draw();
        }
    }
    m
}

pub fn sample_dataset(scenario: &Scenario, seed: u64) -> Result<Dataset> {
    scenario.validate()?;
    let (n, p) = (scenario.n, scenario.p);
    let q = scenario.effective_q();
    let beta = scenario.beta_vector();
    let cov = make_covariance(scenario.cov_e, p)?;

    let (psi, raw_phi) = make_loadings(q, p, scenario.loadings, derive_seed(seed, &[STREAM_LOADINGS]));
    let phi = if scenario.mode == Mode::MeasurementError {
        -(&psi * &beta)
    } else {
        raw_phi
    };
    let h = fill(n, q, &mut standardized_sampler(scenario.dist, derive_seed(seed, &[STREAM_CONFOUNDERS])));
    let mut e_design = fill(n, p, &mut standardized_sampler(scenario.dist, derive_seed(seed, &[STREAM_DESIGN])));
    cov.correlate(&mut e_design);
    let mut sampler = standardized_sampler(scenario.dist, derive_seed(seed, &[STREAM_NOISE]));
    let noise = DVector::from_fn(n, |_, _| scenario.sigma_e * sampler.draw());

    let x = &h * &psi + &e_design;
    let b0 = true_perturbation(&psi, &phi, &cov)?;
    let confounding = &h * &phi;
    let delta = &confounding - &x * &b0;
    let (y, b) = if scenario.mode == Mode::NoBias {
        (&x * &beta + &delta + &noise, DVector::zeros(p))
    } else {
        (&x * &beta + &confounding + &noise, b0)
    };
    let sigma_j = cov.precision_diagonal().map(|d| 1.0 / d.sqrt());
    Ok(Dataset {
        x,
        y,
        truth: Truth {
            beta,
            b,
            sigma_j,
            sigma_e: scenario.sigma_e,
            h,
            e_design,
            noise,
            psi,
            phi,
            delta,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trivial_factors() {
        assert_eq!(make_covariance(CovarianceKind::Identity, 4).unwrap().dense(), DMatrix::identity(4, 4));
        assert_eq!(make_covariance(CovarianceKind::Toeplitz(0.0), 4).unwrap().dense(), DMatrix::identity(4, 4));
        let l = make_covariance(CovarianceKind::Toeplitz(0.6), 2).unwrap().dense();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.6, 0.8]);
        assert!((l - expect).amax() < 1e-15);
        assert!(make_covariance(CovarianceKind::Toeplitz(1.0), 3).is_err());
    }

    #[test]
    fn structured_factors_match_dense_cholesky() {
        for kind in [CovarianceKind::Toeplitz(0.7), CovarianceKind::Equicorrelation(0.4)] {
            let f = make_covariance(kind, 30).unwrap();
            let sigma = DMatrix::from_fn(30, 30, |i, k| match kind {
                CovarianceKind::Toeplitz(c) => c.powi((i as i32 - k as i32).abs()),
                CovarianceKind::Equicorrelation(c) => if i == k { 1.0 } else { c },
                CovarianceKind::Identity => unreachable!(),
            });
            let chol = sigma.clone().cholesky().unwrap().l();
            assert!((f.dense() - &chol).amax() < 1e-12, "{kind:?}");

            let inv = sigma.clone().try_inverse().unwrap();
            let v = DVector::from_fn(30, |i, _| (i as f64 * 0.37).sin());
            assert!((f.precision_mul(&v) - &inv * &v).amax() < 1e-10);
            assert!((f.precision_diagonal() - inv.diagonal()).amax() < 1e-10);

            let mut z = DMatrix::from_fn(4, 30, |i, k| ((i * 31 + k * 7) % 13) as f64 - 6.0);
            let expect = &z * chol.transpose();
            f.correlate(&mut z);
            assert!((z - expect).amax() < 1e-10);
        }
    }

    #[test]
    fn loadings_shapes_and_sparsity() {
        let (psi, phi) = make_loadings(0, 10, LoadingKind::DenseGaussian, 1);
        assert_eq!(psi.shape(), (0, 10));
        assert_eq!(phi.len(), 0);
        let (psi, _) = make_loadings(3, 40, LoadingKind::SparseProportion(0.25), 1);
        for i in 0..3 {
            assert_eq!(psi.row(i).iter().filter(|&&v| v != 0.0).count(), 10);
        }
        let (dense, _) = make_loadings(3, 40, LoadingKind::DenseGaussian, 1);
        let (full, _) = make_loadings(3, 40, LoadingKind::SparseProportion(1.0), 1);
        assert_eq!(dense, full);
    }

    #[test]
    fn decay_scales_by_rank() {
        // With a = 2 every row holds exactly one entry of each scale r^{-1}.
        let (psi, _) = make_loadings(2, 50, LoadingKind::Decay(2.0), 4);
        let (raw, _) = make_loadings(2, 50, LoadingKind::DenseGaussian, 4);
        for i in 0..2 {
            let mut ranks: Vec<usize> = (0..50)
                .map(|l| (raw[(i, l)] / psi[(i, l)]).round() as usize)
                .collect();
            ranks.sort_unstable();
            assert_eq!(ranks, (1..=50).collect::<Vec<_>>());
        }
    }

    #[test]
    fn perturbation_examples() {
        let cov = make_covariance(CovarianceKind::Identity, 2).unwrap();
        let b = true_perturbation(&DMatrix::zeros(0, 2), &DVector::zeros(0), &cov).unwrap();
        assert_eq!(b, DVector::zeros(2));
        let psi = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let b = true_perturbation(&psi, &DVector::from_element(1, 1.0), &cov).unwrap();
        assert_relative_eq!(b[0], 0.5, epsilon = 1e-15);
        assert_eq!(b[1], 0.0);
    }

    #[test]
    fn woodbury_matches_dense_solve() {
        for kind in [CovarianceKind::Identity, CovarianceKind::Toeplitz(0.5), CovarianceKind::Equicorrelation(0.3)] {
            let cov = make_covariance(kind, 200).unwrap();
            let (psi, phi) = make_loadings(3, 200, LoadingKind::DenseGaussian, 11);
            let b = true_perturbation(&psi, &phi, &cov).unwrap();
            let sigma_x = cov.covariance() + psi.transpose() * &psi;
            let rhs = psi.transpose() * &phi;
            let dense = sigma_x.clone().lu().solve(&rhs).unwrap();
            assert!((&b - dense).norm() <= 1e-8 * rhs.norm());
            assert!((sigma_x * &b - &rhs).norm() <= 1e-8 * rhs.norm());
        }
    }

    #[test]
    fn sampler_moments_and_support() {
        let draws: Vec<f64> = standardized_sampler(NoiseDistribution::Binomial16, 3).take(2000).collect();
        assert!(draws.iter().all(|&d| (-4.0..=4.0).contains(&d) && (d * 2.0).fract() == 0.0));
        for dist in [NoiseDistribution::Gaussian, NoiseDistribution::Chi2One, NoiseDistribution::StudentT5, NoiseDistribution::Binomial16] {
            let n = 200_000;
            let (s, s2) = standardized_sampler(dist, 8)
                .take(n)
                .fold((0.0, 0.0), |(a, b), x| (a + x, b + x * x));
            let mean = s / n as f64;
            assert!(mean.abs() < 0.02, "{dist:?} mean {mean}");
            assert!((s2 / n as f64 - 1.0).abs() < 0.05, "{dist:?}");
        }
    }

    #[test]
    fn dataset_is_deterministic_and_consistent() {
        let sc = Scenario {
            n: 40,
            p: 60,
            ..Scenario::default()
        };
        let a = sample_dataset(&sc, 5).unwrap();
        assert_eq!(a, sample_dataset(&sc, 5).unwrap());
        assert_ne!(a.x, sample_dataset(&sc, 6).unwrap().x);
        let t = &a.truth;
        let resid = &a.y - &a.x * &t.beta - &t.h * &t.phi - &t.noise;
        assert!(resid.amax() < 1e-12);
        let resid = &a.y - &a.x * (&t.beta + &t.b) - &t.delta - &t.noise;
        assert!(resid.amax() < 1e-12);
        assert!((&a.x - &t.h * &t.psi - &t.e_design).amax() < 1e-12);
    }

    #[test]
    fn modes() {
        let base = Scenario {
            n: 30,
            p: 20,
            ..Scenario::default()
        };
        let un = sample_dataset(&Scenario { mode: Mode::Unconfounded, ..base.clone() }, 1).unwrap();
        assert_eq!(un.truth.h.ncols(), 0);
        assert_eq!(un.truth.b, DVector::zeros(20));

        let nb = sample_dataset(&Scenario { mode: Mode::NoBias, ..base.clone() }, 1).unwrap();
        assert_eq!(nb.truth.b, DVector::zeros(20));
        let resid = &nb.y - &nb.x * &nb.truth.beta - &nb.truth.delta - &nb.truth.noise;
        assert!(resid.amax() < 1e-12);

        let me = sample_dataset(&Scenario { mode: Mode::MeasurementError, ..base }, 1).unwrap();
        let t = &me.truth;
        let resid = &me.y - &t.e_design * &t.beta - &t.noise;
        assert!(resid.amax() < 1e-12);
    }

    #[test]
    fn sigma_j_from_precision() {
        let sc = Scenario {
            n: 10,
            p: 5,
            cov_e: CovarianceKind::Toeplitz(0.5),
            ..Scenario::default()
        };
        let d = sample_dataset(&sc, 0).unwrap();
        assert_relative_eq!(d.truth.sigma_j[0], (0.75f64).sqrt(), epsilon = 1e-14);
        assert_relative_eq!(d.truth.sigma_j[2], (0.75f64 / 1.25).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn scenario_json_round_trip() {
        let sc = Scenario {
            cov_e: CovarianceKind::Toeplitz(0.7),
            loadings: LoadingKind::Decay(2.0),
            dist: NoiseDistribution::Chi2One,
            ..Scenario::default()
        };
        let text = serde_json::to_string(&sc).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sc);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        assert!(serde_json::from_str::<Scenario>(r#"{"nn": 3}"#).is_err());
        assert!(text.contains("\"chi2_1\""));
    }

    #[test]
    fn rejects_invalid_scenarios() {
        let bad = |s: Scenario| s.validate().is_err();
        assert!(bad(Scenario { cov_e: CovarianceKind::Equicorrelation(1.0), ..Scenario::default() }));
        assert!(bad(Scenario { loadings: LoadingKind::SparseProportion(0.0), ..Scenario::default() }));
        assert!(bad(Scenario { loadings: LoadingKind::Decay(0.5), ..Scenario::default() }));
        assert!(bad(Scenario { p: 3, ..Scenario::default() }));
        assert!(bad(Scenario { target: 1000, ..Scenario::default() }));
    }
}
