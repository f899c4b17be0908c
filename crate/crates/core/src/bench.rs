//! Monte-Carlo replications of the simulation study: scaled bias terms,
//! coverage, grid sweeps over one scenario axis, and CSV reports.
//!
//! Three methods are compared on identical data: the doubly debiased Lasso,
//! the standard debiased Lasso (all transforms identity), and the debiased
//! Lasso that reuses the spectral-deconfounding initial estimator.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ddl::{
    estimate_target, initial_estimator, projection_direction, CenteredData, DdlConfig, DdlResult,
    InitialEstimate, ProjectionDirection, TransformChoice,
};
use crate::error::{DdlError, Result};
use crate::format::g15;
use crate::seeding::derive_seed;
use crate::simgen::{sample_dataset, Dataset, Scenario};

const STREAM_DATA: u64 = 0;
const STREAM_CV: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ddl,
    DebiasedLasso,
    DebiasedLassoSharedInit,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ddl, Method::DebiasedLasso, Method::DebiasedLassoSharedInit];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ddl => "ddl",
            Method::DebiasedLasso => "debiased_lasso",
            Method::DebiasedLassoSharedInit => "debiased_lasso_shared_init",
        }
    }
}

/// Exact finite-sample split of the estimation error:
/// `β̂_j - β_j = √V·(B_β + B_b) + noise_term` with the true noise variance in `V`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorDecomposition {
    /// Scaled bias from the initial estimator, `Z_jᵀP²X_{-j}(β - β̂init)_{-j} / (D √V)`.
    pub b_beta: f64,
    /// Scaled bias from the confounding perturbation, `Z_jᵀP²Xb / (D √V)`.
    pub b_b: f64,
    /// `V = σ_e² Z_jᵀP⁴Z_j / D²` with the true `σ_e²`; `D = Z_jᵀP²X_j`.
    pub v_true: f64,
    /// `Z_jᵀP²(e + Δ) / D`.
    pub noise_term: f64,
}

/// Scaled bias terms `(B_β, B_b)` from the internals of one fit.
///
/// `x` must be the design the internals were computed on (centred, if the fit
/// centred). `Z_jᵀP²` annihilates constants, so uncentred truth vectors are fine.
pub fn scaled_bias_terms(
    x: &DMatrix<f64>,
    beta_init: &DVector<f64>,
    proj: &ProjectionDirection<f64>,
    beta: &DVector<f64>,
    b: &DVector<f64>,
    sigma_e2: f64,
) -> Result<(f64, f64)> {
    let p = x.ncols();
    if beta_init.len() != p || beta.len() != p || b.len() != p {
        return Err(DdlError::DimensionMismatch {
            expected: p,
            found: beta_init.len().min(beta.len()).min(b.len()),
        });
    }
    let den = proj.denominator;
    if den == 0.0 || !den.is_finite() {
        return Err(DdlError::DegenerateDenominator { value: den });
    }
    let sd = (sigma_e2 * proj.p4_quadratic).sqrt() / den.abs();
    if !(sd > 0.0) {
        return Err(DdlError::invalid("bias terms need a positive variance"));
    }
    let mut gap = beta - beta_init;
    gap[proj.j] = 0.0;
    let xg = x * gap;
    let xb = x * b;
    Ok((proj.p2z.dot(&xg) / den / sd, proj.p2z.dot(&xb) / den / sd))
}

/// Full error decomposition against the simulation truth.
pub fn error_decomposition(
    x: &DMatrix<f64>,
    beta_init: &DVector<f64>,
    proj: &ProjectionDirection<f64>,
    dataset: &Dataset,
) -> Result<ErrorDecomposition> {
    let t = &dataset.truth;
    let sigma_e2 = t.sigma_e * t.sigma_e;
    let (b_beta, b_b) = scaled_bias_terms(x, beta_init, proj, &t.beta, &t.b, sigma_e2)?;
    let v_true = sigma_e2 * proj.variance_factor();
    let noise_term = proj.p2z.dot(&(&t.noise + &t.delta)) / proj.denominator;
    Ok(ErrorDecomposition {
        b_beta,
        b_b,
        v_true,
        noise_term,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationRecord {
    pub cell: usize,
    pub rep: usize,
    pub seed: u64,
    pub method: Method,
    pub beta_true: f64,
    pub beta_hat: f64,
    /// Estimated variance `V̂` (with `σ̂_e²`).
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub covered: bool,
    pub b_beta: f64,
    pub b_b: f64,
    pub v_true: f64,
    pub noise_term: f64,
    pub sigma_e2_hat: f64,
    pub lambda: f64,
    pub lambda_j: f64,
    /// Empty for a clean run; otherwise the failure or convergence notes.
    pub flags: String,
    pub failed: bool,
}

impl ReplicationRecord {
    fn failure(cell: usize, rep: usize, seed: u64, method: Method, beta_true: f64, err: &DdlError) -> Self {
        let nan = f64::NAN;
        Self {
            cell,
            rep,
            seed,
            method,
            beta_true,
            beta_hat: nan,
            variance: nan,
            ci_low: nan,
            ci_high: nan,
            covered: false,
            b_beta: nan,
            b_b: nan,
            v_true: nan,
            noise_term: nan,
            sigma_e2_hat: nan,
            lambda: nan,
            lambda_j: nan,
            flags: err.to_string(),
            failed: true,
        }
    }
}

fn record_from(
    cell: usize,
    rep: usize,
    seed: u64,
    method: Method,
    dataset: &Dataset,
    x: &DMatrix<f64>,
    init: &InitialEstimate<f64>,
    proj: &ProjectionDirection<f64>,
    result: &DdlResult<f64>,
) -> Result<ReplicationRecord> {
    let parts = error_decomposition(x, &init.fit.coef, proj, dataset)?;
    let beta_true = dataset.truth.beta[proj.j];
    Ok(ReplicationRecord {
        cell,
        rep,
        seed,
        method,
        beta_true,
        beta_hat: result.beta_hat,
        variance: result.variance,
        ci_low: result.ci_low,
        ci_high: result.ci_high,
        covered: result.ci_low <= beta_true && beta_true <= result.ci_high,
        b_beta: parts.b_beta,
        b_b: parts.b_b,
        v_true: parts.v_true,
        noise_term: parts.noise_term,
        sigma_e2_hat: result.sigma_e2_hat,
        lambda: result.lambda,
        lambda_j: result.lambda_j,
        flags: result.flags.join(";"),
        failed: false,
    })
}

/// Runs every requested method on one dataset, sharing work between them.
///
/// The doubly debiased Lasso uses the transforms in `config`; the two baselines
/// replace the nuisance transform (and, for the plain baseline, also the
/// initial transform) by the identity.
pub fn run_methods(
    dataset: &Dataset,
    target: usize,
    methods: &[Method],
    config: &DdlConfig<f64>,
    cell: usize,
    rep: usize,
    seed: u64,
) -> Vec<ReplicationRecord> {
    let beta_true = dataset.truth.beta.get(target).copied().unwrap_or(f64::NAN);
    let fail_all = |e: &DdlError| {
        methods
            .iter()
            .map(|&m| ReplicationRecord::failure(cell, rep, seed, m, beta_true, e))
            .collect()
    };
    let data = match CenteredData::prepare(&dataset.x, &dataset.y, config) {
        Ok(d) => d,
        Err(e) => return fail_all(&e),
    };
    let plain = config.with_transforms(TransformChoice::Identity);
    let shared_nuisance = DdlConfig {
        nuisance_transform: TransformChoice::Identity,
        ..config.clone()
    };
    let needs = |ms: &[Method]| methods.iter().any(|m| ms.contains(m));

    let init_spectral = needs(&[Method::Ddl, Method::DebiasedLassoSharedInit])
        .then(|| initial_estimator(&data.x, &data.y, config));
    let init_plain = needs(&[Method::DebiasedLasso]).then(|| initial_estimator(&data.x, &data.y, &plain));
    let dir_spectral = needs(&[Method::Ddl]).then(|| projection_direction(&data.x, target, config));
    let dir_plain = needs(&[Method::DebiasedLasso, Method::DebiasedLassoSharedInit])
        .then(|| projection_direction(&data.x, target, &shared_nuisance));

    methods
        .iter()
        .map(|&method| {
            let (init, dir) = match method {
                Method::Ddl => (&init_spectral, &dir_spectral),
                Method::DebiasedLasso => (&init_plain, &dir_plain),
                Method::DebiasedLassoSharedInit => (&init_spectral, &dir_plain),
            };
            let init = init.as_ref().expect("computed for this method");
            let dir = dir.as_ref().expect("computed for this method");
            let outcome = match (init, dir) {
                (Ok(init), Ok(dir)) => estimate_target(&data.x, &data.y, init, dir, config.alpha)
                    .and_then(|r| record_from(cell, rep, seed, method, dataset, &data.x, init, dir, &r)),
                (Err(e), _) | (_, Err(e)) => Err(e.clone()),
            };
            outcome.unwrap_or_else(|e| ReplicationRecord::failure(cell, rep, seed, method, beta_true, &e))
        })
        .collect()
}

/// Configuration used for one replication: the CV seed is derived from the data seed.
fn replication_config(config: &DdlConfig<f64>, seed: u64) -> DdlConfig<f64> {
    DdlConfig {
        seed: derive_seed(seed, &[STREAM_CV]),
        ..config.clone()
    }
}

/// Seed of replication `rep` in grid cell `cell`.
pub fn replication_seed(master_seed: u64, cell: usize, rep: usize) -> u64 {
    derive_seed(master_seed, &[cell as u64, rep as u64])
}

/// Samples a dataset from `scenario` with `seed` and runs one method on its target.
pub fn run_replication(
    scenario: &Scenario,
    method: Method,
    config: &DdlConfig<f64>,
    seed: u64,
) -> ReplicationRecord {
    run_replication_methods(scenario, &[method], config, seed, 0, 0).remove(0)
}

/// Like [`run_replication`] for several methods on the same dataset.
pub fn run_replication_methods(
    scenario: &Scenario,
    methods: &[Method],
    config: &DdlConfig<f64>,
    seed: u64,
    cell: usize,
    rep: usize,
) -> Vec<ReplicationRecord> {
    let beta_true = scenario.beta.get(scenario.target).copied().unwrap_or(0.0);
    match sample_dataset(scenario, derive_seed(seed, &[STREAM_DATA])) {
        Ok(data) => run_methods(&data, scenario.target, methods, &replication_config(config, seed), cell, rep, seed),
        Err(e) => methods
            .iter()
            .map(|&m| ReplicationRecord::failure(cell, rep, seed, m, beta_true, &e))
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    pub axis_value: f64,
    pub scenario: Scenario,
    pub config: DdlConfig<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Name of the swept quantity, e.g. `"n"` or `"rho_j"`.
    pub axis: String,
    pub cells: Vec<GridCell>,
    pub methods: Vec<Method>,
    pub reps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub cell: usize,
    pub axis_value: f64,
    pub method: Method,
    /// Share of non-failed replications whose interval covers the truth.
    pub coverage: f64,
    pub mean_abs_b_beta: f64,
    pub mean_abs_b_b: f64,
    /// Mean of `√V̂`.
    pub mean_sqrt_v: f64,
    pub mean_sigma_e2_hat: f64,
    pub replications: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloReport {
    pub axis: String,
    pub summaries: Vec<CellSummary>,
    pub records: Vec<ReplicationRecord>,
}

fn summarize(cell: usize, axis_value: f64, method: Method, records: &[&ReplicationRecord]) -> CellSummary {
    let ok: Vec<&&ReplicationRecord> = records.iter().filter(|r| !r.failed).collect();
    let k = ok.len() as f64;
    let mean = |f: &dyn Fn(&ReplicationRecord) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / k
        }
    };
    CellSummary {
        cell,
        axis_value,
        method,
        coverage: mean(&|r| if r.covered { 1.0 } else { 0.0 }),
        mean_abs_b_beta: mean(&|r| r.b_beta.abs()),
        mean_abs_b_b: mean(&|r| r.b_b.abs()),
        mean_sqrt_v: mean(&|r| r.variance.sqrt()),
        mean_sigma_e2_hat: mean(&|r| r.sigma_e2_hat),
        replications: records.len(),
        failures: records.len() - ok.len(),
    }
}

/// Runs every (cell, replication) pair on a pool of `workers` threads.
///
/// Seeds depend only on `(master_seed, cell, rep)` and results are collected in
/// index order, so the report does not depend on `workers` or scheduling.
pub fn run_grid(spec: &GridSpec, master_seed: u64, workers: usize) -> Result<MonteCarloReport> {
    if spec.reps == 0 {
        return Err(DdlError::invalid("reps must be at least 1"));
    }
    if spec.methods.is_empty() {
        return Err(DdlError::invalid("no methods requested"));
    }
    for cell in &spec.cells {
        cell.scenario.validate()?;
        cell.config.validate()?;
    }
    let tasks: Vec<(usize, usize)> = (0..spec.cells.len())
        .flat_map(|c| (0..spec.reps).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| DdlError::invalid(format!("cannot start worker pool: {e}")))?;
    let records: Vec<ReplicationRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, r)| {
                let cell = &spec.cells[c];
                let seed = replication_seed(master_seed, c, r);
                run_replication_methods(&cell.scenario, &spec.methods, &cell.config, seed, c, r)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });

    let mut summaries = Vec::new();
    for (c, cell) in spec.cells.iter().enumerate() {
        for &method in &spec.methods {
            let rows: Vec<&ReplicationRecord> =
                records.iter().filter(|r| r.cell == c && r.method == method).collect();
            summaries.push(summarize(c, cell.axis_value, method, &rows));
        }
    }
    Ok(MonteCarloReport {
        axis: spec.axis.clone(),
        summaries,
        records,
    })
}

impl MonteCarloReport {
    pub fn summary(&self, cell: usize, method: Method) -> Option<&CellSummary> {
        self.summaries.iter().find(|s| s.cell == cell && s.method == method)
    }

    /// Long format: `scenario_axis,axis_value,method,metric,value`.
    pub fn write_report_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| DdlError::invalid(format!("cannot write report: {e}"));
        w.write_record(["scenario_axis", "axis_value", "method", "metric", "value"]).map_err(io)?;
        for s in &self.summaries {
            let metrics = [
                ("coverage", s.coverage),
                ("mean_abs_b_beta", s.mean_abs_b_beta),
                ("mean_abs_b_b", s.mean_abs_b_b),
                ("mean_sqrt_v", s.mean_sqrt_v),
                ("mean_sigma_e2_hat", s.mean_sigma_e2_hat),
                ("replications", s.replications as f64),
                ("failures", s.failures as f64),
            ];
            for (name, value) in metrics {
                w.write_record([
                    self.axis.as_str(),
                    &g15(s.axis_value),
                    s.method.name(),
                    name,
                    &g15(value),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| DdlError::invalid(format!("cannot write report: {e}")))
    }

    /// One row per (replication, method).
    pub fn write_records_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| DdlError::invalid(format!("cannot write records: {e}"));
        w.write_record([
            "cell", "rep", "seed", "method", "beta_true", "beta_hat", "variance", "ci_low", "ci_high",
            "covered", "b_beta", "b_b", "v_true", "noise_term", "sigma_e2_hat", "lambda", "lambda_j",
            "failed", "flags",
        ])
        .map_err(io)?;
        for r in &self.records {
            w.write_record([
                r.cell.to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
                r.method.name().to_string(),
                g15(r.beta_true),
                g15(r.beta_hat),
                g15(r.variance),
                g15(r.ci_low),
                g15(r.ci_high),
                (r.covered as u8).to_string(),
                g15(r.b_beta),
                g15(r.b_b),
                g15(r.v_true),
                g15(r.noise_term),
                g15(r.sigma_e2_hat),
                g15(r.lambda),
                g15(r.lambda_j),
                (r.failed as u8).to_string(),
                r.flags.clone(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| DdlError::invalid(format!("cannot write records: {e}")))
    }

    pub fn report_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_report_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }
}

/// Jaccard distance between the index sets of the `k` smallest p-values.
/// Ties are broken by ascending index.
pub fn jaccard_topk(pvals_a: &[f64], pvals_b: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > pvals_a.len() || k > pvals_b.len() {
        return Err(DdlError::invalid("k must lie in 1..=len"));
    }
    let top = |p: &[f64]| {
        let mut idx: Vec<usize> = (0..p.len()).collect();
        idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
        let mut set = idx[..k].to_vec();
        set.sort_unstable();
        set
    };
    let (a, b) = (top(pvals_a), top(pvals_b));
    let common = a.iter().filter(|i| b.binary_search(i).is_ok()).count();
    let union = 2 * k - common;
    Ok(1.0 - common as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddl::Tuning;

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard_topk(&[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3], 2).unwrap(), 0.0);
        assert_eq!(jaccard_topk(&[0.1, 0.2, 0.9, 0.8], &[0.9, 0.8, 0.1, 0.2], 2).unwrap(), 1.0);
        let d = jaccard_topk(&[0.01, 0.02, 0.9], &[0.9, 0.01, 0.02], 2).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-15);
        // Tie between indices 1 and 2: the lower index wins.
        assert_eq!(jaccard_topk(&[0.0, 0.5, 0.5], &[0.0, 0.5, 0.9], 2).unwrap(), 0.0);
        assert!(jaccard_topk(&[0.1], &[0.1], 0).is_err());
        assert!(jaccard_topk(&[0.1], &[0.1], 2).is_err());
    }

    fn small() -> (Scenario, DdlConfig<f64>) {
        let sc = Scenario {
            n: 60,
            p: 40,
            ..Scenario::default()
        };
        let cfg = DdlConfig {
            tuning: Tuning::Fixed {
                lambda: 0.1,
                lambda_j: 0.1,
            },
            ..DdlConfig::default()
        };
        (sc, cfg)
    }

    #[test]
    fn bias_terms_vanish_for_exact_inputs() {
        let (sc, cfg) = small();
        let data = sample_dataset(&sc, 3).unwrap();
        let centred = CenteredData::new(&data.x, &data.y).unwrap();
        let proj = projection_direction(&centred.x, 0, &cfg).unwrap();
        let t = &data.truth;
        let (bb, _) = scaled_bias_terms(&centred.x, &t.beta, &proj, &t.beta, &t.b, 1.0).unwrap();
        assert_eq!(bb, 0.0);
        let zero = DVector::zeros(sc.p);
        let (_, b_b) = scaled_bias_terms(&centred.x, &zero, &proj, &t.beta, &zero, 1.0).unwrap();
        assert_eq!(b_b, 0.0);
    }

    #[test]
    fn replications_are_reproducible_and_decompose() {
        let (sc, cfg) = small();
        let a = run_replication_methods(&sc, &Method::ALL, &cfg, 17, 0, 0);
        let b = run_replication_methods(&sc, &Method::ALL, &cfg, 17, 0, 0);
        assert_eq!(a, b);
        for r in &a {
            assert!(!r.failed, "{r:?}");
            assert_eq!(r.covered, r.ci_low <= r.beta_true && r.beta_true <= r.ci_high);
            let resid = r.beta_hat - r.beta_true - r.v_true.sqrt() * (r.b_beta + r.b_b) - r.noise_term;
            assert!(resid.abs() < 1e-10, "{resid}");
        }
    }

    #[test]
    fn single_cell_grid_matches_replication() {
        let (sc, cfg) = small();
        let spec = GridSpec {
            axis: "n".into(),
            cells: vec![GridCell {
                axis_value: 60.0,
                scenario: sc.clone(),
                config: cfg.clone(),
            }],
            methods: vec![Method::Ddl],
            reps: 1,
        };
        let report = run_grid(&spec, 9, 1).unwrap();
        let direct = run_replication(&sc, Method::Ddl, &cfg, replication_seed(9, 0, 0));
        assert_eq!(report.records, vec![direct]);
        let s = report.summary(0, Method::Ddl).unwrap();
        assert_eq!(s.replications, 1);
        assert!(s.coverage == 0.0 || s.coverage == 1.0);
    }

    #[test]
    fn report_is_independent_of_workers() {
        let (sc, cfg) = small();
        let spec = GridSpec {
            axis: "p".into(),
            cells: vec![
                GridCell { axis_value: 40.0, scenario: sc.clone(), config: cfg.clone() },
                GridCell { axis_value: 50.0, scenario: Scenario { p: 50, ..sc }, config: cfg },
            ],
            methods: Method::ALL.to_vec(),
            reps: 3,
        };
        let one = run_grid(&spec, 1, 1).unwrap();
        let three = run_grid(&spec, 1, 3).unwrap();
        assert_eq!(one.report_csv_string(), three.report_csv_string());
        let text = one.report_csv_string();
        assert!(text.starts_with("scenario_axis,axis_value,method,metric,value\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 3 * 7);
    }

    #[test]
    fn rejects_empty_grids() {
        let (sc, cfg) = small();
        let spec = GridSpec {
            axis: "n".into(),
            cells: vec![GridCell { axis_value: 1.0, scenario: sc, config: cfg }],
            methods: vec![Method::Ddl],
            reps: 0,
        };
        assert!(run_grid(&spec, 0, 1).is_err());
    }
}
