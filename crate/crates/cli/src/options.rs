//! Parsers for the compact flag syntaxes and the JSON run configurations.

use ddl_core::bench::{GridCell, GridSpec, Method};
use ddl_core::simgen::{CovarianceKind, LoadingKind, Scenario};
use ddl_core::{DdlConfig, TransformChoice, Tuning};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// `trim`, `identity` or `pca:K`.
pub fn parse_transform(s: &str) -> Result<TransformChoice, String> {
    match s.split_once(':') {
        None if s == "trim" => Ok(TransformChoice::Trim),
        None if s == "identity" => Ok(TransformChoice::Identity),
        Some(("pca", k)) => k
            .parse()
            .map(TransformChoice::PcaAdjust)
            .map_err(|_| format!("bad factor count in {s:?}")),
        _ => Err(format!("unknown transform {s:?}; expected trim, identity or pca:K")),
    }
}

/// `cv`, `theory:A:sigmaE:sigmaJ` or `fixed:LAMBDA:LAMBDA_J`.
pub fn parse_tuning(s: &str) -> Result<Tuning<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums = |xs: &[&str]| -> Result<Vec<f64>, String> {
        xs.iter()
            .map(|x| x.parse::<f64>().map_err(|_| format!("bad number {x:?} in {s:?}")))
            .collect()
    };
    match parts.as_slice() {
        ["cv"] => Ok(Tuning::CrossValidation),
        ["theory", rest @ ..] if rest.len() == 3 => {
            let v = nums(rest)?;
            Ok(Tuning::Theoretical {
                a: v[0],
                sigma_e: v[1],
                sigma_j: v[2],
            })
        }
        ["fixed", rest @ ..] if rest.len() == 2 => {
            let v = nums(rest)?;
            Ok(Tuning::Fixed {
                lambda: v[0],
                lambda_j: v[1],
            })
        }
        _ => Err(format!(
            "unknown tuning {s:?}; expected cv, theory:A:sigmaE:sigmaJ or fixed:L:LJ"
        )),
    }
}

/// Estimator settings that may be given on the command line.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct EstimatorFlags {
    /// Trim level of the initial transform.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Trim level of the nuisance transforms.
    #[arg(long = "rho-j")]
    pub rho_j: Option<f64>,
    /// Confidence intervals have level 1 - alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// trim | identity | pca:K (applied to both transforms).
    #[arg(long, value_parser = parse_transform)]
    pub transform: Option<TransformChoice>,
    /// cv | theory:A:sigmaE:sigmaJ | fixed:L:LJ.
    #[arg(long, value_parser = parse_tuning)]
    pub tuning: Option<Tuning<f64>>,
}

impl EstimatorFlags {
    pub fn apply(&self, cfg: &mut DdlConfig) {
        if let Some(v) = self.rho {
            cfg.rho = v;
        }
        if let Some(v) = self.rho_j {
            cfg.rho_j = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(t) = self.transform {
            *cfg = cfg.with_transforms(t);
        }
        if let Some(t) = self.tuning {
            cfg.tuning = t;
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &std::path::Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    N,
    P,
    Q,
    /// Correlation parameter of a Toeplitz (default) or equicorrelated `Σ_E`.
    Kappa,
    /// Share of nonzero loadings per row.
    Sparsity,
    /// Decay exponent of the loadings.
    Decay,
    SigmaE,
    Rho,
    RhoJ,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::N => "n",
            Axis::P => "p",
            Axis::Q => "q",
            Axis::Kappa => "kappa",
            Axis::Sparsity => "sparsity",
            Axis::Decay => "decay",
            Axis::SigmaE => "sigma_e",
            Axis::Rho => "rho",
            Axis::RhoJ => "rho_j",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<f64>,
}

/// JSON configuration of `simulate`: a base scenario and estimator, and an optional one-axis sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: Scenario,
    pub ddl: DdlConfig,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub seed: u64,
    pub sweep: Option<Sweep>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            ddl: DdlConfig::default(),
            methods: Method::ALL.to_vec(),
            reps: 300,
            seed: 0,
            sweep: None,
        }
    }
}

fn as_count(axis: Axis, v: f64) -> CliResult<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(CliError::input(format!("{} must be a non-negative integer, got {v}", axis.name())))
    }
}

impl SimulateConfig {
    pub fn grid(&self) -> CliResult<GridSpec> {
        let cells = match &self.sweep {
            None => vec![GridCell {
                axis_value: 0.0,
                scenario: self.scenario.clone(),
                config: self.ddl.clone(),
            }],
            Some(sweep) => {
                if sweep.values.is_empty() {
                    return Err(CliError::input("sweep.values is empty"));
                }
                sweep
                    .values
                    .iter()
                    .map(|&v| self.cell(sweep.axis, v))
                    .collect::<CliResult<_>>()?
            }
        };
        let spec = GridSpec {
            axis: self.sweep.as_ref().map_or("none", |s| s.axis.name()).to_string(),
            cells,
            methods: self.methods.clone(),
            reps: self.reps,
        };
        if spec.reps == 0 {
            return Err(CliError::input("reps must be at least 1"));
        }
        if spec.methods.is_empty() {
            return Err(CliError::input("methods is empty"));
        }
        for cell in &spec.cells {
            cell.scenario.validate()?;
            cell.config.validate()?;
        }
        Ok(spec)
    }

    fn cell(&self, axis: Axis, v: f64) -> CliResult<GridCell> {
        let mut scenario = self.scenario.clone();
        let mut config = self.ddl.clone();
        match axis {
            Axis::N => scenario.n = as_count(axis, v)?,
            Axis::P => scenario.p = as_count(axis, v)?,
            Axis::Q => scenario.q = as_count(axis, v)?,
            Axis::Kappa => {
                scenario.cov_e = match scenario.cov_e {
                    CovarianceKind::Equicorrelation(_) => CovarianceKind::Equicorrelation(v),
                    _ => CovarianceKind::Toeplitz(v),
                }
            }
            Axis::Sparsity => scenario.loadings = LoadingKind::SparseProportion(v),
            Axis::Decay => scenario.loadings = LoadingKind::Decay(v),
            Axis::SigmaE => scenario.sigma_e = v,
            Axis::Rho => config.rho = v,
            Axis::RhoJ => config.rho_j = v,
        }
        Ok(GridCell {
            axis_value: v,
            scenario,
            config,
        })
    }
}
