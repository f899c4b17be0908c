use std::path::{Path, PathBuf};

use ddl_core::bench::run_grid;
use ddl_core::spectral::{check_p1, singular_spectrum, trim_count, P1Limits, SpectralTransform};
use ddl_core::{fit, DdlConfig, DdlResult};
use log::{info, warn};
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};
use crate::options::{read_json, EstimatorFlags, SimulateConfig};
use crate::table::{create_file, ensure_dir, write_all, Cell, CsvOut, Table};

const ESTIMATE_COLUMNS: [&str; 10] = [
    "target", "beta_hat", "std_err", "ci_low", "ci_high", "p_value", "sigma_e2_hat", "lambda", "lambda_j", "flags",
];

pub struct FitArgs {
    pub input: PathBuf,
    pub response: String,
    pub targets: String,
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub workers: usize,
    pub estimator: EstimatorFlags,
}

fn worker_pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Input(format!("cannot start {workers} workers: {e}")))
}

fn has_zero_variance(column: nalgebra::DVectorView<'_, f64>) -> bool {
    let first = column[0];
    column.iter().all(|&v| v == first)
}

/// Resolves `--targets`: `all` or comma-separated column names.
fn resolve_targets(spec: &str, names: &[String]) -> CliResult<Vec<String>> {
    if spec.trim() == "all" {
        return Ok(names.to_vec());
    }
    let wanted: Vec<String> = spec.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if wanted.is_empty() {
        return Err(CliError::input("--targets names no columns"));
    }
    for name in &wanted {
        if !names.contains(name) {
            return Err(CliError::input(format!("target column {name:?} not found")));
        }
    }
    Ok(wanted)
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    let mut config: DdlConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => DdlConfig::default(),
    };
    args.estimator.apply(&mut config);
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;

    let table = Table::read(&args.input)?;
    let (names, x_all, y) = table.split_response(Some(&args.response))?;
    let y = y.expect("response requested");
    let targets = resolve_targets(&args.targets, &names)?;

    let mut kept = Vec::new();
    for (k, name) in names.iter().enumerate() {
        if has_zero_variance(x_all.column(k)) {
            warn!("dropping column {name:?}: zero variance");
        } else {
            kept.push(k);
        }
    }
    let kept_names: Vec<&String> = kept.iter().map(|&k| &names[k]).collect();
    let x = x_all.select_columns(&kept);

    let fit_targets: Vec<usize> = targets
        .iter()
        .filter_map(|t| kept_names.iter().position(|n| *n == t))
        .collect();
    let results: Vec<DdlResult> = if fit_targets.is_empty() {
        Vec::new()
    } else {
        worker_pool(args.workers)?.install(|| fit(&x, &y, &fit_targets, &config))?
    };

    ensure_dir(&args.out_dir)?;
    let path = args.out_dir.join("estimates.csv");
    let mut out = CsvOut::create(&path, &ESTIMATE_COLUMNS)?;
    let mut ok = 0;
    let mut by_target = results.iter();
    for name in &targets {
        if !kept_names.contains(&name) {
            let nan = Cell::Num(f64::NAN);
            out.row(&[
                Cell::Text(name), nan, Cell::Num(f64::NAN), Cell::Num(f64::NAN), Cell::Num(f64::NAN),
                Cell::Num(f64::NAN), Cell::Num(f64::NAN), Cell::Num(f64::NAN), Cell::Num(f64::NAN),
                Cell::Text("zero_variance_column"),
            ])?;
            continue;
        }
        let r = by_target.next().expect("one result per fitted target");
        ok += usize::from(r.is_ok());
        let flags = r.flags.join(";");
        out.row(&[
            Cell::Text(name),
            Cell::Num(r.beta_hat),
            Cell::Num(r.std_err),
            Cell::Num(r.ci_low),
            Cell::Num(r.ci_high),
            Cell::Num(r.p_value),
            Cell::Num(r.sigma_e2_hat),
            Cell::Num(r.lambda),
            Cell::Num(r.lambda_j),
            Cell::Text(&flags),
        ])?;
    }
    out.finish()?;
    info!("wrote {}", path.display());
    if ok == 0 {
        return Err(CliError::AllDegenerate);
    }
    Ok(())
}

pub struct SimulateArgs {
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub workers: usize,
    pub estimator: EstimatorFlags,
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut cfg: SimulateConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => SimulateConfig::default(),
    };
    args.estimator.apply(&mut cfg.ddl);
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = args.reps {
        cfg.reps = reps;
    }
    let grid = cfg.grid()?;
    info!(
        "simulating {} cell(s) x {} replication(s) on {} worker(s)",
        grid.cells.len(),
        grid.reps,
        args.workers
    );
    let report = run_grid(&grid, cfg.seed, args.workers)?;

    ensure_dir(&args.out_dir)?;
    for (name, records) in [("report.csv", false), ("records.csv", true)] {
        let path = args.out_dir.join(name);
        let mut buf = Vec::new();
        if records {
            report.write_records_csv(&mut buf)?;
        } else {
            report.write_report_csv(&mut buf)?;
        }
        write_all(create_file(&path)?, &buf, &path)?;
        info!("wrote {}", path.display());
    }
    for s in &report.summaries {
        println!(
            "{}={} {}: coverage {:.3} over {} replication(s), {} failed",
            report.axis,
            s.axis_value,
            s.method.name(),
            s.coverage,
            s.replications - s.failures,
            s.failures
        );
    }
    Ok(())
}

pub struct DiagnoseArgs {
    pub input: PathBuf,
    pub response: Option<String>,
    pub rho: f64,
    pub out_dir: PathBuf,
}

fn centre_columns(x: &mut DMatrix<f64>) {
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> CliResult<()> {
    if !(0.0..=1.0).contains(&args.rho) {
        return Err(CliError::input(format!("--rho must lie in [0, 1], got {}", args.rho)));
    }
    let table = Table::read(&args.input)?;
    let (_, mut x, _) = table.split_response(args.response.as_deref())?;
    centre_columns(&mut x);
    let spectrum = singular_spectrum(&x, Some(args.rho))?;
    let m = spectrum.values.len();
    let transform = SpectralTransform::trim_of(&x, args.rho)?;
    let limits = P1Limits {
        min_trace4_ratio: 1.0 - args.rho,
        ..P1Limits::default()
    };
    let p1 = check_p1(&transform, &x, &limits)?;

    ensure_dir(&args.out_dir)?;
    let path = args.out_dir.join("spectrum.csv");
    let mut out = CsvOut::create(&path, &["index", "singular_value"])?;
    for (i, v) in spectrum.values.iter().enumerate() {
        out.row(&[Cell::Int(i + 1), Cell::Num(*v)])?;
    }
    out.finish()?;

    let block: Vec<(&str, f64)> = vec![
        ("n", x.nrows() as f64),
        ("p", x.ncols() as f64),
        ("rho", args.rho),
        ("trimmed", trim_count(args.rho, m) as f64),
        ("threshold", spectrum.quantile.map_or(f64::NAN, |(_, v)| v)),
        ("spike_ratio", spectrum.spike_ratio().unwrap_or(f64::NAN)),
        ("op_norm_ratio", p1.op_norm_ratio),
        ("trace2", p1.trace2),
        ("trace4", p1.trace4),
        ("trace4_ratio", p1.trace4_ratio),
        ("min_trace4_ratio", limits.min_trace4_ratio),
        ("max_op_norm_ratio", limits.max_op_norm_ratio),
        ("violated", if p1.violated { 1.0 } else { 0.0 }),
    ];
    write_block(&args.out_dir.join("p1.csv"), &block)?;
    println!("spectral diagnostics (rho = {})", args.rho);
    for (k, v) in &block {
        println!("  {k:<18} {}", ddl_core::format::g15(*v));
    }
    Ok(())
}

fn write_block(path: &Path, block: &[(&str, f64)]) -> CliResult<()> {
    let mut out = CsvOut::create(path, &["metric", "value"])?;
    for (k, v) in block {
        out.row(&[Cell::Text(k), Cell::Num(*v)])?;
    }
    out.finish()
}
