//! Command-line front end: parses experiment configs, orchestrates runs, and
//! writes CSV/JSON artifacts suitable for external plotting.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use gginf::error::Error;
use gginf::limitproc::{sample_cholesky, sample_sheet, CovKernel, SheetDiscretization};
use gginf::mc::{
    compare_dependence, covariance_report, renewal_clt_diagnostic, run_experiment,
    CovarianceReport, ExperimentConfig,
};
use gginf::models::{DependenceSpec, ModelConfig};

#[derive(Parser)]
#[command(name = "gginf", version, about = "Monte Carlo laboratory for the \
busy-server process of a G/G/infinity queue with heavy-tailed service times")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if absent.
    #[arg(long)]
    out: PathBuf,
    /// Override the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Allow writing into a nonempty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run queue replications and score the centered statistic.
    Simulate(CommonArgs),
    /// Sample the limit Gaussian process directly.
    LimitSample(CommonArgs),
    /// Run the same experiment under a sweep of dependence couplings.
    Compare(CommonArgs),
    /// Renewal-count variance diagnostic.
    RenewalCheck(CommonArgs),
}

/// Configuration for `limit-sample`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct LimitSampleConfig {
    beta: f64,
    grid: Vec<f64>,
    /// "cholesky" | "sheet" | "both"
    method: String,
    n_samples: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    discretization: DiscretizationToml,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct DiscretizationToml {
    x_cells: Option<usize>,
    z_cells: Option<usize>,
    z_split: Option<f64>,
    geometric_ratio: Option<f64>,
}

impl DiscretizationToml {
    fn resolve(&self) -> SheetDiscretization {
        let mut d = SheetDiscretization::default();
        if let Some(v) = self.x_cells {
            d.x_cells = v;
        }
        if let Some(v) = self.z_cells {
            d.z_cells = v;
        }
        if self.z_split.is_some() {
            d.z_split = self.z_split;
        }
        if let Some(v) = self.geometric_ratio {
            d.geometric_ratio = v;
        }
        d
    }
}

/// Configuration for `compare`: a base experiment plus a coupling sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CompareConfig {
    #[serde(flatten)]
    base: ExperimentConfig,
    couplings: Vec<DependenceSpec>,
}

/// Configuration for `renewal-check`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RenewalConfig {
    model: ModelConfig,
    t: f64,
    replications: usize,
    #[serde(default)]
    seed: u64,
}

fn verbosity() -> u8 {
    match std::env::var("GGINF_LOG").ok().as_deref() {
        Some("debug") => 2,
        Some("info") => 1,
        Some("quiet") | Some("off") => 0,
        _ => 1,
    }
}

fn log_info(msg: &str) {
    if verbosity() >= 1 {
        eprintln!("gginf: {msg}");
    }
}

fn log_debug(msg: &str) {
    if verbosity() >= 2 {
        eprintln!("gginf[debug]: {msg}");
    }
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::SheetBetaZero => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(format!("json serialization error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => with_setup(args, "simulate", cmd_simulate),
        Command::LimitSample(args) => with_setup(args, "limit-sample", cmd_limit_sample),
        Command::Compare(args) => with_setup(args, "compare", cmd_compare),
        Command::RenewalCheck(args) => with_setup(args, "renewal-check", cmd_renewal_check),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("gginf: error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("gginf: config error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn with_setup(
    args: &CommonArgs,
    subcommand: &str,
    run: fn(&CommonArgs, &str) -> Result<(), CliError>,
) -> Result<(), CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    prepare_out_dir(&args.out, args.force)?;
    run(args, subcommand)
}

fn prepare_out_dir(out: &Path, force: bool) -> Result<(), CliError> {
    if out.exists() {
        let nonempty = fs::read_dir(out)?.next().is_some();
        if nonempty && !force {
            return Err(CliError::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                out.display()
            )));
        }
    } else {
        fs::create_dir_all(out)?;
    }
    Ok(())
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("malformed config {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    log_debug(&format!("wrote {}", path.display()));
    Ok(())
}

fn write_manifest<T: Serialize>(
    args: &CommonArgs,
    subcommand: &str,
    resolved_config: &T,
) -> Result<(), CliError> {
    let timestamp = SystemTime::now()
        .duration_since(SystemTime::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = serde_json::json!({
        "subcommand": subcommand,
        "config_path": args.config.display().to_string(),
        "output_dir": args.out.display().to_string(),
        "seed_override": args.seed,
        "threads": args.threads,
        "unix_timestamp": timestamp,
        "resolved_config": resolved_config,
    });
    write_json(&args.out.join("manifest.json"), &manifest)
}

fn cmd_simulate(args: &CommonArgs, subcommand: &str) -> Result<(), CliError> {
    let mut config: ExperimentConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    write_manifest(args, subcommand, &config)?;
    log_info(&format!(
        "simulate: {} replications at t = {}",
        config.replications, config.t
    ));
    let out = run_experiment(&config)?;
    for w in &out.warnings {
        eprintln!("gginf: warning: {w}");
    }

    let mut csv = String::from("replication_id,kind,u,value\n");
    let kind = serde_json::to_value(config.kind)?
        .as_str()
        .unwrap_or("unknown")
        .to_string();
    for (rep, row) in out.samples.iter().enumerate() {
        for (i, &u) in config.grid.iter().enumerate() {
            csv.push_str(&format!("{rep},{kind},{u},{}\n", row[i]));
        }
    }
    fs::write(args.out.join("replications.csv"), csv)?;

    let summary = serde_json::json!({
        "config_echo": config,
        "warnings": out.warnings,
        "covariance": out.covariance,
        "marginals": out.marginals,
    });
    write_json(&args.out.join("summary.json"), &summary)?;
    log_info(&format!(
        "max_abs_error = {:.5}, max_error_in_se_units = {:.3}",
        out.covariance.max_abs_error, out.covariance.max_error_in_se_units
    ));
    Ok(())
}

fn write_samples_csv(path: &Path, grid: &[f64], samples: &[Vec<f64>]) -> Result<(), CliError> {
    let mut csv = String::from("sample_id,u,value\n");
    for (id, row) in samples.iter().enumerate() {
        for (i, &u) in grid.iter().enumerate() {
            csv.push_str(&format!("{id},{u},{}\n", row[i]));
        }
    }
    fs::write(path, csv)?;
    Ok(())
}

fn cmd_limit_sample(args: &CommonArgs, subcommand: &str) -> Result<(), CliError> {
    let mut config: LimitSampleConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    write_manifest(args, subcommand, &config)?;
    let kernel = CovKernel::new(config.beta)?;
    let disc = config.discretization.resolve();

    let mut reports: Vec<(&str, CovarianceReport, Vec<Vec<f64>>)> = Vec::new();
    match config.method.as_str() {
        "cholesky" | "both" => {
            log_info("sampling via cholesky factorization");
            let samples = sample_cholesky(&kernel, &config.grid, config.n_samples, config.seed)?;
            let report = covariance_report(&samples, &config.grid, config.beta)?;
            reports.push(("cholesky", report, samples));
        }
        "sheet" => {}
        other => {
            return Err(CliError::Config(format!(
                "unknown method {other:?}; expected cholesky, sheet, or both"
            )))
        }
    }
    if config.method == "sheet" || config.method == "both" {
        log_info("sampling via the white-noise integral discretization");
        // offset the seed so the two methods draw independent noise
        let samples = sample_sheet(
            &kernel,
            &config.grid,
            &disc,
            config.n_samples,
            config.seed ^ 0x5348_4545_5400_0000,
        )?;
        let report = covariance_report(&samples, &config.grid, config.beta)?;
        reports.push(("sheet", report, samples));
    }

    for (name, _, samples) in &reports {
        let file = if reports.len() == 1 {
            "samples.csv".to_string()
        } else {
            format!("samples_{name}.csv")
        };
        write_samples_csv(&args.out.join(file), &config.grid, samples)?;
    }

    let cross_deltas: Option<Vec<Vec<f64>>> = (reports.len() == 2).then(|| {
        let a = &reports[0].1.empirical_cov;
        let b = &reports[1].1.empirical_cov;
        a.iter()
            .zip(b)
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x - y).collect())
            .collect()
    });
    let summary = serde_json::json!({
        "config_echo": config,
        "reports": reports
            .iter()
            .map(|(name, r, _)| serde_json::json!({ "method": name, "report": r }))
            .collect::<Vec<_>>(),
        "cross_method_cov_deltas": cross_deltas,
    });
    write_json(&args.out.join("covariance.json"), &summary)
}

fn cmd_compare(args: &CommonArgs, subcommand: &str) -> Result<(), CliError> {
    let mut config: CompareConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.base.seed = seed;
    }
    write_manifest(args, subcommand, &config)?;
    log_info(&format!("compare: {} couplings", config.couplings.len()));
    let results = compare_dependence(&config.base, &config.couplings)?;

    let mut csv = String::from("coupling,theta,max_abs_error,max_error_in_se_units\n");
    let mut reports = Vec::new();
    for (coupling, out) in &results {
        for w in &out.warnings {
            eprintln!("gginf: warning: {w}");
        }
        let name = match coupling {
            DependenceSpec::Independent => "independent",
            DependenceSpec::Comonotone => "comonotone",
            DependenceSpec::Antimonotone => "antimonotone",
            DependenceSpec::CommonShock { .. } => "common_shock",
        };
        let theta = coupling
            .theta()
            .map_or(String::new(), |t| t.to_string());
        csv.push_str(&format!(
            "{name},{theta},{},{}\n",
            out.covariance.max_abs_error, out.covariance.max_error_in_se_units
        ));
        reports.push(serde_json::json!({
            "coupling": coupling,
            "covariance": out.covariance,
            "marginals": out.marginals,
        }));
    }
    fs::write(args.out.join("compare.csv"), csv)?;
    let summary = serde_json::json!({
        "config_echo": config,
        "reports": reports,
    });
    write_json(&args.out.join("summary.json"), &summary)
}

fn cmd_renewal_check(args: &CommonArgs, subcommand: &str) -> Result<(), CliError> {
    let mut config: RenewalConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    write_manifest(args, subcommand, &config)?;
    let report = renewal_clt_diagnostic(&config.model, config.t, config.replications, config.seed)?;
    log_info(&format!(
        "renewal variance ratio {:.4} vs target {:.4}",
        report.empirical_ratio, report.target_ratio
    ));
    let summary = serde_json::json!({
        "config_echo": config,
        "report": report,
    });
    write_json(&args.out.join("renewal.json"), &summary)
}
