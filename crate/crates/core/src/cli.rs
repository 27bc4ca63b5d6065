//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::experiment::{run_experiment, summary_table, write_outputs, DatasetSource, ExperimentConfig};
use crate::harness::BaselineSpec;
use crate::local::Algorithm;
use crate::merge::ConstraintMode;

#[derive(Debug, Parser)]
#[command(name = "vbdc", version, about = "Variance-constrained distributed clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its outputs.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Synthetic3,
    Iris,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Kmeans,
    Khm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConstraintArg {
    Normalized,
    Raw,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    sites: Option<usize>,
    /// One value for every site, or one value per site.
    #[arg(long = "local-k", num_args = 1..)]
    local_k: Vec<usize>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "sigma-factor")]
    sigma_factor: Option<f64>,
    #[arg(long = "border-fraction")]
    border_fraction: Option<f64>,
    #[arg(long, value_enum)]
    constraint: Option<ConstraintArg>,
    /// k of the centralized comparison run.
    #[arg(long = "baseline-k")]
    baseline_k: Option<usize>,
    /// Site that gathers the summaries.
    #[arg(long = "merge-site")]
    merge_site: Option<usize>,
    /// Output directory (default: vbdc-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

/// Parses `args` (program name first), runs, and returns the exit code:
/// 0 on success, 2 on bad usage or configuration, 1 on runtime failure.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    let Command::Run(args) = cli.command;
    match execute(args, stdout) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            let _ = writeln!(stderr, "usage: vbdc run --config <path> | --preset <synthetic3|iris> [options]");
            2
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            1
        }
    }
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let seed = args.seed.unwrap_or(0);
    let mut cfg = match (&args.config, args.preset) {
        (Some(path), _) => {
            if !path.exists() {
                return Err(Failure::Usage(format!("config file not found: {}", path.display())));
            }
            let mut cfg = ExperimentConfig::from_json_file(path).map_err(|e| match e {
                Error::Io { .. } => Failure::Usage(e.to_string()),
                other => Failure::Usage(format!("{}: {other}", path.display())),
            })?;
            if let Some(s) = args.seed {
                cfg.reseed(s);
            }
            cfg
        }
        (None, Some(Preset::Synthetic3)) => ExperimentConfig::synthetic3(seed),
        (None, Some(Preset::Iris)) => ExperimentConfig::iris(seed),
        (None, None) => return Err(Failure::Usage("one of --config or --preset is required".into())),
    };

    if let Some(sites) = args.sites {
        if sites == 0 {
            return Err(Failure::Usage("--sites must be at least 1".into()));
        }
        cfg.resize_sites(sites);
    }
    match args.local_k.len() {
        0 => {}
        1 => cfg.local.iter_mut().for_each(|l| l.k = args.local_k[0]),
        n if n == cfg.sites => {
            for (l, &k) in cfg.local.iter_mut().zip(&args.local_k) {
                l.k = k;
            }
        }
        n => {
            return Err(Failure::Usage(format!(
                "--local-k takes 1 or {} values, got {n}",
                cfg.sites
            )))
        }
    }
    if let Some(a) = args.algorithm {
        let algorithm = match a {
            AlgorithmArg::Kmeans => Algorithm::Kmeans,
            AlgorithmArg::Khm => Algorithm::Khm,
        };
        cfg.local.iter_mut().for_each(|l| l.algorithm = algorithm);
    }
    if let Some(f) = args.sigma_factor {
        cfg.merge.sigma_factor = f;
    }
    if let Some(f) = args.border_fraction {
        cfg.merge.border_fraction = f;
    }
    if let Some(c) = args.constraint {
        cfg.merge.constraint_mode = match c {
            ConstraintArg::Normalized => ConstraintMode::NormalizedVariance,
            ConstraintArg::Raw => ConstraintMode::RawSse,
        };
    }
    if let Some(k) = args.baseline_k {
        let algorithm = cfg.local[0].algorithm;
        cfg.baseline = Some(BaselineSpec { k, algorithm });
    }
    if let Some(m) = args.merge_site {
        cfg.merging_site = m;
    }
    if cfg.merging_site >= cfg.sites {
        return Err(Failure::Usage(format!(
            "--merge-site {} is out of range for {} sites",
            cfg.merging_site, cfg.sites
        )));
    }
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    if let DatasetSource::Csv { path, .. } = &cfg.dataset {
        if !path.exists() {
            return Err(Failure::Usage(format!("input file not found: {}", path.display())));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(args: RunArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let cfg = build_config(&args)?;
    let out = run_experiment(&cfg)?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("vbdc-out"));
    write_outputs(&out, &dir)?;
    let _ = write!(stdout, "{}", summary_table(&out.result));
    let _ = writeln!(stdout, "{:<28}{}", "outputs", dir.display());
    for w in &out.result.warnings {
        let _ = writeln!(stdout, "warning: {w}");
    }
    Ok(())
}
