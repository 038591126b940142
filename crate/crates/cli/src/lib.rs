//! Experiment harness for the `opendyn` toolkit: config parsing, subcommand
//! dispatch and checksummed report directories.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{ExperimentConfig, Settings};

/// Environment variable naming the report root.
pub const REPORT_ROOT_ENV: &str = "OPENDYN_REPORT_ROOT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numeric(#[from] opendyn::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "opendyn", version, about = "Open interval maps: pressure, escape rates, inducing, dimension and zero-hole limits")]
pub struct Cli {
    /// TOML config, or the manifest.json of an earlier run to replay it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Report directory (default: $OPENDYN_REPORT_ROOT/<subcommand> or ./reports/<subcommand>)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: logical cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress the summary table
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pressure p_t, conformal measure and equilibrium state
    Pressure(ExperimentConfig),
    /// Escape rate by spectral, direct-fit and Monte Carlo estimators
    Escape(ExperimentConfig),
    /// Convergence of normalized punctured pushforwards
    Converge(ExperimentConfig),
    /// First-return inducing scheme with tail and distortion reports
    Induce(ExperimentConfig),
    /// Root of the punctured pressure and box dimension of the survivor set
    Bowen(ExperimentConfig),
    /// Escape rate over hole measure for shrinking holes
    Zerohole(ExperimentConfig),
    /// Spectral pressure gap against the exact subshift oracle
    Variational(ExperimentConfig),
    /// Finite-horizon checks of the map and hole conditions
    CheckConditions(ExperimentConfig),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Pressure(_) => "pressure",
            Command::Escape(_) => "escape",
            Command::Converge(_) => "converge",
            Command::Induce(_) => "induce",
            Command::Bowen(_) => "bowen",
            Command::Zerohole(_) => "zerohole",
            Command::Variational(_) => "variational",
            Command::CheckConditions(_) => "check-conditions",
        }
    }

    fn flags(&self) -> &ExperimentConfig {
        match self {
            Command::Pressure(c)
            | Command::Escape(c)
            | Command::Converge(c)
            | Command::Induce(c)
            | Command::Bowen(c)
            | Command::Zerohole(c)
            | Command::Variational(c)
            | Command::CheckConditions(c) => c,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub version: String,
    pub config: Settings,
    pub outputs: Vec<OutputEntry>,
    pub wall_clock_seconds: f64,
}

/// A finished run.
#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub summary: Vec<(String, String)>,
}

fn report_dir(cli: &Cli) -> PathBuf {
    if let Some(out) = &cli.out {
        return out.clone();
    }
    let root = std::env::var_os(REPORT_ROOT_ENV).map_or_else(|| PathBuf::from("reports"), PathBuf::from);
    root.join(cli.command.name())
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Resolves the config, runs the subcommand and writes its report directory.
pub fn run(cli: &Cli) -> Result<RunOutcome, CliError> {
    let cmd = cli.command.name();
    let (file_cfg, base_dir) = match &cli.config {
        Some(path) => {
            let (cfg, recorded) = ExperimentConfig::load(path)?;
            if let Some(recorded) = recorded {
                if recorded != cmd {
                    return Err(CliError::Config(format!(
                        "manifest {} records subcommand `{recorded}`, not `{cmd}`",
                        path.display()
                    )));
                }
            }
            (cfg, path.parent().map(Path::to_path_buf))
        }
        None => (ExperimentConfig::default(), None),
    };
    let merged = file_cfg.overlay(cli.command.flags());
    let settings = Settings::resolve(cmd, &merged, base_dir)?;
    let dir = report_dir(cli);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;

    let start = Instant::now();
    let output = commands::execute(cmd, &settings)?;
    let wall = start.elapsed().as_secs_f64();

    let mut outputs = Vec::with_capacity(output.files.len());
    for (name, bytes) in &output.files {
        write_file(&dir, name, bytes)?;
        outputs.push(OutputEntry {
            file: name.clone(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
    }
    let manifest = Manifest {
        subcommand: cmd.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: settings,
        outputs,
        wall_clock_seconds: wall,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("serializable manifest");
    bytes.push(b'\n');
    write_file(&dir, "manifest.json", &bytes)?;
    Ok(RunOutcome {
        dir,
        manifest,
        summary: output.summary,
    })
}

/// Prints the summary table of a run.
pub fn print_summary<W: Write>(mut w: W, outcome: &RunOutcome) -> std::io::Result<()> {
    let width = outcome.summary.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    writeln!(w, "opendyn {} ({})", outcome.manifest.subcommand, outcome.manifest.config.map)?;
    for (k, v) in &outcome.summary {
        writeln!(w, "  {k:<width$}  {v}")?;
    }
    writeln!(w, "  {:<width$}  {}", "report", outcome.dir.display())?;
    Ok(())
}

/// Parses `args`, runs, prints, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("config error: --threads must be positive");
            return 2;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match run(&cli) {
        Ok(outcome) => {
            if !cli.quiet {
                let _ = print_summary(std::io::stdout().lock(), &outcome);
            }
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
