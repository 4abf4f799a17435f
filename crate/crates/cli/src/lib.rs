//! Command-line front end for the `kacbox` engine: one JSON config per run,
//! artifacts stamped with the run manifest's digest, and stable exit codes.

pub mod commands;
pub mod config;
pub mod output;
pub mod report;
pub mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use output::{RunManifest, Sink, FORMAT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] kacbox::Error),
    #[error("i/o error at {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("verification failed: {0}")]
    Failed(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    /// 0 success, 1 failed verification, 2 usage/parse, 3 configuration or
    /// ill-defined model, 4 capacity, 5 internal.
    pub fn exit_code(&self) -> i32 {
        use kacbox::Error as E;
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) | CliError::Parse(_) => 2,
            CliError::Config(_) => 3,
            CliError::Engine(E::Capacity(_)) => 4,
            CliError::Engine(E::Internal(_)) | CliError::Io { .. } | CliError::Internal(_) => 5,
            CliError::Engine(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kacbox", version, about = "Mean-field and lattice Monte Carlo analysis of Kac box models")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "kacbox-out")]
    pub out: PathBuf,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Double-tangent analysis, convex envelope and good regions.
    Meanfield,
    /// Particle free-energy tables and reference-system audits.
    Freeenergy,
    /// Metropolis sampling of one parameter set.
    Sample,
    /// Exact chessboard seminorms and inequality check.
    Chessboard,
    /// θ parameters across a list of γ.
    Thetas,
    /// Two-branch λ scan with checkpoints per grid point.
    Scan {
        /// Stop after this many newly computed grid points; rerun to resume.
        #[arg(long)]
        max_new_points: Option<usize>,
    },
    /// Property suites; exits 1 if any check fails.
    Verify,
    /// Plot-data bundle from earlier artifacts.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Meanfield => "meanfield",
            Command::Freeenergy => "freeenergy",
            Command::Sample => "sample",
            Command::Chessboard => "chessboard",
            Command::Thetas => "thetas",
            Command::Scan { .. } => "scan",
            Command::Verify => "verify",
            Command::Report => "report",
        }
    }
}

/// Parse a config document; syntax errors are parse errors (exit 2),
/// well-formed documents of the wrong shape are configuration errors.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => CliError::Config(e.to_string()),
        _ => CliError::Parse(e.to_string()),
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

/// Run one parsed invocation.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let (config, base) = match &cli.config {
        Some(p) => (load_config(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (RunConfig::default(), PathBuf::new()),
    };
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let manifest = RunManifest::new(cli.command.name(), seed, &cli.out, config);
    let sink = Sink::new(&cli.out, &manifest)?;
    let cfg = &manifest.config;
    match &cli.command {
        Command::Meanfield => commands::meanfield(cfg, &sink),
        Command::Freeenergy => commands::freeenergy(cfg, seed, &sink),
        Command::Sample => commands::sample(cfg, seed, &sink),
        Command::Chessboard => commands::chessboard(cfg, &sink),
        Command::Thetas => commands::thetas(cfg, &sink),
        Command::Scan { max_new_points } => commands::scan(cfg, seed, &sink, *max_new_points),
        Command::Verify => verify::run(cfg, seed, &sink),
        Command::Report => report::run(cfg, &base, &sink),
    }
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("kacbox {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
