//! Command-line driver: config loading, run orchestration and artifacts.
//!
//! Exit codes: 0 every gating check passed, 1 a gating check failed,
//! 2 usage or config error, 3 runtime failure.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use artifacts::{sha256_hex, unix_now, CheckEntry, RunManifest};
use config::RunConfig;

/// Environment variable that takes precedence over `--out`.
pub const OUT_ENV: &str = "GRAVLAB_OUT";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Runtime(_) | CliError::Io { .. } => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gravlab", version, about = "Deep-water gravity wave simulator and verification workbench")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; GRAVLAB_OUT takes precedence.
    #[arg(long, global = true, default_value = "gravlab-out")]
    pub out: PathBuf,
    /// Seed for Monte-Carlo sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for parallel norm and sampling work.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Evolve the configured initial data and write states, diagnostics and a manifest.
    Simulate {
        /// Continue an interrupted run in the output directory from its last snapshot.
        #[arg(long)]
        resume: bool,
    },
    /// Compare both DN evaluators with the strip oracle and measure the ε-scaling.
    DnCheck,
    /// Check the normal-form symbol system, the empirical symbol constants and the phase bounds.
    SymbolsVerify,
    /// Decay fit, scattering-phase and stationary-phase diagnostics of a packet run.
    ScatterDiag,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::DnCheck => "dn-check",
            Command::SymbolsVerify => "symbols-verify",
            Command::ScatterDiag => "scatter-diag",
        }
    }
}

/// Everything a command needs.
pub struct Context {
    pub cfg: RunConfig,
    pub config_path: PathBuf,
    pub digest: String,
    pub out: PathBuf,
    pub seed: u64,
}

/// What a command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<CheckEntry>,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.gating)
    }
}

fn load(args: &Args, env_out: Option<PathBuf>) -> Result<Context, CliError> {
    let config_path = args.config.clone().ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let bytes = std::fs::read(&config_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| CliError::Config(format!("{} is not UTF-8", config_path.display())))?;
    let cfg = RunConfig::parse(text)?;
    let out = env_out.filter(|p| !p.as_os_str().is_empty()).unwrap_or_else(|| args.out.clone());
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    Ok(Context { cfg, config_path, digest: sha256_hex(&bytes), out, seed: args.seed })
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    match threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            // A pool built earlier in this process keeps its size.
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("warning: --threads ignored: {e}");
            }
            Ok(())
        }
        None => Ok(()),
    }
}

/// Runs one command and returns the process exit code. `env_out` is the
/// value of GRAVLAB_OUT, if set.
pub fn run(args: &Args, env_out: Option<PathBuf>) -> i32 {
    let started = unix_now();
    if let Err(e) = configure_threads(args.threads) {
        eprintln!("{e}");
        return e.exit_code();
    }
    let ctx = match load(args, env_out) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    let result = match args.command {
        Command::Simulate { resume } => commands::simulate(&ctx, resume),
        Command::DnCheck => commands::dn_check(&ctx),
        Command::SymbolsVerify => commands::symbols_verify(&ctx),
        Command::ScatterDiag => commands::scatter_diag(&ctx),
    };
    let mut manifest = RunManifest {
        command: args.command.name().into(),
        config_path: ctx.config_path.clone(),
        config_digest: ctx.digest.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        started_unix: started,
        finished_unix: 0.0,
        outputs: Vec::new(),
        checks: Vec::new(),
        status: String::new(),
        error: None,
        warnings: Vec::new(),
    };
    let code = match result {
        Ok(outcome) => {
            let passed = outcome.passed();
            for c in &outcome.checks {
                let mark = if c.passed { "PASS" } else { "FAIL" };
                let kind = if c.gating { "" } else { " (informational)" };
                println!("{mark} {}: {:.6e} [{}]{kind}", c.name, c.value, c.threshold);
            }
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            manifest.status = if passed { "pass" } else { "check_failed" }.into();
            manifest.outputs = outcome.outputs;
            manifest.checks = outcome.checks;
            manifest.warnings = outcome.warnings;
            if passed {
                EXIT_PASS
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("{e}");
            manifest.status = "error".into();
            manifest.error = Some(e.to_string());
            e.exit_code()
        }
    };
    manifest.finished_unix = unix_now();
    if let Err(e) = manifest.write(&ctx.out) {
        eprintln!("{e}");
        return EXIT_RUNTIME;
    }
    code
}

/// Parses the process arguments and runs; clap usage errors exit with 2.
pub fn main_with_env() -> i32 {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    run(&args, std::env::var_os(OUT_ENV).map(PathBuf::from))
}
