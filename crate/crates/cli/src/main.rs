mod artifacts;
mod commands;
mod config;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "radial-nls", version, about = "Radial focusing cubic NLS laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the ground state and report its constants.
    GroundState,
    /// Run one evolution and write its run directory.
    Evolve,
    /// Run the [sweep] parameter grid and write manifest.csv.
    Sweep,
    /// Energy-evacuation scan over the [evacuation] horizons.
    Evacuation,
    /// Run the invariant suite.
    Verify,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Invariant(String),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Invariant(m) => write!(f, "invariant failure: {m}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<radial_nls::Error> for CliError {
    fn from(e: radial_nls::Error) -> Self {
        match e {
            radial_nls::Error::Config(m) => Self::Config(m),
            other => Self::Invariant(other.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            Self::Config(_) => ExitCode::from(64),
            Self::Invariant(_) => ExitCode::from(2),
            Self::Io(_) => ExitCode::from(74),
        }
    }
}

/// Prints to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn print_json(value: &impl serde::Serialize) {
    emit(&serde_json::to_string_pretty(value).expect("report serializes"));
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out: &Path = &cli.out;
    match cli.command {
        Command::GroundState => {
            config.validate()?;
            let report = commands::ground_state(&config, Some(out))?;
            print_json(&report);
            if !report.passes {
                eprintln!("ground-state invariants exceed tolerance");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Evolve => {
            let o = commands::evolve(&config, out)?;
            emit(&format!(
                "{} {:?} mass drift {:.2e} energy drift {:.2e}",
                o.dir.display(),
                o.summary.verdict.kind,
                o.summary.drift.mass,
                o.summary.drift.energy
            ));
        }
        Command::Sweep => {
            config.validate()?;
            let rows = commands::sweep(&config, out, cli.workers)?;
            for row in &rows {
                match &row.result {
                    Ok(p) => emit(&format!("{} = {}: {}", row.parameter.name(), row.value, p.verdict)),
                    Err(e) => emit(&format!("{} = {}: failed ({e})", row.parameter.name(), row.value)),
                }
            }
            emit(&out.join("manifest.csv").display().to_string());
        }
        Command::Evacuation => {
            let s = commands::evacuation(&config, out)?;
            print_json(&s);
        }
        Command::Verify => {
            let report = verify::verify(&config)?;
            for c in &report.checks {
                emit(&format!("{} {} {:.3e} (limit {:.1e})", if c.pass { "ok  " } else { "FAIL" }, c.name, c.value, c.limit));
            }
            std::fs::create_dir_all(out)?;
            artifacts::write_json(&out.join("verify.json"), &report)?;
            if !report.passes {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("radial-nls: {e}");
            e.exit_code()
        }
    }
}
