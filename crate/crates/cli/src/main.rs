mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] retention::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use retention::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(E::InvalidInput(_) | E::InvalidGeometry(_) | E::CoincidentAtoms(..)) => 2,
            CliError::Core(E::InfeasibleSeed { .. } | E::AllRunsFailed(..)) => 4,
            CliError::Core(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "retention", version, about = "Storage-atom retention in subwavelength atomic arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON). A manifest.json from an earlier run also works.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Eigendecomposition, residuals and mode weights of the storage state.
    Spectrum,
    /// Survival probability by mode sum and by direct integration.
    Dynamics,
    /// Constrained minimization of the surrogate cost.
    Optimize,
    /// Decay rates against integrated far-field patterns.
    Farfield,
    /// Robustness, correlation or seed-dependence study.
    Study,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Dynamics => "dynamics",
            Command::Optimize => "optimize",
            Command::Farfield => "farfield",
            Command::Study => "study",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config <file> is required".into()))?;
    let mut cfg = config::load(&path)?;
    let base_dir = path.parent().map(PathBuf::from).unwrap_or_default();
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    let seed = *cfg.seed.get_or_insert_with(rand::random);
    // inline file-based structures so the manifest is self-contained
    let array = cfg.structure.resolve(&base_dir)?;
    if cfg.structure.file.is_some() {
        cfg.structure = config::StructureConfig {
            array: Some(array.clone()),
            ..Default::default()
        };
    }
    let files = commands::execute(cli.command, &cfg, &array, seed)?;
    manifest::write(&cli.out, cli.command, &cfg, seed, &files)?;
    eprintln!("{}: wrote {} files to {}", cli.command.name(), files.len() + 1, cli.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
