use std::path::PathBuf;

use chrono::Utc;
use clap::{Parser, Subcommand};
use ionize_cli::commands::{self, Context};
use ionize_cli::manifest::{OutputDir, RunManifest};
use ionize_cli::{CliError, Config};
use serde_json::Value;

/// Ionization of a two-center point-interaction model under a periodic
/// coupling: charge dynamics, spectral checks and decay fits.
#[derive(Debug, Parser)]
#[command(name = "ionize", version)]
struct Cli {
    /// JSON configuration; defaults to the reference configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "ionize-out")]
    out: PathBuf,
    /// Seed for the stochastic cross-checks.
    #[arg(long, global = true, default_value_t = 20_240_601)]
    seed: u64,
    /// Worker threads; 0 lets rayon decide.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// March the charge equations and write charges.csv.
    SolveCharges,
    /// Survival amplitude of the bound state, survival.csv.
    Survival,
    /// Probability inside a ball and its running average, ionization.csv.
    Ionization,
    /// Solve the truncated lattice system at the configured points.
    SpectralSolve,
    /// Locate the real-axis pole of the static problem.
    FindPole,
    /// Residual of the shift-span test for the coupling profile.
    CheckGenericity,
    /// Fit the square-root branch of the central components at p = 0.
    BranchFit,
    /// Fit a power law to a column of a CSV written by another command.
    FitDecay {
        #[arg(long)]
        input: PathBuf,
    },
    /// Run every acceptance check and write acceptance.json.
    ValidateAll,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SolveCharges => "solve-charges",
            Command::Survival => "survival",
            Command::Ionization => "ionization",
            Command::SpectralSolve => "spectral-solve",
            Command::FindPole => "find-pole",
            Command::CheckGenericity => "check-genericity",
            Command::BranchFit => "branch-fit",
            Command::FitDecay { .. } => "fit-decay",
            Command::ValidateAll => "validate-all",
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = Config::load(cli.config.as_deref())?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let started = Utc::now().to_rfc3339();
    let mut out = OutputDir::create(&cli.out)?;
    let input = match &cli.command {
        Command::FitDecay { input } => Some(input.as_path()),
        _ => None,
    };
    let ctx = Context { config: &config, seed: cli.seed, input };
    let result = match cli.command {
        Command::SolveCharges => commands::solve_charges_cmd(&ctx, &mut out),
        Command::Survival => commands::survival_cmd(&ctx, &mut out),
        Command::Ionization => commands::ionization_cmd(&ctx, &mut out),
        Command::SpectralSolve => commands::spectral_solve_cmd(&ctx, &mut out),
        Command::FindPole => commands::find_pole_cmd(&ctx, &mut out),
        Command::CheckGenericity => commands::check_genericity_cmd(&ctx, &mut out),
        Command::BranchFit => commands::branch_fit_cmd(&ctx, &mut out),
        Command::FitDecay { .. } => commands::fit_decay_cmd(&ctx, &mut out),
        Command::ValidateAll => commands::validate_all_cmd(&ctx, &mut out),
    };
    let key_results = match &result {
        Ok(v) => v.clone(),
        Err(e) => Value::String(e.to_string()),
    };
    let manifest = RunManifest {
        config_hash: config.hash(),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cli.command.name().to_string(),
        started,
        finished: Utc::now().to_rfc3339(),
        seed: cli.seed,
        threads: rayon::current_num_threads(),
        outputs: Vec::new(),
        key_results,
    };
    out.finish(manifest)?;
    result.map(|_| ())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IONIZE_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("ionize: {e}");
        std::process::exit(e.exit_code());
    }
}
