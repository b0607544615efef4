mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{cmd_calibrate, cmd_fisher, cmd_simulate, cmd_sweep, RunContext};
use config::{CliError, Config};

#[derive(Parser)]
#[command(name = "samplan", version, about = "Simulation-based sample size planning for clinical prediction models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the reference model intercept and scale to target c-statistic and prevalence.
    Calibrate(RunArgs),
    /// Full simulation: repeated development samples, fits and evaluations.
    Simulate(RunArgs),
    /// Fast approximation from the unit Fisher information.
    Fisher(RunArgs),
    /// Simulation over sample sizes and case-mix variants, with minimal-n verdicts.
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Development sample sizes, overriding `scenario.n_values`.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores. Output never depends on this.
    #[arg(long, env = "SAMPLAN_THREADS")]
    threads: Option<usize>,
    /// Exit with status 3 when the run produced warnings.
    #[arg(long)]
    strict: bool,
}

fn run(command: &str, args: &RunArgs) -> Result<Vec<String>, CliError> {
    let mut config = Config::load(&args.config)?;
    if let Some(n) = &args.n {
        config.scenario.n_values = n.clone();
    }
    if let Some(i) = args.iterations {
        config.scenario.iterations = i;
    }
    if let Some(s) = args.seed {
        config.scenario.master_seed = s;
    }
    let threads = args.threads.unwrap_or(0);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let ctx = RunContext {
        config: &config,
        out: &args.out,
        threads: rayon::current_num_threads(),
    };
    let outcome = match command {
        "calibrate" => cmd_calibrate(&ctx),
        "simulate" => cmd_simulate(&ctx),
        "fisher" => cmd_fisher(&ctx),
        _ => cmd_sweep(&ctx),
    }?;
    Ok(outcome.warnings)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Calibrate(a) => ("calibrate", a),
        Command::Simulate(a) => ("simulate", a),
        Command::Fisher(a) => ("fisher", a),
        Command::Sweep(a) => ("sweep", a),
    };
    match run(name, args) {
        Ok(warnings) => {
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            if args.strict && !warnings.is_empty() {
                eprintln!("{} warning(s) escalated by --strict", warnings.len());
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
