use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qportfolio_cli::{parse_scenario, run, write_atomically, Experiment};

const VALIDATION: u8 = 1;
const FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "qportfolio", version, about = "Quantum portfolio scenarios: simulate, solve, value, hedge")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ensemble and tabulate its moments.
    Simulate(Args),
    /// Evolve a density with the forward Fokker-Planck solver.
    SolveForward(Args),
    /// Value a payoff by several routes and compare them.
    Value(Args),
    /// Run delta-hedged paths and report the replication error.
    Hedge(Args),
    /// Qubit collapse fractions against the absorption oracle.
    CollapseStats(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved scenario and exit.
    #[arg(long)]
    describe: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (expected, args) = match cli.command {
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::SolveForward(a) => (Experiment::SolveForward, a),
        Command::Value(a) => (Experiment::Value, a),
        Command::Hedge(a) => (Experiment::Hedge, a),
        Command::CollapseStats(a) => (Experiment::CollapseStats, a),
    };
    let text = match std::fs::read_to_string(&args.scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.scenario.display());
            return ExitCode::from(VALIDATION);
        }
    };
    let mut scenario = match parse_scenario(&text) {
        Ok(s) => s,
        Err(errors) => {
            for e in &errors {
                eprintln!("error: {e}");
            }
            eprintln!("{} validation error(s) in {}", errors.len(), args.scenario.display());
            return ExitCode::from(VALIDATION);
        }
    };
    if scenario.experiment != expected {
        eprintln!(
            "error: experiment: scenario declares \"{}\" but the subcommand runs \"{}\"",
            scenario.experiment.name(),
            expected.name()
        );
        return ExitCode::from(VALIDATION);
    }
    if let Some(seed) = args.seed {
        scenario.master_seed = seed;
    }
    if let Some(out) = &args.out {
        scenario.output_dir = out.display().to_string();
    }
    if args.describe {
        println!("{}", scenario.describe());
        return ExitCode::SUCCESS;
    }
    let files = match run(&scenario) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("numerical failure: {e}");
            return ExitCode::from(FAILURE);
        }
    };
    match write_atomically(scenario.output_dir.as_ref(), &files) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: writing outputs to {}: {e}", scenario.output_dir);
            ExitCode::from(FAILURE)
        }
    }
}
