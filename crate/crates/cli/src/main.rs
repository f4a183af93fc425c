use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fockfield_cli::{execute, Command, RunOptions};

/// Maximum-entropy classical fields on truncated projective Fock space.
#[derive(Parser)]
#[command(name = "fockfield", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve for the chemical potential of a target field.
    Solve(Common),
    /// Compare the ensemble and operator-exponential states over cutoffs.
    Compare(Common),
    /// Probe a level surface of the field map.
    Foliation(Common),
    /// Dump uniform draws on projective space.
    Sample(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML, or JSON when the extension is .json).
    #[arg(long)]
    config: PathBuf,
    /// Parent directory for the run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, c) = match cli.command {
        Sub::Solve(c) => (Command::Solve, c),
        Sub::Compare(c) => (Command::Compare, c),
        Sub::Foliation(c) => (Command::Foliation, c),
        Sub::Sample(c) => (Command::Sample, c),
    };
    let opts = RunOptions { config: c.config, out: c.out, seed: c.seed, threads: c.threads };
    let outcome = execute(cmd, &opts);
    if let Some(err) = &outcome.error {
        eprintln!("{err}");
    }
    if let Some(dir) = &outcome.run_dir {
        println!("{}", dir.display());
    }
    ExitCode::from(outcome.exit_code as u8)
}
