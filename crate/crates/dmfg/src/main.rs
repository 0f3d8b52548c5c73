use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dmfg::commands;

/// Weak-KAM value iteration and coupled fixed-point experiments for
/// discounted mean field games on the flat torus.
#[derive(Parser)]
#[command(name = "dmfg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the JSON run configuration.
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,

    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for sweeps and per-point parallelism (0 = auto).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Hamilton-Jacobi fixed point for a frozen measure.
    Hjb,
    /// Solve the coupled mean-field system.
    Dmfg,
    /// Vanishing-discount sweep over sweep.lambdas.
    SweepLambda,
    /// Discretization sweep over sweep.taus.
    SweepTau,
    /// Two-branch non-uniqueness demonstration.
    Nonuniq,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // Build the global pool once; later calls would fail, so ignore the
        // error if a pool already exists (e.g. under tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let code = match cli.command {
        Command::Hjb => commands::cmd_hjb(&cli.config, &cli.out, cli.quiet),
        Command::Dmfg => commands::cmd_dmfg(&cli.config, &cli.out, cli.quiet),
        Command::SweepLambda => commands::cmd_sweep_lambda(&cli.config, &cli.out, cli.quiet),
        Command::SweepTau => commands::cmd_sweep_tau(&cli.config, &cli.out, cli.quiet),
        Command::Nonuniq => commands::cmd_nonuniq(&cli.config, &cli.out, cli.quiet),
    };
    ExitCode::from(code as u8)
}
