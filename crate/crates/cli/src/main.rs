use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vortex_cli::config::RunConfig;
use vortex_cli::pipeline::{run, Command, RunOptions};

#[derive(Parser)]
#[command(name = "vortex", version, about = "Fourth-order vortex solver on the flat torus")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Recorded in the report. The pipeline itself is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Evaluate nonlinear terms on a 3/2-padded grid.
    #[arg(long, global = true)]
    dealias: bool,
    /// Continue past an unverified subsolution.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the model assumptions.
    CheckModel,
    /// Build the singular background.
    Sigma,
    /// Build and verify the subsolution.
    Subsolution,
    /// Scan (λ, ε) for subsolution feasibility.
    Probe,
    /// Local minimum, mountain pass and system certification.
    Solve,
    /// Track the local minimum as ε decreases.
    Continuation,
    /// Recompute residuals and flux of a saved field.
    Verify { field: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (cmd, field) = match cli.command {
        Cmd::CheckModel => (Command::CheckModel, None),
        Cmd::Sigma => (Command::Sigma, None),
        Cmd::Subsolution => (Command::Subsolution, None),
        Cmd::Probe => (Command::Probe, None),
        Cmd::Solve => (Command::Solve, None),
        Cmd::Continuation => (Command::Continuation, None),
        Cmd::Verify { field } => (Command::Verify, Some(field)),
    };
    let Some(path) = cli.config else {
        eprintln!("error: --config is required");
        return ExitCode::from(2);
    };
    let cfg = match RunConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions { out: cli.out, seed: cli.seed, dealias: cli.dealias, force: cli.force, field };
    match run(cmd, &cfg, &opts) {
        Ok(report) => {
            if let Some(e) = &report.error {
                eprintln!("error: {e}");
            }
            for (name, ok) in &report.flags {
                log::info!("{name}: {}", if *ok { "pass" } else { "FAIL" });
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
