use std::path::PathBuf;
use std::process::ExitCode;

use chunklab_cli::{default_jobs, resolve_config, run, Command, Overrides};
use clap::{Args, Parser, Subcommand};

/// Chunked continual-learning experiments.
#[derive(Parser)]
#[command(name = "chunklab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Final test accuracy against chunk size.
    ChunkCurve(Common),
    /// Chunk curve evaluated with final, mean-averaged and EMA weights.
    WaCompare(Common),
    /// Accuracy on tracked chunks after every later chunk.
    Forgetting(Common),
    /// Test-accuracy dips right after chunk boundaries.
    Stability(Common),
    /// Weight averaging against Bayesian linear regression on synthetic data.
    LinearStudy(Common),
    /// Class-incremental runs with and without weight averaging.
    ClCompare(Common),
}

#[derive(Args)]
struct Common {
    /// TOML file layered over the subcommand's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed; repeat for several. Replaces the configured seeds.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Output directory [default: out/<subcommand>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    jobs: Option<usize>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Cmd::ChunkCurve(c) => (Command::ChunkCurve, c),
        Cmd::WaCompare(c) => (Command::WaCompare, c),
        Cmd::Forgetting(c) => (Command::Forgetting, c),
        Cmd::Stability(c) => (Command::Stability, c),
        Cmd::LinearStudy(c) => (Command::LinearStudy, c),
        Cmd::ClCompare(c) => (Command::ClCompare, c),
    };
    let ov = Overrides { config: common.config, seeds: common.seeds, out: common.out, jobs: common.jobs };
    let result = resolve_config(cmd, &ov).and_then(|cfg| {
        if common.print_config {
            print!("{}", cfg.to_toml()?);
            return Ok(());
        }
        let out = ov.out.clone().unwrap_or_else(|| PathBuf::from("out").join(cmd.name()));
        let written = run(cmd, &cfg, &out, ov.jobs.unwrap_or_else(default_jobs))?;
        eprintln!("{}: wrote {} files to {}", cmd.name(), written.len() + 2, out.display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chunklab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
