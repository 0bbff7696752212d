//! Experiment runner behind the `chunklab` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

use config::{ExperimentConfig, Preset};
use error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    ChunkCurve,
    WaCompare,
    Forgetting,
    Stability,
    LinearStudy,
    ClCompare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ChunkCurve => "chunk-curve",
            Command::WaCompare => "wa-compare",
            Command::Forgetting => "forgetting",
            Command::Stability => "stability",
            Command::LinearStudy => "linear-study",
            Command::ClCompare => "cl-compare",
        }
    }

    pub fn preset(self) -> Preset {
        match self {
            Command::ChunkCurve => Preset::ChunkCurve,
            Command::WaCompare => Preset::WaCompare,
            Command::Forgetting => Preset::Forgetting,
            Command::Stability => Preset::Stability,
            Command::LinearStudy => Preset::LinearStudy,
            Command::ClCompare => Preset::ClCompare,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

/// Preset, then config file, then flags.
pub fn resolve_config(cmd: Command, ov: &Overrides) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(cmd.preset(), ov.config.as_deref())?;
    if !ov.seeds.is_empty() {
        cfg.seeds = ov.seeds.clone();
    }
    if cmd == Command::WaCompare && !cfg.averaging.averagers.iter().any(|a| a == "both") {
        cfg.averaging.averagers.insert(0, "both".into());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs `cmd` and writes its outputs plus `config.toml` and `manifest.json`
/// into `out`. Returns the files written.
pub fn run(cmd: Command, cfg: &ExperimentConfig, out: &Path, jobs: usize) -> CliResult<Vec<PathBuf>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} workers: {e}")))?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(format!("creating {}", out.display()), e))?;
    let written = match cmd {
        Command::ChunkCurve | Command::WaCompare => commands::chunk_curve(cfg, out, &pool)?,
        Command::Forgetting => commands::forgetting(cfg, out, &pool)?,
        Command::Stability => commands::stability(cfg, out, &pool)?,
        Command::LinearStudy => commands::linear_study(cfg, out, &pool)?,
        Command::ClCompare => commands::cl_compare(cfg, out, &pool)?,
    };
    output::write_manifest(out, cmd.name(), cfg, &cfg.seeds, &written)?;
    Ok(written)
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
