use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{PipelineConfig, Preset, StageToggles};
use crate::error::PipelineError;

#[derive(Debug, Parser)]
#[command(name = "atsdf", version, about = "LiDAR reconstruction, texturing and semantic labeling pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML or JSON config file layered over the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Defaults to start from before the config file is applied.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fuse scans and extract the mesh.
    Reconstruct,
    /// Visibility and texturing of an existing mesh.
    Texture,
    /// Semantic labeling of an existing mesh.
    Semantic,
    /// Compare an existing mesh against the ground-truth scene.
    Evaluate,
    /// Write synthetic scans, trajectory, frames and ground truth.
    Simulate,
    /// Every stage enabled in the config.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Street,
    ObjectBenchmark,
    Semantic,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Street => Preset::Street,
            PresetArg::ObjectBenchmark => Preset::ObjectBenchmark,
            PresetArg::Semantic => Preset::Semantic,
        }
    }
}

impl Command {
    /// Stage toggles for this subcommand. `reconstruct` keeps the config's
    /// simulate toggle so a synthetic config can run end to end.
    pub fn stages(self, configured: StageToggles) -> StageToggles {
        let none = StageToggles::none();
        match self {
            Command::Reconstruct => StageToggles { simulate: configured.simulate, reconstruct: true, mesh: true, ..none },
            Command::Texture => StageToggles { visibility: true, texture: true, ..none },
            Command::Semantic => StageToggles { semantic: true, ..none },
            Command::Evaluate => StageToggles { evaluate: true, ..none },
            Command::Simulate => StageToggles { simulate: true, ..none },
            Command::All => configured,
        }
    }
}

impl Cli {
    /// Preset, then config file, then `ATSDF_*` variables from `env`, then
    /// command-line flags.
    pub fn resolve<I: IntoIterator<Item = (String, String)>>(&self, env: I) -> Result<PipelineConfig, PipelineError> {
        let base = PipelineConfig::preset(self.preset.map(Preset::from).unwrap_or(Preset::Street));
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load_file(path, &base)?,
            None => base,
        }
        .with_env(env)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        cfg.stages = self.command.stages(cfg.stages);
        Ok(cfg)
    }
}
