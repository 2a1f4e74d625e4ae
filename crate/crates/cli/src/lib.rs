//! Command-line orchestration of the entity typing pipeline.

pub mod config;
pub mod dataset;
pub mod manifest;
pub mod report;
pub mod stages;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{Loaded, PipelineConfig, Stage};
use stages::StageContext;

#[derive(Debug, Parser)]
#[command(name = "fet", version, about = "Zero-shot fine-grained entity typing")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config; relative paths inside it resolve against its directory.
    #[arg(long, global = true, default_value = "fet.toml")]
    pub config: PathBuf,
    /// Override any config key, e.g. `--set train.epochs=3`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Descent threshold for coarse-to-fine inference.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Score every type at once instead of descending the hierarchy.
    #[arg(long, global = true)]
    pub flat: bool,
    /// Drop topics from training examples and keywords from inference.
    #[arg(long, global = true)]
    pub no_topics: bool,
    /// Number of context keywords used as topics at inference.
    #[arg(long, global = true)]
    pub keywords: Option<usize>,
    #[arg(long, global = true)]
    pub ce_loss: bool,
    /// Add siblings to the contradiction pool.
    #[arg(long, global = true)]
    pub include_siblings: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the bundled synthetic world and a config tuned for it.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    Enrich,
    Generate,
    BuildNli,
    Train,
    Infer,
    Evaluate,
    Report,
    /// Run the stages listed under `stages` in the config.
    Pipeline,
    /// Convert token-list records (left/right context tokens, mention, labels)
    /// into the dataset format.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print the effective config.
    ShowConfig,
}

impl GlobalArgs {
    fn apply(&self, config: &PipelineConfig) -> Result<PipelineConfig> {
        let mut c = config.with_overrides(&self.overrides)?;
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(t) = self.threshold {
            c.inference.threshold = t;
        }
        if let Some(k) = self.keywords {
            c.inference.k_keywords = k;
        }
        c.ablation.flat_inference |= self.flat;
        c.ablation.no_topics |= self.no_topics;
        c.ablation.ce_loss |= self.ce_loss;
        c.ablation.include_siblings |= self.include_siblings;
        Ok(c)
    }

    fn load(&self) -> Result<Loaded> {
        let mut loaded = if self.config.exists() {
            Loaded::from_file(&self.config)?
        } else {
            Loaded {
                config: PipelineConfig::default(),
                base: PathBuf::from("."),
            }
        };
        loaded.config = self.apply(&loaded.config)?;
        Ok(loaded)
    }
}

/// Runs a parsed command and returns what it prints.
pub fn run(cli: &Cli) -> Result<String> {
    let stage = |s| -> Result<String> { stages::run_stage(s, &StageContext::new(cli.global.load()?)) };
    match &cli.command {
        Command::Synth { out } => {
            let config = cli.global.apply(&PipelineConfig::synthetic_fixture())?;
            stages::synth(out, &config)
        }
        Command::Enrich => stage(Stage::Enrich),
        Command::Generate => stage(Stage::Generate),
        Command::BuildNli => stage(Stage::BuildNli),
        Command::Train => stage(Stage::Train),
        Command::Infer => stage(Stage::Infer),
        Command::Evaluate => stage(Stage::Evaluate),
        Command::Report => stage(Stage::Report),
        Command::Pipeline => stages::run_pipeline(&StageContext::new(cli.global.load()?)),
        Command::Convert { input, output } => convert(input, output),
        Command::ShowConfig => Ok(cli.global.load()?.config.to_toml()),
    }
}

fn convert(input: &Path, output: &Path) -> Result<String> {
    let source = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let records = dataset::convert_token_lists(&source)?;
    fs::write(output, dataset::to_jsonl(&records)).with_context(|| format!("writing {}", output.display()))?;
    Ok(format!("records {}", records.len()))
}
