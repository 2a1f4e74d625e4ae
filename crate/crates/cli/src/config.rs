use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fet_core::entailment_model::{LossMode, LrSchedule, ModelConfig, TrainConfig};
use fet_core::generation::GenerationConfig;
use fet_core::inference::{InferenceConfig, InferenceMode};
use fet_core::nli_data::PerSample;
use fet_core::ontology::SiblingContrast;
use fet_core::synthetic::SyntheticConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// File locations, relative to the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub ontology: PathBuf,
    pub enrichment: PathBuf,
    /// Directory of `*.txt` files, one document per line.
    pub corpus: PathBuf,
    /// Optional `term<TAB>vector` table for instance expansion.
    pub embeddings: Option<PathBuf>,
    pub lm: PathBuf,
    pub dataset: PathBuf,
    pub samples: PathBuf,
    pub nli: PathBuf,
    pub model: PathBuf,
    pub loss_trace: PathBuf,
    pub predictions: PathBuf,
    pub metrics: PathBuf,
    pub report: PathBuf,
    /// Where stage manifests go.
    pub manifests: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            ontology: "ontology.jsonl".into(),
            enrichment: "enrichment.jsonl".into(),
            corpus: "corpus".into(),
            embeddings: None,
            lm: "lm.json".into(),
            dataset: "dataset.jsonl".into(),
            samples: "out/samples.jsonl".into(),
            nli: "out/nli.jsonl".into(),
            model: "out/model.json".into(),
            loss_trace: "out/loss.tsv".into(),
            predictions: "out/predictions.jsonl".into(),
            metrics: "out/metrics.json".into(),
            report: "out/report.json".into(),
            manifests: "out/manifests".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnrichSettings {
    pub instances_per_type: usize,
    pub topics_per_type: usize,
    pub docs_per_type: usize,
    pub seeds_per_type: usize,
}

impl Default for EnrichSettings {
    fn default() -> Self {
        let o = fet_core::enrichment::EnrichOptions::default();
        EnrichSettings {
            instances_per_type: o.instances_per_type,
            topics_per_type: o.topics_per_type,
            docs_per_type: o.docs_per_type,
            seeds_per_type: o.seeds_per_type,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NliSettings {
    pub n_neutral: usize,
    pub n_contradiction: usize,
    /// Sibling pool used when `ablation.include_siblings` is set.
    pub sibling_scope: SiblingScope,
}

impl Default for NliSettings {
    fn default() -> Self {
        let p = PerSample::default();
        NliSettings {
            n_neutral: p.n_neutral,
            n_contradiction: p.n_contradiction,
            sibling_scope: SiblingScope::Own,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiblingScope {
    Own,
    Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub no_topics: bool,
    pub flat_inference: bool,
    pub ce_loss: bool,
    pub include_siblings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Enrich,
    Generate,
    BuildNli,
    Train,
    Infer,
    Evaluate,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Enrich => "enrich",
            Stage::Generate => "generate",
            Stage::BuildNli => "build-nli",
            Stage::Train => "train",
            Stage::Infer => "infer",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed; copied into every stage that draws random numbers.
    pub seed: u64,
    /// Stages run by `pipeline`, in order.
    pub stages: Vec<Stage>,
    pub paths: Paths,
    pub synthetic: SyntheticConfig,
    pub enrich: EnrichSettings,
    pub generation: GenerationConfig,
    pub nli: NliSettings,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub ablation: Ablation,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            stages: vec![
                Stage::Generate,
                Stage::BuildNli,
                Stage::Train,
                Stage::Infer,
                Stage::Evaluate,
                Stage::Report,
            ],
            paths: Paths::default(),
            synthetic: SyntheticConfig::default(),
            enrich: EnrichSettings::default(),
            generation: GenerationConfig::default(),
            nli: NliSettings::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            inference: InferenceConfig::default(),
            ablation: Ablation::default(),
        }
    }
}

impl PipelineConfig {
    /// Settings for the bundled synthetic world. The toy encoder starts from
    /// random embeddings, so it needs a far larger step than fine-tuning a
    /// pretrained one, and the toy LM needs a stronger entity reward to name
    /// instances within a sentence.
    pub fn synthetic_fixture() -> Self {
        let mut c = PipelineConfig::default();
        c.generation.alpha = 8.0;
        c.generation.samples_per_instance = 4;
        c.nli.n_contradiction = 2;
        c.nli.sibling_scope = SiblingScope::Path;
        c.ablation.include_siblings = true;
        c.model.init_scale = 0.5;
        c.train.learning_rate = 3.0;
        c.train.schedule = LrSchedule::Linear;
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(source: &str) -> Result<Self> {
        Ok(toml::from_str(source)?)
    }

    /// Applies `key=value` overrides with dotted keys, e.g.
    /// `train.learning_rate=0.5`. Values are parsed as TOML and fall back to
    /// plain strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table = toml::Table::try_from(self)?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .with_context(|| format!("override {item:?} is not key=value"))?;
            let value = parse_value(raw.trim());
            set_dotted(&mut table, key.trim(), value).with_context(|| format!("override {item:?}"))?;
        }
        toml::Value::Table(table)
            .try_into()
            .context("overrides produce an invalid config")
    }

    /// Propagates the global seed into the stage configs.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.synthetic.seed = c.seed;
        c.generation.seed = c.seed;
        c.model.seed = c.seed;
        c.train.seed = c.seed;
        c.inference.use_topics = !c.ablation.no_topics;
        c
    }

    pub fn siblings(&self) -> SiblingContrast {
        match (self.ablation.include_siblings, self.nli.sibling_scope) {
            (false, _) => SiblingContrast::None,
            (true, SiblingScope::Own) => SiblingContrast::Own,
            (true, SiblingScope::Path) => SiblingContrast::Path,
        }
    }

    pub fn per_sample(&self) -> PerSample {
        PerSample {
            n_neutral: self.nli.n_neutral,
            n_contradiction: self.nli.n_contradiction,
        }
    }

    pub fn loss_mode(&self) -> LossMode {
        if self.ablation.ce_loss {
            LossMode::Ce
        } else {
            LossMode::Gce
        }
    }

    pub fn inference_mode(&self) -> InferenceMode {
        if self.ablation.flat_inference {
            InferenceMode::Flat
        } else {
            InferenceMode::CoarseToFine
        }
    }

    /// Hex SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&self.resolved()).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        cur = match cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())) {
            toml::Value::Table(t) => t,
            _ => bail!("{p} is not a section"),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// A loaded config and the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: PipelineConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn from_file(path: &Path) -> Result<Self> {
        let source = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config = PipelineConfig::from_toml(&source).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Loaded { config, base })
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}
