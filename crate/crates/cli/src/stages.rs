use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fet_core::enrichment::{
    enrich_ontology, CapitalizedSpanQa, EmbeddingExpander, EnrichOptions, InMemoryCorpus, TfIdfTopicMiner,
};
use fet_core::entailment_model::{loss_trace_to_tsv, train, EntailmentModel};
use fet_core::generation::{generate_training_corpus, samples_from_jsonl, samples_to_jsonl, GeneratedSample};
use fet_core::inference::{type_mentions, Mention};
use fet_core::nli_data::{build_examples, examples_from_jsonl, examples_to_jsonl, NliLabel};
use fet_core::ontology::{load_ontology, Enrichment, TypeOntology};
use fet_core::synthetic::{synthetic_world, SyntheticLm};
use fet_core::text::BackgroundTable;

use crate::config::{Loaded, PipelineConfig, Stage};
use crate::dataset::{self, load_dataset, DatasetRecord, PredictionRecord};
use crate::manifest::{digest, Manifest};
use crate::report::{align, error_report, evaluate};

/// A config with the global seed propagated, plus its base directory.
pub struct StageContext {
    pub config: PipelineConfig,
    loaded: Loaded,
}

impl StageContext {
    pub fn new(loaded: Loaded) -> Self {
        StageContext {
            config: loaded.config.resolved(),
            loaded,
        }
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        self.loaded.path(p)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Tracks the files a stage touches for its manifest.
struct Io<'a> {
    ctx: &'a StageContext,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl<'a> Io<'a> {
    fn new(ctx: &'a StageContext) -> Self {
        Io {
            ctx,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn input_path(&mut self, p: &Path) -> Result<PathBuf> {
        let full = self.ctx.path(p);
        if !full.exists() {
            bail!("missing input {}", full.display());
        }
        self.inputs.insert(p.display().to_string(), digest(&full)?);
        Ok(full)
    }

    fn input(&mut self, p: &Path) -> Result<String> {
        let full = self.input_path(p)?;
        read(&full)
    }

    fn output(&mut self, p: &Path, contents: &str) -> Result<()> {
        let full = self.ctx.path(p);
        write(&full, contents)?;
        self.outputs.insert(p.display().to_string(), digest(&full)?);
        Ok(())
    }

    fn finish(self, stage: Stage) -> Result<()> {
        let c = &self.ctx.config;
        let m = Manifest {
            stage: stage.name().to_string(),
            config_hash: c.hash(),
            seed: c.seed,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        write(
            &self.ctx.path(&c.paths.manifests.join(format!("{}.json", stage.name()))),
            &m.to_json(),
        )
    }
}

fn load_onto(io: &mut Io) -> Result<TypeOntology> {
    let p = io.ctx.config.paths.ontology.clone();
    Ok(load_ontology(&io.input(&p)?)?)
}

fn load_enrichment(io: &mut Io, ontology: &TypeOntology) -> Result<Enrichment> {
    let p = io.ctx.config.paths.enrichment.clone();
    Ok(Enrichment::from_jsonl(&io.input(&p)?, ontology)?)
}

/// Runs one stage and returns its printed summary.
pub fn run_stage(stage: Stage, ctx: &StageContext) -> Result<String> {
    let summary = match stage {
        Stage::Enrich => enrich(ctx),
        Stage::Generate => generate(ctx),
        Stage::BuildNli => build_nli(ctx),
        Stage::Train => train_stage(ctx),
        Stage::Infer => infer(ctx),
        Stage::Evaluate => evaluate_stage(ctx),
        Stage::Report => report_stage(ctx),
    };
    summary.with_context(|| format!("stage {}", stage.name()))
}

pub fn run_pipeline(ctx: &StageContext) -> Result<String> {
    let mut out = String::new();
    for &stage in &ctx.config.stages {
        let summary = run_stage(stage, ctx)?;
        writeln!(out, "[{}]\n{summary}", stage.name()).expect("string write");
    }
    Ok(out)
}

fn enrich(ctx: &StageContext) -> Result<String> {
    let c = &ctx.config;
    let mut io = Io::new(ctx);
    let ontology = load_onto(&mut io)?;
    let corpus_dir = io.input_path(&c.paths.corpus)?;
    let corpus = InMemoryCorpus::from_dir(&corpus_dir).with_context(|| format!("reading {}", corpus_dir.display()))?;
    let expander = match &c.paths.embeddings {
        Some(p) => EmbeddingExpander::parse(&io.input(p)?)?,
        None => EmbeddingExpander::default(),
    };
    let miner = TfIdfTopicMiner::new(BackgroundTable::from_documents(corpus.documents()));
    let options = EnrichOptions {
        instances_per_type: c.enrich.instances_per_type,
        topics_per_type: c.enrich.topics_per_type,
        docs_per_type: c.enrich.docs_per_type,
        seeds_per_type: c.enrich.seeds_per_type,
    };
    let report = enrich_ontology(&ontology, &corpus, &CapitalizedSpanQa, &expander, &miner, options)?;
    io.output(&c.paths.enrichment, &report.enrichment.to_jsonl())?;
    io.finish(Stage::Enrich)?;

    let mut s = format!(
        "types {} enriched {} failed {}",
        ontology.len(),
        report.enrichment.len(),
        report.failures.len()
    );
    for (path, e) in &report.failures {
        write!(s, "\n  {path}: {e}").expect("string write");
    }
    Ok(s)
}

fn generate(ctx: &StageContext) -> Result<String> {
    let c = &ctx.config;
    let mut io = Io::new(ctx);
    let ontology = load_onto(&mut io)?;
    let enrichment = load_enrichment(&mut io, &ontology)?;
    let lm = SyntheticLm::from_json(&io.input(&c.paths.lm)?)?;
    let report = generate_training_corpus(&ontology, &enrichment, &lm, &c.generation)?;
    io.output(&c.paths.samples, &samples_to_jsonl(&report.samples))?;
    io.finish(Stage::Generate)?;

    let mean = if report.samples.is_empty() {
        0.0
    } else {
        report.samples.iter().map(|s| s.mean_log_prob).sum::<f64>() / report.samples.len() as f64
    };
    let mut s = format!(
        "samples {} failed pairs {} mean log-prob {mean:.4}",
        report.samples.len(),
        report.failures.len()
    );
    let mut per_type: BTreeMap<&str, usize> = BTreeMap::new();
    for sample in &report.samples {
        *per_type.entry(&sample.type_path).or_default() += 1;
    }
    for (t, n) in per_type {
        write!(s, "\n  {t:32} {n}").expect("string write");
    }
    Ok(s)
}

fn build_nli(ctx: &StageContext) -> Result<String> {
    let c = &ctx.config;
    let mut io = Io::new(ctx);
    let ontology = load_onto(&mut io)?;
    let enrichment = load_enrichment(&mut io, &ontology)?;
    let samples = samples_from_jsonl(&io.input(&c.paths.samples)?)?;
    let examples = build_examples(&samples, &ontology, &enrichment, c.per_sample(), c.siblings(), c.seed)?;
    io.output(&c.paths.nli, &examples_to_jsonl(&examples))?;
    io.finish(Stage::BuildNli)?;

    let count = |l: NliLabel| examples.iter().filter(|e| e.label == l).count();
    Ok(format!(
        "examples {} entailment {} neutral {} contradiction {}",
        examples.len(),
        count(NliLabel::Entailment),
        count(NliLabel::Neutral),
        count(NliLabel::Contradiction)
    ))
}

fn train_stage(ctx: &StageContext) -> Result<String> {
    let c = &ctx.config;
    let mut io = Io::new(ctx);
    let mut examples = examples_from_jsonl(&io.input(&c.paths.nli)?)?;
    if c.ablation.no_topics {
        for e in &mut examples {
            e.topics.clear();
        }
    }
    let mut model = EntailmentModel::for_examples(&examples, &c.model)?;
    let trace = train(&mut model, &examples, &c.train, c.loss_mode())?;
    io.output(&c.paths.model, &model.to_json())?;
    io.output(&c.paths.loss_trace, &loss_trace_to_tsv(&trace))?;
    io.finish(Stage::Train)?;

    Ok(format!(
        "examples {} vocabulary {} epochs {} final loss {:.6}",
        examples.len(),
        model.encoder.vocabulary_len(),
        trace.len(),
        trace.last().copied().unwrap_or(f64::NAN)
    ))
}

/// Keyword extraction at inference ranks terms against the generated
/// training sentences when they exist, else against the dataset itself.
fn background(io: &mut Io, records: &[DatasetRecord]) -> Result<BackgroundTable> {
    let samples_path = io.ctx.config.paths.samples.clone();
    if io.ctx.path(&samples_path).exists() {
        let samples: Vec<GeneratedSample> = samples_from_jsonl(&io.input(&samples_path)?)?;
        Ok(BackgroundTable::from_documents(samples.iter().map(|s| s.text.as_str())))
    } else {
        Ok(BackgroundTable::from_documents(records.iter().map(|r| r.context.as_str())))
    }
}

fn infer(ctx: &StageContext) -> Result<String> {
    let c = &ctx.config;
    let mut io = Io::new(ctx);
    let ontology = load_onto(&mut io)?;
    let model = EntailmentModel::from_json(&io.input(&c.paths.model)?)?;
    let records = load_dataset(&io.input(&c.paths.dataset)?)?;
    let bg = background(&mut io, &records)?;
    let mentions: Vec<Mention> = records.iter().map(DatasetRecord::to_mention).collect::<Result<_>>()?;
    let mode = c.inference_mode();
    let predictions: Vec<PredictionRecord> = type_mentions(&model, &ontology, &mentions, &c.inference, &bg, mode)
        .into_iter()
        .zip(&records)
        .map(|(p, r)| Ok(PredictionRecord::new(&r.id, p.with_context(|| format!("record {}", r.id))?)))
        .collect::<Result<_>>()?;
    io.output(&c.paths.predictions, &dataset::to_jsonl(&predictions))?;
    io.finish(Stage::Infer)?;

    let depth: f64 = predictions
        .iter()
        .map(|p| p.path.matches('/').count() as f64)
        .sum::<f64>()
        / predictions.len().max(1) as f64;
    Ok(format!(
        "mentions {} mode {:?} mean depth {depth:.3}",
        predictions.len(),
        mode
    ))
}

fn load_predictions(io: &mut Io) -> Result<(TypeOntology, Vec<DatasetRecord>, Vec<PredictionRecord>)> {
    let c = io.ctx.config.clone();
    let ontology = load_onto(io)?;
    let records = load_dataset(&io.input(&c.paths.dataset)?)?;
    let predictions = dataset::from_jsonl(&io.input(&c.paths.predictions)?)?;
    Ok((ontology, records, predictions))
}

fn evaluate_stage(ctx: &StageContext) -> Result<String> {
    let c = &ctx.config;
    let mut io = Io::new(ctx);
    let (ontology, records, predictions) = load_predictions(&mut io)?;
    let eval = evaluate(&align(&records, &predictions)?, &ontology)?;
    io.output(&c.paths.metrics, &(serde_json::to_string_pretty(&eval)? + "\n"))?;
    io.finish(Stage::Evaluate)?;
    Ok(eval.to_string())
}

fn report_stage(ctx: &StageContext) -> Result<String> {
    let c = &ctx.config;
    let mut io = Io::new(ctx);
    let (ontology, records, predictions) = load_predictions(&mut io)?;
    let report = error_report(&align(&records, &predictions)?, &ontology, c.seed)?;
    io.output(&c.paths.report, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    io.finish(Stage::Report)?;
    Ok(report.to_string())
}

/// Writes the bundled synthetic world and a config tuned for it into `dir`.
pub fn synth(dir: &Path, config: &PipelineConfig) -> Result<String> {
    let c = config.resolved();
    let world = synthetic_world(&c.synthetic, &c.generation)?;
    let records: Vec<DatasetRecord> = world.test_mentions.iter().map(DatasetRecord::from).collect();
    write(&dir.join(&c.paths.ontology), &world.ontology.to_jsonl())?;
    write(&dir.join(&c.paths.enrichment), &world.enrichment.to_jsonl())?;
    write(&dir.join(&c.paths.lm), &world.lm.to_json())?;
    write(&dir.join(&c.paths.dataset), &dataset::to_jsonl(&records))?;
    write(&dir.join("fet.toml"), &config.to_toml())?;
    Ok(format!(
        "types {} instances {} held-out mentions {} in {}",
        world.ontology.len(),
        world.enrichment.iter().map(|(_, e)| e.instances.len()).sum::<usize>(),
        records.len(),
        dir.display()
    ))
}
