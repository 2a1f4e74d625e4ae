//! Pseudo-training sentence synthesis.
//!
//! Any autoregressive model exposing next-token scores can be plugged in via
//! [`TokenLm`]. At every step the scores are normalized to log-probabilities
//! and divided by a per-token temperature: `tau * alpha` for tokens of the
//! target instance that have not been emitted yet, `tau * beta` for tokens
//! already present in the prefix, and `tau` otherwise. With log-probabilities
//! (all `<= 0`), `alpha > 1` flattens a token's score towards zero and so
//! raises its probability, while `beta < 1` lowers it.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{Enrichment, TypeOntology};
use crate::seed::derive_seed;
use crate::text;

pub type TokenId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("non-finite logit at index {0}")]
    NonFiniteLogit(usize),
    #[error("logit vector has length {got}, vocabulary has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("instance {0:?} cannot be tokenized by the language model")]
    Untokenizable(String),
    #[error("language model failure: {0}")]
    Lm(String),
    #[error("empty sample batch")]
    EmptyBatch,
    #[error("enrichment has no instances for any ontology type")]
    NoInstances,
    #[error("malformed sample record on line {line}: {message}")]
    Malformed { line: usize, message: String },
}

pub type Result<T, E = GenerationError> = std::result::Result<T, E>;

/// Autoregressive next-token scorer.
pub trait TokenLm: Send + Sync {
    fn vocabulary(&self) -> &[String];

    /// Raw scores for every vocabulary entry given `prefix`.
    fn next_logits(&self, prefix: &[TokenId]) -> Result<Vec<f64>>;

    /// Tokens that end a sentence.
    fn stop_tokens(&self) -> Vec<TokenId> {
        Vec::new()
    }

    /// Whitespace tokenization against the vocabulary, exact match first and
    /// then case-insensitive. `None` if any piece is unknown.
    fn tokenize(&self, text: &str) -> Option<Vec<TokenId>> {
        let vocab = self.vocabulary();
        text.split_whitespace()
            .map(|piece| {
                vocab
                    .iter()
                    .position(|v| v == piece)
                    .or_else(|| vocab.iter().position(|v| v.eq_ignore_ascii_case(piece)))
                    .map(|i| i as TokenId)
            })
            .collect()
    }

    fn detokenize(&self, tokens: &[TokenId]) -> String {
        let vocab = self.vocabulary();
        tokens
            .iter()
            .map(|&t| vocab[t as usize].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    /// Base temperature.
    pub tau: f64,
    /// Reward scale for target-instance tokens.
    pub alpha: f64,
    /// Penalty scale for tokens already in the prefix.
    pub beta: f64,
    pub max_tokens: usize,
    pub samples_per_instance: usize,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            tau: 1.0,
            alpha: 2.0,
            beta: 0.5,
            max_tokens: 64,
            samples_per_instance: 1,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    /// `alpha = 1` and `beta = 1` are accepted as the no-rescaling baseline.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GenerationError::InvalidConfig(m.to_string()));
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if !(self.alpha.is_finite() && self.alpha >= 1.0) {
            return bad("alpha must be at least 1");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be at least 1");
        }
        if self.samples_per_instance == 0 {
            return bad("samples_per_instance must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub text: String,
    #[serde(skip)]
    pub tokens: Vec<String>,
    pub instance: String,
    pub type_path: String,
    /// Mean log of the probability each sampled token had under the
    /// rescaled distribution.
    pub mean_log_prob: f64,
    pub seed: u64,
}

impl GeneratedSample {
    pub fn contains_instance(&self) -> bool {
        text::contains_word_sequence(&text::words(&self.text), &text::words(&self.instance))
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Per-token rescaled sampling distribution.
///
/// `prefix_tokens` takes precedence over `entity_tokens` when a token is in both.
pub fn rescaled_distribution(
    logits: &[f64],
    entity_tokens: &HashSet<TokenId>,
    prefix_tokens: &HashSet<TokenId>,
    config: &GenerationConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if let Some(i) = logits.iter().position(|l| !l.is_finite()) {
        return Err(GenerationError::NonFiniteLogit(i));
    }
    let scaled: Vec<f64> = log_softmax(logits)
        .into_iter()
        .enumerate()
        .map(|(i, lp)| {
            let id = i as TokenId;
            let omega = if prefix_tokens.contains(&id) {
                config.tau * config.beta
            } else if entity_tokens.contains(&id) {
                config.tau * config.alpha
            } else {
                config.tau
            };
            lp / omega
        })
        .collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Draws one index from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(probs)
        .expect("rescaled distribution is a valid probability vector")
        .sample(rng)
}

/// Samples one sentence, rewarding the tokens of `instance` until one full
/// occurrence has been emitted.
pub fn sample_sentence(
    lm: &dyn TokenLm,
    instance: &str,
    config: &GenerationConfig,
    stop_tokens: &HashSet<TokenId>,
    rng_seed: u64,
) -> Result<GeneratedSample> {
    config.validate()?;
    let target = lm
        .tokenize(instance)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| GenerationError::Untokenizable(instance.to_string()))?;
    let vocab_len = lm.vocabulary().len();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let mut emitted: Vec<TokenId> = Vec::new();
    let mut seen: HashSet<TokenId> = HashSet::new();
    let mut entity: HashSet<TokenId> = target.iter().copied().collect();
    let mut log_prob_sum = 0.0;
    let mut steps = 0usize;

    while emitted.len() < config.max_tokens {
        let logits = lm.next_logits(&emitted)?;
        if logits.len() != vocab_len {
            return Err(GenerationError::LengthMismatch {
                expected: vocab_len,
                got: logits.len(),
            });
        }
        let probs = rescaled_distribution(&logits, &entity, &seen, config)?;
        let choice = sample_index(&probs, &mut rng);
        log_prob_sum += probs[choice].ln();
        steps += 1;
        let token = choice as TokenId;
        if stop_tokens.contains(&token) {
            break;
        }
        emitted.push(token);
        seen.insert(token);
        if !entity.is_empty() && emitted.ends_with(&target) {
            entity.clear();
        }
    }

    let vocab = lm.vocabulary();
    Ok(GeneratedSample {
        text: lm.detokenize(&emitted),
        tokens: emitted.iter().map(|&t| vocab[t as usize].clone()).collect(),
        instance: instance.to_string(),
        type_path: String::new(),
        mean_log_prob: log_prob_sum / steps as f64,
        seed: rng_seed,
    })
}

/// Keeps samples scoring strictly above the batch mean that also contain
/// their instance. A single-sample batch skips the mean test.
pub fn filter_samples(samples: Vec<GeneratedSample>) -> Result<Vec<GeneratedSample>> {
    if samples.is_empty() {
        return Err(GenerationError::EmptyBatch);
    }
    let mean = samples.iter().map(|s| s.mean_log_prob).sum::<f64>() / samples.len() as f64;
    let single = samples.len() == 1;
    Ok(samples
        .into_iter()
        .filter(|s| (single || s.mean_log_prob > mean) && s.contains_instance())
        .collect())
}

#[derive(Debug, Default)]
pub struct GenerationReport {
    pub samples: Vec<GeneratedSample>,
    /// `(type_path, instance, error)` for pairs that could not be generated.
    pub failures: Vec<(String, String, GenerationError)>,
}

/// Generates and filters samples for every `(type, instance)` pair, in
/// ontology then enrichment order. Each pair is its own filter batch.
pub fn generate_training_corpus(
    ontology: &TypeOntology,
    enrichment: &Enrichment,
    lm: &dyn TokenLm,
    config: &GenerationConfig,
) -> Result<GenerationReport> {
    config.validate()?;
    let pairs: Vec<(&str, &str)> = ontology
        .nodes()
        .flat_map(|n| {
            enrichment
                .instances(&n.path)
                .iter()
                .map(move |i| (n.path.as_str(), i.as_str()))
        })
        .collect();
    if pairs.is_empty() {
        return Err(GenerationError::NoInstances);
    }
    let stops: HashSet<TokenId> = lm.stop_tokens().into_iter().collect();

    let batches: Vec<Result<Vec<GeneratedSample>>> = pairs
        .par_iter()
        .map(|&(path, instance)| {
            let batch = (0..config.samples_per_instance)
                .map(|j| {
                    let seed = derive_seed(config.seed, &[path, instance, &j.to_string()]);
                    let mut s = sample_sentence(lm, instance, config, &stops, seed)?;
                    s.type_path = path.to_string();
                    Ok(s)
                })
                .collect::<Result<Vec<_>>>()?;
            filter_samples(batch)
        })
        .collect();

    let mut report = GenerationReport::default();
    for ((path, instance), batch) in pairs.into_iter().zip(batches) {
        match batch {
            Ok(kept) => report.samples.extend(kept),
            Err(e) => report
                .failures
                .push((path.to_string(), instance.to_string(), e)),
        }
    }
    Ok(report)
}

pub fn samples_to_jsonl(samples: &[GeneratedSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s).expect("sample serializes"));
        out.push('\n');
    }
    out
}

pub fn samples_from_jsonl(source: &str) -> Result<Vec<GeneratedSample>> {
    source
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let mut s: GeneratedSample =
                serde_json::from_str(line).map_err(|e| GenerationError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            s.tokens = s.text.split_whitespace().map(str::to_string).collect();
            Ok(s)
        })
        .collect()
}
