//! Premise/hypothesis example construction from generated samples.
//!
//! The hypothesis type of each example decides its label: the sample's own
//! type gives Entailment, one of its ancestors gives Neutral and a type from
//! the contradiction pool of [`TypeOntology::contrast_sets`] gives
//! Contradiction.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::GeneratedSample;
use crate::ontology::{Enrichment, OntologyError, SiblingContrast, TypeOntology};

#[derive(Debug, Error, PartialEq)]
pub enum NliError {
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error("malformed example on line {line}: {message}")]
    Malformed { line: usize, message: String },
}

pub type Result<T, E = NliError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment,
    Neutral,
    Contradiction,
}

impl NliLabel {
    pub const ALL: [NliLabel; 3] = [NliLabel::Entailment, NliLabel::Neutral, NliLabel::Contradiction];

    /// Class index used by the classifier head.
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliExample {
    pub premise: String,
    pub hypothesis: String,
    pub topics: Vec<String>,
    pub label: NliLabel,
    pub source_type: String,
    pub hypothesis_type: String,
    pub instance: String,
}

/// `"<instance> is a <type>"`, with "an" before a vowel-initial type name.
pub fn render_hypothesis(instance: &str, type_name: &str) -> Result<String> {
    let instance = instance.trim();
    let type_name = type_name.trim();
    if instance.is_empty() {
        return Err(NliError::EmptyInput("instance"));
    }
    if type_name.is_empty() {
        return Err(NliError::EmptyInput("type name"));
    }
    let vowel = type_name
        .chars()
        .next()
        .is_some_and(|c| matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u'));
    let article = if vowel { "an" } else { "a" };
    Ok(format!("{instance} is {article} {type_name}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerSample {
    pub n_neutral: usize,
    pub n_contradiction: usize,
}

impl Default for PerSample {
    fn default() -> Self {
        PerSample {
            n_neutral: 1,
            n_contradiction: 1,
        }
    }
}

/// Emits one Entailment example per sample plus up to `n_neutral` Neutral and
/// `n_contradiction` Contradiction examples drawn without replacement.
pub fn build_examples(
    samples: &[GeneratedSample],
    ontology: &TypeOntology,
    enrichment: &Enrichment,
    per_sample: PerSample,
    siblings: SiblingContrast,
    rng_seed: u64,
) -> Result<Vec<NliExample>> {
    for s in samples {
        ontology.node(&s.type_path)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(samples.len() * (1 + per_sample.n_neutral + per_sample.n_contradiction));

    for s in samples {
        let sets = ontology.contrast_sets(&s.type_path, siblings)?;
        let make = |hyp_type: &str, label: NliLabel| -> Result<NliExample> {
            let topic_owner = match label {
                NliLabel::Contradiction => hyp_type,
                _ => s.type_path.as_str(),
            };
            Ok(NliExample {
                premise: s.text.clone(),
                hypothesis: render_hypothesis(&s.instance, &ontology.node(hyp_type)?.name)?,
                topics: enrichment.topics(topic_owner).to_vec(),
                label,
                source_type: s.type_path.clone(),
                hypothesis_type: hyp_type.to_string(),
                instance: s.instance.clone(),
            })
        };

        out.push(make(&s.type_path, NliLabel::Entailment)?);
        for (pool, n, label) in [
            (&sets.neutral, per_sample.n_neutral, NliLabel::Neutral),
            (&sets.contradiction, per_sample.n_contradiction, NliLabel::Contradiction),
        ] {
            let amount = n.min(pool.len());
            if amount == 0 {
                continue;
            }
            for i in index::sample(&mut rng, pool.len(), amount) {
                out.push(make(&pool[i], label)?);
            }
        }
    }
    Ok(out)
}

pub fn examples_to_jsonl(examples: &[NliExample]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&serde_json::to_string(e).expect("example serializes"));
        out.push('\n');
    }
    out
}

pub fn examples_from_jsonl(source: &str) -> Result<Vec<NliExample>> {
    source
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| NliError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
