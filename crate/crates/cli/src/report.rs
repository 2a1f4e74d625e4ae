//! Evaluation against gold files and categorized error analysis.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use anyhow::{bail, Context, Result};
use fet_core::metrics::{self, normalize_path, EvalPair, MetricsReport};
use fet_core::ontology::TypeOntology;
use fet_core::seed::derive_seed;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetRecord, PredictionRecord};

/// Dataset records paired with their predictions, in dataset order.
pub struct Aligned<'a> {
    pub records: Vec<&'a DatasetRecord>,
    pub predictions: Vec<&'a PredictionRecord>,
}

pub fn align<'a>(records: &'a [DatasetRecord], predictions: &'a [PredictionRecord]) -> Result<Aligned<'a>> {
    let mut by_id: HashMap<&str, &PredictionRecord> = HashMap::new();
    for p in predictions {
        if by_id.insert(p.id.as_str(), p).is_some() {
            bail!("duplicate prediction for {}", p.id);
        }
    }
    if by_id.len() != records.len() {
        bail!("{} predictions for {} dataset records", by_id.len(), records.len());
    }
    let mut aligned = Aligned {
        records: Vec::with_capacity(records.len()),
        predictions: Vec::with_capacity(records.len()),
    };
    for r in records {
        let p = by_id
            .get(r.id.as_str())
            .with_context(|| format!("no prediction for record {}", r.id))?;
        aligned.records.push(r);
        aligned.predictions.push(p);
    }
    Ok(aligned)
}

fn ontology_paths(ontology: &TypeOntology) -> BTreeSet<String> {
    ontology.paths().filter_map(|p| normalize_path(p).ok()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmappedGold {
    /// Mentions with at least one gold type outside the ontology.
    pub mentions: usize,
    pub paths: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: MetricsReport,
    /// Mentions counted by strict accuracy.
    pub strict_accuracy_mentions: usize,
    pub unmapped: UnmappedGold,
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.metrics)?;
        write!(
            f,
            "unmapped gold    {} mentions, {} types",
            self.unmapped.mentions,
            self.unmapped.paths.len()
        )
    }
}

/// Metrics over all aligned mentions. Gold types missing from the ontology
/// stay in the overlap metrics but are dropped before the strict comparison,
/// and mentions left with no gold type are not counted there.
pub fn evaluate(aligned: &Aligned, ontology: &TypeOntology) -> Result<Evaluation> {
    let known = ontology_paths(ontology);
    let mut pairs = Vec::new();
    let mut strict_pairs = Vec::new();
    let mut unmapped_paths = BTreeSet::new();
    let mut unmapped_mentions = 0;
    for (r, p) in aligned.records.iter().zip(&aligned.predictions) {
        let pair = EvalPair::new(&r.gold, p.prediction().type_set()).with_context(|| format!("record {}", r.id))?;
        let missing: Vec<&String> = pair.gold.iter().filter(|g| !known.contains(*g)).collect();
        if !missing.is_empty() {
            unmapped_mentions += 1;
            unmapped_paths.extend(missing.into_iter().cloned());
        }
        let mapped: BTreeSet<String> = pair.gold.intersection(&known).cloned().collect();
        if !mapped.is_empty() {
            strict_pairs.push(EvalPair {
                gold: mapped,
                predicted: pair.predicted.clone(),
            });
        }
        pairs.push(pair);
    }
    let mut report = metrics::evaluate(&pairs)?;
    report.strict_accuracy = if strict_pairs.is_empty() {
        0.0
    } else {
        metrics::strict_accuracy(&strict_pairs)?
    };
    Ok(Evaluation {
        metrics: report,
        strict_accuracy_mentions: strict_pairs.len(),
        unmapped: UnmappedGold {
            mentions: unmapped_mentions,
            paths: unmapped_paths.into_iter().collect(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    /// Stopped above the gold type.
    IncorrectFineGrained,
    /// Went below a gold type, or names a type the ontology files elsewhere.
    Debatable,
    Other,
}

impl ErrorCategory {
    const ALL: [ErrorCategory; 3] = [
        ErrorCategory::IncorrectFineGrained,
        ErrorCategory::Debatable,
        ErrorCategory::Other,
    ];

    fn label(self) -> &'static str {
        match self {
            ErrorCategory::IncorrectFineGrained => "incorrect fine-grained inference",
            ErrorCategory::Debatable => "debatable prediction",
            ErrorCategory::Other => "other",
        }
    }
}

fn proper_ancestor(a: &str, p: &str) -> bool {
    TypeOntology::is_proper_ancestor(a, p)
}

fn last_segment(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

/// Buckets one wrong prediction against the most specific gold types (those
/// with no gold descendant). Gold types missing from the ontology are matched
/// to ontology nodes with the same last segment, so a prediction at or above
/// such a node counts as debatable rather than wrong.
pub fn categorize(gold: &BTreeSet<String>, predicted: &str, known: &BTreeSet<String>) -> ErrorCategory {
    let specific: Vec<&String> = gold
        .iter()
        .filter(|g| !gold.iter().any(|h| proper_ancestor(g, h)))
        .collect();
    let (mapped, unmapped): (Vec<&String>, Vec<&String>) = specific.into_iter().partition(|g| known.contains(*g));
    if mapped.iter().any(|g| proper_ancestor(predicted, g)) {
        return ErrorCategory::IncorrectFineGrained;
    }
    if mapped.iter().chain(&unmapped).any(|g| proper_ancestor(g, predicted)) {
        return ErrorCategory::Debatable;
    }
    let relocated = unmapped
        .iter()
        .flat_map(|g| known.iter().filter(move |k| last_segment(k) == last_segment(g)));
    for r in relocated {
        if r == predicted || proper_ancestor(predicted, r) {
            return ErrorCategory::Debatable;
        }
    }
    ErrorCategory::Other
}

/// Words that may sit inside a multi-word capitalized name.
const NAME_CONNECTORS: &[&str] = &["of", "the", "and", "de", "&"];

fn is_capitalized(token: &str) -> bool {
    token
        .chars()
        .find(|c| c.is_alphanumeric())
        .is_some_and(char::is_uppercase)
}

/// Whether the mention sits strictly inside a longer run of capitalized
/// words, e.g. "Boston" in "the Boston Globe reported".
pub fn possible_nesting(context: &str, span: (usize, usize)) -> bool {
    let mut tokens: Vec<(usize, usize, &str)> = Vec::new();
    let mut start = None;
    let mut offset_bytes = Vec::new();
    for (ci, (bi, ch)) in context.char_indices().enumerate() {
        offset_bytes.push(bi);
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(ci),
            (true, Some(s)) => {
                tokens.push((s, ci, ""));
                start = None;
            }
            _ => {}
        }
    }
    let n = offset_bytes.len();
    offset_bytes.push(context.len());
    if let Some(s) = start {
        tokens.push((s, n, ""));
    }
    for t in &mut tokens {
        t.2 = &context[offset_bytes[t.0]..offset_bytes[t.1]];
    }

    let inside: Vec<usize> = (0..tokens.len())
        .filter(|&i| tokens[i].0 < span.1 && tokens[i].1 > span.0)
        .collect();
    let (Some(&first), Some(&last)) = (inside.first(), inside.last()) else {
        return false;
    };
    let extends = |i: usize, step: isize| -> bool {
        let mut j = i as isize + step;
        while j >= 0 && (j as usize) < tokens.len() {
            let t = tokens[j as usize].2;
            if is_capitalized(t) {
                return true;
            }
            if !NAME_CONNECTORS.contains(&t.to_lowercase().as_str()) {
                return false;
            }
            j += step;
        }
        false
    };
    extends(first, -1) || extends(last, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: String,
    pub mention: String,
    pub gold: Vec<String>,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mentions: usize,
    pub errors: usize,
    pub counts: BTreeMap<ErrorCategory, usize>,
    /// Wrong predictions whose mention may be part of a longer name.
    pub possible_nesting: usize,
    pub exemplars: BTreeMap<ErrorCategory, Vec<Exemplar>>,
    pub nesting_exemplars: Vec<Exemplar>,
}

pub const EXEMPLARS_PER_BUCKET: usize = 3;

fn sample_exemplars(items: Vec<Exemplar>, seed: u64, label: &str) -> Vec<Exemplar> {
    if items.len() <= EXEMPLARS_PER_BUCKET {
        return items;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["report", label]));
    let mut picked = index::sample(&mut rng, items.len(), EXEMPLARS_PER_BUCKET).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i].clone()).collect()
}

pub fn error_report(aligned: &Aligned, ontology: &TypeOntology, seed: u64) -> Result<ErrorReport> {
    let known = ontology_paths(ontology);
    let mut buckets: BTreeMap<ErrorCategory, Vec<Exemplar>> =
        ErrorCategory::ALL.iter().map(|&c| (c, Vec::new())).collect();
    let mut nesting = Vec::new();
    let mut errors = 0;
    for (r, p) in aligned.records.iter().zip(&aligned.predictions) {
        let pair = EvalPair::new(&r.gold, p.prediction().type_set()).with_context(|| format!("record {}", r.id))?;
        if pair.gold == pair.predicted {
            continue;
        }
        errors += 1;
        let predicted = normalize_path(&p.path)?;
        let ex = Exemplar {
            id: r.id.clone(),
            mention: r.mention.clone(),
            gold: pair.gold.iter().cloned().collect(),
            predicted: predicted.clone(),
        };
        if possible_nesting(&r.context, r.span) {
            nesting.push(ex.clone());
        }
        buckets
            .get_mut(&categorize(&pair.gold, &predicted, &known))
            .expect("all buckets exist")
            .push(ex);
    }
    Ok(ErrorReport {
        mentions: aligned.records.len(),
        errors,
        counts: buckets.iter().map(|(c, v)| (*c, v.len())).collect(),
        possible_nesting: nesting.len(),
        exemplars: buckets
            .into_iter()
            .map(|(c, v)| (c, sample_exemplars(v, seed, c.label())))
            .collect(),
        nesting_exemplars: sample_exemplars(nesting, seed, "nesting"),
    })
}

impl fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} errors in {} mentions", self.errors, self.mentions)?;
        for c in ErrorCategory::ALL {
            writeln!(f, "  {:34} {}", c.label(), self.counts.get(&c).copied().unwrap_or(0))?;
            for e in self.exemplars.get(&c).into_iter().flatten() {
                writeln!(f, "      {} {:?}: gold {:?}, predicted {}", e.id, e.mention, e.gold, e.predicted)?;
            }
        }
        write!(f, "  {:34} {}", "possible nesting", self.possible_nesting)
    }
}
