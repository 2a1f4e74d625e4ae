//! Deterministic stand-ins for the retrieval, QA, expansion and topic-mining
//! backends, usable fully offline.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::{BackendError, CorpusRetriever, InstanceExpander, QaExtractor, TopicMiner};
use crate::text::{self, BackgroundTable};

/// Line-per-document corpus ranked by idf-weighted query-word overlap.
#[derive(Debug, Clone, Default)]
pub struct InMemoryCorpus {
    docs: Vec<String>,
    words: Vec<HashMap<String, usize>>,
    df: HashMap<String, usize>,
}

impl InMemoryCorpus {
    pub fn new<I, S>(docs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut corpus = InMemoryCorpus::default();
        for doc in docs {
            let doc = doc.into();
            if doc.trim().is_empty() {
                continue;
            }
            let mut tf = HashMap::new();
            for w in text::words(&doc) {
                *tf.entry(w).or_insert(0) += 1;
            }
            for w in tf.keys() {
                *corpus.df.entry(w.clone()).or_insert(0) += 1;
            }
            corpus.docs.push(doc);
            corpus.words.push(tf);
        }
        corpus
    }

    /// Reads every `*.txt` file of `dir` (sorted by name); each non-empty line
    /// is one document.
    pub fn from_dir(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let mut files: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        let mut lines = Vec::new();
        for f in files {
            lines.extend(fs::read_to_string(f)?.lines().map(str::to_string));
        }
        Ok(Self::new(lines))
    }

    pub fn documents(&self) -> &[String] {
        &self.docs
    }
}

impl CorpusRetriever for InMemoryCorpus {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<String>, BackendError> {
        let terms: Vec<String> = text::words(query)
            .into_iter()
            .filter(|w| !text::is_stopword(w))
            .collect();
        let n = self.docs.len() as f64;
        let mut scored: Vec<(usize, f64)> = self
            .words
            .iter()
            .enumerate()
            .filter_map(|(i, tf)| {
                let score: f64 = terms
                    .iter()
                    .filter_map(|t| {
                        let df = *self.df.get(t)? as f64;
                        Some(*tf.get(t)? as f64 * ((n + 1.0) / df).ln())
                    })
                    .sum();
                (score > 0.0).then_some((i, score))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, _)| self.docs[i].clone())
            .collect())
    }
}

/// Answers with the first run of capitalized words in the context, leading
/// stopwords ("The", "In") trimmed. The question is not inspected.
#[derive(Debug, Clone, Copy, Default)]
pub struct CapitalizedSpanQa;

impl QaExtractor for CapitalizedSpanQa {
    fn answer(&self, _question: &str, context: &str) -> Result<Option<String>, BackendError> {
        let mut spans: Vec<(usize, usize)> = Vec::new();
        let mut run: Option<(usize, usize)> = None;
        let mut offset = 0;
        for raw in context.split_inclusive(char::is_whitespace) {
            let token = raw.trim_end();
            let start = offset + (token.len() - token.trim_start_matches(|c: char| !c.is_alphanumeric()).len());
            let core = token.trim_matches(|c: char| !c.is_alphanumeric());
            let end = start + core.len();
            let capitalized = core.chars().next().is_some_and(char::is_uppercase);
            let breaks_after = token.ends_with(|c: char| matches!(c, ',' | '.' | ';' | ':' | '!' | '?'));
            if capitalized {
                let lowered = core.to_lowercase();
                match run {
                    None if text::is_stopword(&lowered) => {}
                    None => run = Some((start, end)),
                    Some((s, _)) => run = Some((s, end)),
                }
            } else if let Some(r) = run.take() {
                spans.push(r);
            }
            if breaks_after {
                if let Some(r) = run.take() {
                    spans.push(r);
                }
            }
            offset += raw.len();
        }
        if let Some(r) = run {
            spans.push(r);
        }
        Ok(spans.first().map(|&(s, e)| context[s..e].to_string()))
    }
}

/// Nearest neighbours of the seed centroid in a static embedding table.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingExpander {
    entries: Vec<(String, Vec<f64>)>,
}

impl EmbeddingExpander {
    pub fn new(entries: Vec<(String, Vec<f64>)>) -> Self {
        EmbeddingExpander { entries }
    }

    /// Parses `term<TAB>v1 v2 ...` lines; terms may contain spaces.
    pub fn parse(source: &str) -> Result<Self, BackendError> {
        let mut entries = Vec::new();
        let mut dim = None;
        for (i, line) in source.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (term, vec) = line
                .split_once('\t')
                .ok_or_else(|| BackendError::new(format!("line {}: missing tab", i + 1)))?;
            let values: Vec<f64> = vec
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| BackendError::new(format!("line {}: {e}", i + 1)))?;
            if *dim.get_or_insert(values.len()) != values.len() || values.is_empty() {
                return Err(BackendError::new(format!("line {}: inconsistent dimension", i + 1)));
            }
            entries.push((term.trim().to_string(), values));
        }
        Ok(Self::new(entries))
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

impl InstanceExpander for EmbeddingExpander {
    fn expand(
        &self,
        seeds: &[String],
        _corpus: &dyn CorpusRetriever,
        target_count: usize,
    ) -> Result<Vec<String>, BackendError> {
        let mut taken: HashSet<String> = HashSet::new();
        let mut out: Vec<String> = Vec::new();
        for s in seeds {
            if taken.insert(s.to_lowercase()) {
                out.push(s.clone());
            }
        }
        out.truncate(target_count);

        let found: Vec<&Vec<f64>> = self
            .entries
            .iter()
            .filter(|(t, _)| taken.contains(&t.to_lowercase()))
            .map(|(_, v)| v)
            .collect();
        if found.is_empty() || out.len() >= target_count {
            return Ok(out);
        }
        let dim = found[0].len();
        let mut centroid = vec![0.0; dim];
        for v in &found {
            for (c, x) in centroid.iter_mut().zip(v.iter()) {
                *c += x / found.len() as f64;
            }
        }
        let mut candidates: Vec<(f64, &str)> = self
            .entries
            .iter()
            .filter(|(t, _)| !taken.contains(&t.to_lowercase()))
            .map(|(t, v)| (cosine(&centroid, v), t.as_str()))
            .collect();
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        for (_, term) in candidates {
            if out.len() >= target_count {
                break;
            }
            if taken.insert(term.to_lowercase()) {
                out.push(term.to_string());
            }
        }
        Ok(out)
    }
}

/// tf-idf ranking of unigrams and bigrams against a background table.
#[derive(Debug, Clone, Default)]
pub struct TfIdfTopicMiner {
    pub background: BackgroundTable,
}

impl TfIdfTopicMiner {
    pub fn new(background: BackgroundTable) -> Self {
        TfIdfTopicMiner { background }
    }
}

impl TopicMiner for TfIdfTopicMiner {
    fn mine(&self, query: &str, documents: &[String], k: usize) -> Result<Vec<String>, BackendError> {
        let mut exclude: HashSet<String> = text::words(query).into_iter().collect();
        exclude.insert(query.to_lowercase());
        Ok(text::rank_terms(documents, &self.background, &exclude, k))
    }
}
