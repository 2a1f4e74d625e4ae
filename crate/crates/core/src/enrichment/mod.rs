//! Ontology enrichment: QA-template instance seeding, instance expansion and
//! topic mining behind pluggable backends.

mod baseline;
mod search;

use std::collections::HashSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::ontology::{Enrichment, OntologyError, TypeOntology};
use crate::text;

pub use baseline::{CapitalizedSpanQa, EmbeddingExpander, InMemoryCorpus, TfIdfTopicMiner};
pub use search::SearchServiceRetriever;

/// Error raised by an external or baseline backend.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct BackendError(pub String);

impl BackendError {
    pub fn new(msg: impl Into<String>) -> Self {
        BackendError(msg.into())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EnrichError {
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("{0} must be at least 1")]
    InvalidCount(&'static str),
    #[error("{stage} failed for {path}: {source}")]
    Backend {
        path: String,
        stage: &'static str,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

pub type Result<T, E = EnrichError> = std::result::Result<T, E>;

/// Returns at most `k` documents, deterministically for a fixed corpus.
pub trait CorpusRetriever: Send + Sync {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<String>, BackendError>;
}

/// Extractive QA: any returned span must be a contiguous substring of `context`.
pub trait QaExtractor: Send + Sync {
    fn answer(&self, question: &str, context: &str) -> Result<Option<String>, BackendError>;
}

/// Grows a seed set; output keeps every seed and has at most `target_count` items.
pub trait InstanceExpander: Send + Sync {
    fn expand(
        &self,
        seeds: &[String],
        corpus: &dyn CorpusRetriever,
        target_count: usize,
    ) -> Result<Vec<String>, BackendError>;
}

/// Mines at most `k` distinct topic terms for `query` from `documents`.
pub trait TopicMiner: Send + Sync {
    fn mine(&self, query: &str, documents: &[String], k: usize)
        -> Result<Vec<String>, BackendError>;
}

/// Answers longer than this many words are treated as extraction noise.
pub const MAX_ANSWER_WORDS: usize = 10;

/// Minimum number of documents requested when harvesting seed sentences.
pub const SEED_RETRIEVAL_DOCS: usize = 20;

pub fn build_qa_query(type_name: &str, sentence: &str) -> Result<String> {
    if type_name.trim().is_empty() {
        return Err(EnrichError::EmptyInput("type name"));
    }
    if sentence.trim().is_empty() {
        return Err(EnrichError::EmptyInput("sentence"));
    }
    Ok(format!(
        "[CLS]What is the instance of {type_name} in this sentence?[SEP]{sentence}[SEP]"
    ))
}

/// Harvests up to `n` distinct instance seeds for a type by asking the QA
/// backend about every retrieved sentence, in retrieval order.
pub fn collect_seeds(
    type_path: &str,
    ontology: &TypeOntology,
    retriever: &dyn CorpusRetriever,
    qa: &dyn QaExtractor,
    n: usize,
) -> Result<Vec<String>> {
    if n == 0 {
        return Err(EnrichError::InvalidCount("n"));
    }
    let name = &ontology.node(type_path)?.name;
    let backend = |stage| {
        move |source| EnrichError::Backend {
            path: type_path.to_string(),
            stage,
            source,
        }
    };
    let docs = retriever
        .retrieve(name, n.max(SEED_RETRIEVAL_DOCS))
        .map_err(backend("retrieval"))?;

    let mut seen = HashSet::new();
    let mut seeds = Vec::new();
    for doc in &docs {
        for sentence in text::sentences(doc) {
            let question = build_qa_query(name, sentence)?;
            let Some(answer) = qa.answer(&question, sentence).map_err(backend("qa"))? else {
                continue;
            };
            let answer = answer.trim();
            if answer.is_empty()
                || !sentence.contains(answer)
                || answer.split_whitespace().count() > MAX_ANSWER_WORDS
            {
                continue;
            }
            if seen.insert(answer.to_lowercase()) {
                seeds.push(answer.to_string());
                if seeds.len() == n {
                    return Ok(seeds);
                }
            }
        }
    }
    Ok(seeds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnrichOptions {
    pub instances_per_type: usize,
    pub topics_per_type: usize,
    pub docs_per_type: usize,
    pub seeds_per_type: usize,
}

impl Default for EnrichOptions {
    fn default() -> Self {
        EnrichOptions {
            instances_per_type: 30,
            topics_per_type: 5,
            docs_per_type: 20,
            seeds_per_type: 10,
        }
    }
}

impl EnrichOptions {
    fn validate(&self) -> Result<()> {
        for (value, name) in [
            (self.instances_per_type, "instances_per_type"),
            (self.topics_per_type, "topics_per_type"),
            (self.docs_per_type, "docs_per_type"),
            (self.seeds_per_type, "seeds_per_type"),
        ] {
            if value == 0 {
                return Err(EnrichError::InvalidCount(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct EnrichmentReport {
    pub enrichment: Enrichment,
    /// Nodes whose enrichment failed, in ontology order.
    pub failures: Vec<(String, EnrichError)>,
}

/// Enriches every node independently; a failing node is reported and skipped.
pub fn enrich_ontology(
    ontology: &TypeOntology,
    retriever: &dyn CorpusRetriever,
    qa: &dyn QaExtractor,
    expander: &dyn InstanceExpander,
    miner: &dyn TopicMiner,
    options: EnrichOptions,
) -> Result<EnrichmentReport> {
    options.validate()?;
    let paths: Vec<&str> = ontology.paths().collect();
    let results: Vec<Result<(Vec<String>, Vec<String>)>> = paths
        .par_iter()
        .map(|path| {
            enrich_node(path, ontology, retriever, qa, expander, miner, options)
        })
        .collect();

    let mut enrichment = Enrichment::new();
    let mut failures = Vec::new();
    for (path, result) in paths.into_iter().zip(results) {
        match result {
            Ok((instances, topics)) => enrichment.insert(ontology, path, instances, topics)?,
            Err(e) => failures.push((path.to_string(), e)),
        }
    }
    Ok(EnrichmentReport {
        enrichment,
        failures,
    })
}

fn enrich_node(
    path: &str,
    ontology: &TypeOntology,
    retriever: &dyn CorpusRetriever,
    qa: &dyn QaExtractor,
    expander: &dyn InstanceExpander,
    miner: &dyn TopicMiner,
    options: EnrichOptions,
) -> Result<(Vec<String>, Vec<String>)> {
    let name = &ontology.node(path)?.name;
    let backend = |stage| {
        move |source| EnrichError::Backend {
            path: path.to_string(),
            stage,
            source,
        }
    };
    let docs = retriever
        .retrieve(name, options.docs_per_type)
        .map_err(backend("retrieval"))?;
    let mut topics = miner
        .mine(name, &docs, options.topics_per_type)
        .map_err(backend("topic mining"))?;
    topics.truncate(options.topics_per_type);

    let seeds = collect_seeds(
        path,
        ontology,
        retriever,
        qa,
        options.seeds_per_type.min(options.instances_per_type),
    )?;
    let mut instances = expander
        .expand(&seeds, retriever, options.instances_per_type)
        .map_err(backend("expansion"))?;
    instances.truncate(options.instances_per_type);
    Ok((instances, topics))
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;

    struct FixedDocs(Vec<String>);

    impl CorpusRetriever for FixedDocs {
        fn retrieve(&self, _query: &str, k: usize) -> Result<Vec<String>, BackendError> {
            Ok(self.0.iter().take(k).cloned().collect())
        }
    }

    struct FailingRetriever;

    impl CorpusRetriever for FailingRetriever {
        fn retrieve(&self, query: &str, _k: usize) -> Result<Vec<String>, BackendError> {
            if query == "athlete" {
                Err(BackendError::new("index unavailable"))
            } else {
                Ok(vec!["Someone was here.".into()])
            }
        }
    }

    struct ConstantQa(&'static str);

    impl QaExtractor for ConstantQa {
        fn answer(&self, _q: &str, context: &str) -> Result<Option<String>, BackendError> {
            Ok(context.contains(self.0).then(|| self.0.to_string()))
        }
    }

    /// Answers with the first word of the sentence, cycling through whatever
    /// the retriever produced.
    struct FirstWordQa(AtomicUsize);

    impl QaExtractor for FirstWordQa {
        fn answer(&self, _q: &str, context: &str) -> Result<Option<String>, BackendError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(context.split_whitespace().next().map(str::to_string))
        }
    }

    struct FixedList(Vec<&'static str>);

    impl InstanceExpander for FixedList {
        fn expand(
            &self,
            seeds: &[String],
            _corpus: &dyn CorpusRetriever,
            target: usize,
        ) -> Result<Vec<String>, BackendError> {
            let mut out: Vec<String> = seeds.to_vec();
            for s in &self.0 {
                if out.len() >= target {
                    break;
                }
                if !out.iter().any(|o| o.eq_ignore_ascii_case(s)) {
                    out.push(s.to_string());
                }
            }
            Ok(out)
        }
    }

    impl TopicMiner for FixedList {
        fn mine(&self, _q: &str, _d: &[String], k: usize) -> Result<Vec<String>, BackendError> {
            Ok(self.0.iter().take(k).map(|s| s.to_string()).collect())
        }
    }

    fn artist_ontology() -> TypeOntology {
        TypeOntology::from_types([("/person", None), ("/person/artist", None), ("/person/athlete", None)])
            .unwrap()
    }

    #[test]
    fn qa_query_template() {
        assert_eq!(
            build_qa_query("artist", "x").unwrap(),
            "[CLS]What is the instance of artist in this sentence?[SEP]x[SEP]"
        );
        assert_eq!(build_qa_query("", "x"), Err(EnrichError::EmptyInput("type name")));
        assert_eq!(build_qa_query("movie", " "), Err(EnrichError::EmptyInput("sentence")));
    }

    #[test]
    fn qa_query_matches_movie_example() {
        let sentence = "Lepa Shandy was a Nigerian Yoruba movie that was produced by Bayowa and \
                        eventually became a very successful project.";
        let reference = format!(
            "[CLS] What is the instance of <movie> in this sentence? [SEP] {sentence} [SEP]"
        );
        // The worked example renders the slot markers and pads separators with
        // spaces; compare modulo that presentation.
        let squash = |s: &str| s.replace(['<', '>'], "").split_whitespace().collect::<String>();
        assert_eq!(squash(&build_qa_query("movie", sentence).unwrap()), squash(&reference));
    }

    #[test]
    fn seeds_are_deduplicated() {
        let o = TypeOntology::from_types([("/movie", None)]).unwrap();
        let docs = FixedDocs(vec![
            "Lepa Shandy was a Nigerian Yoruba movie. Lepa Shandy was a success.".into(),
            "Critics loved lepa shandy.".into(),
        ]);
        let seeds = collect_seeds("/movie", &o, &docs, &ConstantQa("Lepa Shandy"), 3).unwrap();
        assert_eq!(seeds, ["Lepa Shandy"]);
    }

    #[test]
    fn empty_retrieval_gives_no_seeds() {
        let o = TypeOntology::from_types([("/movie", None)]).unwrap();
        let seeds = collect_seeds("/movie", &o, &FixedDocs(vec![]), &ConstantQa("x"), 3).unwrap();
        assert!(seeds.is_empty());
    }

    #[test]
    fn seeds_stop_at_n() {
        let o = TypeOntology::from_types([("/movie", None)]).unwrap();
        let docs = FixedDocs(
            ["Alpha one.", "Beta two.", "Gamma three.", "Delta four.", "Epsilon five."]
                .map(String::from)
                .to_vec(),
        );
        let qa = FirstWordQa(AtomicUsize::new(0));
        let seeds = collect_seeds("/movie", &o, &docs, &qa, 3).unwrap();
        assert_eq!(seeds, ["Alpha", "Beta", "Gamma"]);
        assert_eq!(qa.0.load(Ordering::SeqCst), 3);
        assert_eq!(collect_seeds("/movie", &o, &docs, &qa, 0), Err(EnrichError::InvalidCount("n")));
    }

    #[test]
    fn long_or_foreign_answers_are_rejected() {
        struct Verbose;
        impl QaExtractor for Verbose {
            fn answer(&self, _q: &str, c: &str) -> Result<Option<String>, BackendError> {
                Ok(Some(if c.starts_with('A') { c.to_string() } else { "Nowhere".into() }))
            }
        }
        let o = TypeOntology::from_types([("/movie", None)]).unwrap();
        let docs = FixedDocs(vec![
            "A b c d e f g h i j k l m.".into(),
            "Here is a short one.".into(),
        ]);
        let seeds = collect_seeds("/movie", &o, &docs, &Verbose, 3).unwrap();
        assert!(seeds.is_empty());
    }

    #[test]
    fn enrichment_passes_backend_lists_through() {
        let o = TypeOntology::from_types([("/artist", None)]).unwrap();
        let docs = FixedDocs(vec!["Leonardo Da Vinci painted.".into()]);
        let report = enrich_ontology(
            &o,
            &docs,
            &ConstantQa("Leonardo Da Vinci"),
            &FixedList(vec!["Giotto", "Raphael"]),
            &FixedList(vec!["creativity", "art history", "style"]),
            EnrichOptions::default(),
        )
        .unwrap();
        assert!(report.failures.is_empty());
        assert_eq!(
            report.enrichment.instances("/artist"),
            ["Leonardo Da Vinci", "Giotto", "Raphael"]
        );
        assert_eq!(report.enrichment.topics("/artist"), ["creativity", "art history", "style"]);
    }

    #[test]
    fn short_candidate_pool_is_not_an_error() {
        let o = TypeOntology::from_types([("/railway", None)]).unwrap();
        let names: Vec<&'static str> = vec![
            "R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8", "R9", "R10", "R11",
        ];
        let docs = FixedDocs(vec!["R0 opened.".into()]);
        let report = enrich_ontology(
            &o,
            &docs,
            &ConstantQa("R0"),
            &FixedList(names),
            &FixedList(vec!["tracks"]),
            EnrichOptions::default(),
        )
        .unwrap();
        assert_eq!(report.enrichment.instances("/railway").len(), 12);
    }

    #[test]
    fn failing_node_is_reported_and_others_continue() {
        let o = artist_ontology();
        let report = enrich_ontology(
            &o,
            &FailingRetriever,
            &ConstantQa("Someone"),
            &FixedList(vec![]),
            &FixedList(vec!["t"]),
            EnrichOptions::default(),
        )
        .unwrap();
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].0, "/person/athlete");
        assert_eq!(report.enrichment.len(), 2);
        assert_eq!(report.enrichment.instances("/person"), ["Someone"]);
    }

    #[test]
    fn zero_counts_rejected() {
        let o = artist_ontology();
        let opts = EnrichOptions {
            topics_per_type: 0,
            ..EnrichOptions::default()
        };
        let err = enrich_ontology(
            &o,
            &FixedDocs(vec![]),
            &ConstantQa("x"),
            &FixedList(vec![]),
            &FixedList(vec![]),
            opts,
        )
        .unwrap_err();
        assert_eq!(err, EnrichError::InvalidCount("topics_per_type"));
    }
}
