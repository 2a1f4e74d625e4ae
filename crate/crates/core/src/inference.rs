//! Typing a mention by top-down entailment scoring over the ontology.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entailment_model::{EntailmentScorer, ModelError};
use crate::nli_data::{render_hypothesis, NliError};
use crate::ontology::{OntologyError, TypeOntology};
use crate::text::{self, BackgroundTable};

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("ontology is empty")]
    EmptyOntology,
    #[error("no candidates to score")]
    NoCandidates,
    #[error("span {start}..{end} does not select {surface:?} in context")]
    InvalidSpan { start: usize, end: usize, surface: String },
    #[error("mention {0:?} not found in context")]
    MentionNotFound(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hypothesis(#[from] NliError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

pub type Result<T, E = InferenceError> = std::result::Result<T, E>;

/// A mention with character offsets (not byte offsets) into its context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub context: String,
    pub surface: String,
    pub span: (usize, usize),
}

fn char_slice(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut idx = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let b0 = idx.nth(start)?;
    let b1 = if end == start { b0 } else { idx.nth(end - start - 1)? };
    Some(&s[b0..b1])
}

impl Mention {
    pub fn new(context: impl Into<String>, surface: impl Into<String>, span: (usize, usize)) -> Result<Self> {
        let m = Mention {
            context: context.into(),
            surface: surface.into(),
            span,
        };
        m.validate()?;
        Ok(m)
    }

    /// Mention at the first occurrence of `surface` in `context`.
    pub fn locate(context: &str, surface: &str) -> Result<Self> {
        let byte = context
            .find(surface)
            .filter(|_| !surface.is_empty())
            .ok_or_else(|| InferenceError::MentionNotFound(surface.to_string()))?;
        let start = context[..byte].chars().count();
        Mention::new(context, surface, (start, start + surface.chars().count()))
    }

    pub fn validate(&self) -> Result<()> {
        let (start, end) = self.span;
        match char_slice(&self.context, start, end) {
            Some(s) if s == self.surface && !s.trim().is_empty() => Ok(()),
            _ => Err(InferenceError::InvalidSpan {
                start,
                end,
                surface: self.surface.clone(),
            }),
        }
    }

    /// Context with the mention removed, for keyword extraction.
    pub fn masked_context(&self) -> String {
        let before: String = self.context.chars().take(self.span.0).collect();
        let after: String = self.context.chars().skip(self.span.1).collect();
        format!("{before} {after}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    CoarseToFine,
    Flat,
}

/// Score used to choose and accept a child during coarse-to-fine descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchScore {
    /// P(Entailment) + P(Neutral): the mention lies somewhere in the subtree.
    /// Ancestors of the true type are trained as Neutral, so P(Entailment)
    /// alone is low at every level above the answer.
    #[default]
    Subsumption,
    /// P(Entailment) alone.
    Entailment,
}

impl BranchScore {
    pub fn of(self, probs: &[f64; 3]) -> f64 {
        match self {
            BranchScore::Subsumption => probs[0] + probs[1],
            BranchScore::Entailment => probs[0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub threshold: f64,
    pub k_keywords: usize,
    pub use_topics: bool,
    pub branch_score: BranchScore,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            threshold: 0.5,
            k_keywords: 5,
            use_topics: true,
            branch_score: BranchScore::Subsumption,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(InferenceError::InvalidConfig(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if self.use_topics && self.k_keywords == 0 {
            return Err(InferenceError::InvalidConfig("k_keywords must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypePrediction {
    pub path: String,
    /// Score of each accepted node from depth 1 down to `path`.
    pub level_scores: Vec<(String, f64)>,
    pub mode: InferenceMode,
}

impl TypePrediction {
    /// The predicted path and all its ancestors, depth 1 first.
    pub fn type_set(&self) -> Vec<String> {
        path_prefixes(&self.path)
    }
}

pub(crate) fn path_prefixes(path: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for seg in path.split('/').filter(|s| !s.is_empty()) {
        cur.push('/');
        cur.push_str(seg);
        out.push(cur.clone());
    }
    out
}

/// Top-`k` context terms by tf-idf against `background`.
pub fn extract_keywords(context: &str, k: usize, background: &BackgroundTable) -> Result<Vec<String>> {
    if k == 0 {
        return Err(InferenceError::InvalidConfig("k must be at least 1".into()));
    }
    Ok(text::rank_terms(&[context], background, &HashSet::new(), k))
}

/// Keywords standing in for topics, extracted with the mention masked out.
pub fn mention_keywords(mention: &Mention, config: &InferenceConfig, background: &BackgroundTable) -> Result<Vec<String>> {
    if !config.use_topics {
        return Ok(Vec::new());
    }
    extract_keywords(&mention.masked_context(), config.k_keywords, background)
}

/// Full probability triples for each candidate, in candidate order.
pub fn score_candidates(
    model: &dyn EntailmentScorer,
    ontology: &TypeOntology,
    mention: &Mention,
    candidates: &[String],
    keywords: &[String],
) -> Result<Vec<(String, [f64; 3])>> {
    if candidates.is_empty() {
        return Err(InferenceError::NoCandidates);
    }
    candidates
        .iter()
        .map(|c| {
            let hypothesis = render_hypothesis(&mention.surface, &ontology.node(c)?.name)?;
            let probs = model.predict(&mention.context, &hypothesis, keywords)?;
            Ok((c.clone(), probs))
        })
        .collect()
}

/// Entailment probability of each candidate, in candidate order.
pub fn score_children(
    model: &dyn EntailmentScorer,
    ontology: &TypeOntology,
    mention: &Mention,
    candidates: &[String],
    keywords: &[String],
) -> Result<Vec<(String, f64)>> {
    Ok(score_candidates(model, ontology, mention, candidates, keywords)?
        .into_iter()
        .map(|(c, p)| (c, p[0]))
        .collect())
}

/// First maximum, so ties go to the earlier candidate.
fn argmax(scores: &[(String, f64)]) -> &(String, f64) {
    let mut best = &scores[0];
    for s in &scores[1..] {
        if s.1 > best.1 {
            best = s;
        }
    }
    best
}

pub fn type_mention(
    model: &dyn EntailmentScorer,
    ontology: &TypeOntology,
    mention: &Mention,
    config: &InferenceConfig,
    background: &BackgroundTable,
) -> Result<TypePrediction> {
    config.validate()?;
    if ontology.is_empty() {
        return Err(InferenceError::EmptyOntology);
    }
    mention.validate()?;
    let keywords = mention_keywords(mention, config, background)?;

    let mut level_scores: Vec<(String, f64)> = Vec::new();
    let mut candidates: Vec<String> = ontology.roots().to_vec();
    loop {
        let scored: Vec<(String, f64)> = score_candidates(model, ontology, mention, &candidates, &keywords)?
            .into_iter()
            .map(|(c, p)| (c, config.branch_score.of(&p)))
            .collect();
        let best = argmax(&scored).clone();
        let accepted = best.1 >= config.threshold;
        if accepted || level_scores.is_empty() {
            level_scores.push(best.clone());
        }
        if !accepted {
            break;
        }
        let children = ontology.children(&best.0)?;
        if children.is_empty() {
            break;
        }
        candidates = children.to_vec();
    }
    Ok(TypePrediction {
        path: level_scores.last().expect("depth-1 prediction").0.clone(),
        level_scores,
        mode: InferenceMode::CoarseToFine,
    })
}

/// Scores every node as one flat candidate list and returns the node with
/// the highest entailment probability.
pub fn type_mention_flat(
    model: &dyn EntailmentScorer,
    ontology: &TypeOntology,
    mention: &Mention,
    config: &InferenceConfig,
    background: &BackgroundTable,
) -> Result<TypePrediction> {
    config.validate()?;
    if ontology.is_empty() {
        return Err(InferenceError::EmptyOntology);
    }
    mention.validate()?;
    let keywords = mention_keywords(mention, config, background)?;
    let candidates: Vec<String> = ontology.paths().map(str::to_string).collect();
    let scored = score_children(model, ontology, mention, &candidates, &keywords)?;
    let best = argmax(&scored).clone();
    Ok(TypePrediction {
        path: best.0.clone(),
        level_scores: vec![best],
        mode: InferenceMode::Flat,
    })
}

/// Types every mention in parallel; results keep input order.
pub fn type_mentions(
    model: &dyn EntailmentScorer,
    ontology: &TypeOntology,
    mentions: &[Mention],
    config: &InferenceConfig,
    background: &BackgroundTable,
    mode: InferenceMode,
) -> Vec<Result<TypePrediction>> {
    mentions
        .par_iter()
        .map(|m| match mode {
            InferenceMode::CoarseToFine => type_mention(model, ontology, m, config, background),
            InferenceMode::Flat => type_mention_flat(model, ontology, m, config, background),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use proptest::prelude::*;

    use super::*;

    /// Looks the type name up in the hypothesis and returns a fixed
    /// entailment probability, splitting the rest evenly.
    struct Stub {
        scores: HashMap<&'static str, f64>,
    }

    impl Stub {
        fn new(pairs: &[(&'static str, f64)]) -> Self {
            Stub {
                scores: pairs.iter().copied().collect(),
            }
        }
    }

    impl EntailmentScorer for Stub {
        fn predict(&self, _premise: &str, hypothesis: &str, _topics: &[String]) -> crate::entailment_model::Result<[f64; 3]> {
            let name = hypothesis.rsplit_once(" is a").unwrap().1.trim_start_matches('n').trim();
            let e = self.scores.get(name).copied().unwrap_or(0.1);
            Ok([e, 0.0, 1.0 - e])
        }
    }

    fn tree() -> TypeOntology {
        TypeOntology::from_types(
            [
                "/person",
                "/person/artist",
                "/person/athlete",
                "/organization",
                "/organization/company",
                "/organization/sports_team",
            ]
            .map(|p| (p, None)),
        )
        .unwrap()
    }

    fn mention() -> Mention {
        Mention::locate("Yesterday Ann Lee painted a huge canvas in Paris.", "Ann Lee").unwrap()
    }

    fn literal() -> InferenceConfig {
        InferenceConfig {
            branch_score: BranchScore::Entailment,
            use_topics: false,
            ..InferenceConfig::default()
        }
    }

    #[test]
    fn mention_spans_are_character_offsets() {
        let m = Mention::locate("Café Zoë opened in Zürich", "Zürich").unwrap();
        assert_eq!(m.span, (19, 25));
        assert!(Mention::new("abc", "bc", (0, 2)).is_err());
        assert!(Mention::locate("abc", "x").is_err());
        assert_eq!(mention().masked_context(), "Yesterday   painted a huge canvas in Paris.");
    }

    #[test]
    fn keywords() {
        let bg = BackgroundTable::from_documents(["the game", "a city"]);
        assert!(extract_keywords("the of and a", 5, &bg).unwrap().is_empty());
        assert_eq!(extract_keywords("canvas canvas paint", 1, &bg).unwrap(), ["canvas"]);
        assert!(extract_keywords("x", 0, &bg).is_err());
    }

    #[test]
    fn keywords_pick_up_salient_bigram() {
        let bg = BackgroundTable::from_documents([
            "the team played in the city",
            "the company reported results",
            "the city council met on monday",
            "fans watched the game",
            "the team defeat was expected",
            "runs were scored at home",
        ]);
        let ctx = "the New York Yankees defeat the Oakland Athletics with three home runs and two more home runs";
        let kw = extract_keywords(ctx, 5, &bg).unwrap();
        assert!(kw.contains(&"home runs".to_string()), "{kw:?}");
    }

    #[test]
    fn scoring_is_pure_and_ordered() {
        let o = tree();
        let stub = Stub::new(&[("person", 0.9)]);
        let one = score_children(&stub, &o, &mention(), &["/person".into()], &[]).unwrap();
        assert_eq!(one, [("/person".to_string(), 0.9)]);
        let dup = score_children(&stub, &o, &mention(), &["/person".into(), "/person".into()], &[]).unwrap();
        assert_eq!(dup[0], dup[1]);
        assert_eq!(score_children(&stub, &o, &mention(), &[], &[]), Err(InferenceError::NoCandidates));
    }

    #[test]
    fn descends_through_accepted_levels() {
        let o = tree();
        let stub = Stub::new(&[("person", 0.9), ("organization", 0.2), ("artist", 0.8), ("athlete", 0.3)]);
        let bg = BackgroundTable::default();
        let p = type_mention(&stub, &o, &mention(), &literal(), &bg).unwrap();
        assert_eq!(p.path, "/person/artist");
        assert_eq!(
            p.level_scores,
            [("/person".to_string(), 0.9), ("/person/artist".to_string(), 0.8)]
        );
        assert_eq!(p.type_set(), ["/person", "/person/artist"]);
    }

    #[test]
    fn stops_at_coarse_type_when_children_fall_short() {
        let o = tree();
        let stub = Stub::new(&[("person", 0.9), ("artist", 0.4), ("athlete", 0.3)]);
        let p = type_mention(&stub, &o, &mention(), &literal(), &BackgroundTable::default()).unwrap();
        assert_eq!(p.path, "/person");
        assert_eq!(p.level_scores.len(), 1);
    }

    #[test]
    fn always_predicts_a_depth_one_type() {
        let o = tree();
        let stub = Stub::new(&[("person", 0.2), ("organization", 0.3)]);
        let p = type_mention(&stub, &o, &mention(), &literal(), &BackgroundTable::default()).unwrap();
        assert_eq!(p.path, "/organization");
        assert_eq!(p.level_scores, [("/organization".to_string(), 0.3)]);
    }

    #[test]
    fn ties_go_to_document_order() {
        let o = tree();
        let stub = Stub::new(&[("person", 0.7), ("organization", 0.7), ("artist", 0.6), ("athlete", 0.6)]);
        let p = type_mention(&stub, &o, &mention(), &literal(), &BackgroundTable::default()).unwrap();
        assert_eq!(p.path, "/person/artist");
    }

    #[test]
    fn single_chain() {
        let o = TypeOntology::from_types([("/a", None), ("/a/b", None)]).unwrap();
        let stub = Stub::new(&[]);
        let m = Mention::locate("x y", "x").unwrap();
        let p = type_mention(&stub, &o, &m, &literal(), &BackgroundTable::default()).unwrap();
        assert_eq!(p.path, "/a");
        let stub = Stub::new(&[("a", 0.6), ("b", 0.6)]);
        assert_eq!(type_mention(&stub, &o, &m, &literal(), &BackgroundTable::default()).unwrap().path, "/a/b");
    }

    #[test]
    fn flat_mode() {
        let o = tree();
        let stub = Stub::new(&[("person", 0.5), ("artist", 0.95), ("organization", 0.6)]);
        let p = type_mention_flat(&stub, &o, &mention(), &literal(), &BackgroundTable::default()).unwrap();
        assert_eq!(p.path, "/person/artist");
        assert_eq!(p.mode, InferenceMode::Flat);

        let single = TypeOntology::from_types([("/thing", None)]).unwrap();
        let p = type_mention_flat(&Stub::new(&[]), &single, &mention(), &literal(), &BackgroundTable::default()).unwrap();
        assert_eq!(p.path, "/thing");
    }

    #[test]
    fn modes_can_disagree() {
        let o = tree();
        let stub = Stub::new(&[("person", 0.2), ("organization", 0.6), ("artist", 0.95), ("company", 0.1)]);
        let bg = BackgroundTable::default();
        let c2f = type_mention(&stub, &o, &mention(), &literal(), &bg).unwrap();
        let flat = type_mention_flat(&stub, &o, &mention(), &literal(), &bg).unwrap();
        assert_eq!(c2f.path, "/organization");
        assert_eq!(flat.path, "/person/artist");
    }

    #[test]
    fn subsumption_score_counts_neutral() {
        assert_eq!(BranchScore::Subsumption.of(&[0.1, 0.7, 0.2]), 0.1 + 0.7);
        assert_eq!(BranchScore::Entailment.of(&[0.1, 0.7, 0.2]), 0.1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let stub = Stub::new(&[]);
        let empty = TypeOntology::from_types(Vec::<(&str, Option<String>)>::new()).unwrap();
        let bg = BackgroundTable::default();
        assert_eq!(type_mention(&stub, &empty, &mention(), &literal(), &bg), Err(InferenceError::EmptyOntology));
        let bad = InferenceConfig {
            threshold: 1.0,
            ..literal()
        };
        assert!(matches!(type_mention(&stub, &tree(), &mention(), &bad, &bg), Err(InferenceError::InvalidConfig(_))));
    }

    fn random_stub(values: &[f64]) -> Stub {
        let names = ["person", "artist", "athlete", "organization", "company", "sports team"];
        Stub::new(&names.iter().copied().zip(values.iter().copied()).collect::<Vec<_>>())
    }

    proptest! {
        #[test]
        fn predictions_are_valid_and_trace_is_monotone(values in proptest::collection::vec(0.0f64..1.0, 6), t in 0.05f64..0.95) {
            let o = tree();
            let stub = random_stub(&values);
            let config = InferenceConfig { threshold: t, ..literal() };
            let bg = BackgroundTable::default();
            let p = type_mention(&stub, &o, &mention(), &config, &bg).unwrap();
            prop_assert!(o.contains(&p.path));
            let paths: Vec<String> = p.level_scores.iter().map(|(c, _)| c.clone()).collect();
            prop_assert_eq!(paths, p.type_set());
            for (_, s) in &p.level_scores[..p.level_scores.len() - 1] {
                prop_assert!(*s >= t);
            }
            prop_assert_eq!(type_mention(&stub, &o, &mention(), &config, &bg).unwrap(), p);
        }

        #[test]
        fn monotone_rescaling_keeps_prediction(values in proptest::collection::vec(0.01f64..0.99, 6), t in 0.05f64..0.95) {
            let o = tree();
            let bg = BackgroundTable::default();
            let f = |x: f64| x * x;
            let base = type_mention(&random_stub(&values), &o, &mention(), &InferenceConfig { threshold: t, ..literal() }, &bg).unwrap();
            let squared: Vec<f64> = values.iter().map(|&v| f(v)).collect();
            let rescaled = type_mention(&random_stub(&squared), &o, &mention(), &InferenceConfig { threshold: f(t), ..literal() }, &bg).unwrap();
            prop_assert_eq!(base.path, rescaled.path);
        }
    }
}
