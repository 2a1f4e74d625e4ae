//! Strict accuracy and macro/micro precision, recall and F1 over type sets.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no evaluation pairs")]
    EmptyInput,
    #[error("gold type set is empty")]
    EmptyGold,
    #[error("invalid type path {0:?}")]
    InvalidPath(String),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Lowercased path with exactly one leading slash and no empty segments.
pub fn normalize_path(path: &str) -> Result<String> {
    let segments: Vec<String> = path
        .trim()
        .split('/')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().to_lowercase())
        .collect();
    if segments.is_empty() {
        return Err(MetricsError::InvalidPath(path.to_string()));
    }
    Ok(format!("/{}", segments.join("/")))
}

fn normalize_set<I, S>(paths: I) -> Result<BTreeSet<String>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    paths.into_iter().map(|p| normalize_path(p.as_ref())).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub gold: BTreeSet<String>,
    pub predicted: BTreeSet<String>,
}

impl EvalPair {
    pub fn new<G, P, S, T>(gold: G, predicted: P) -> Result<Self>
    where
        G: IntoIterator<Item = S>,
        P: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let gold = normalize_set(gold)?;
        if gold.is_empty() {
            return Err(MetricsError::EmptyGold);
        }
        Ok(EvalPair {
            gold,
            predicted: normalize_set(predicted)?,
        })
    }

    fn overlap(&self) -> usize {
        self.gold.intersection(&self.predicted).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrecisionRecall {
    fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrecisionRecall { precision, recall, f1 }
    }
}

fn non_empty(pairs: &[EvalPair]) -> Result<()> {
    if pairs.is_empty() {
        Err(MetricsError::EmptyInput)
    } else {
        Ok(())
    }
}

pub fn strict_accuracy(pairs: &[EvalPair]) -> Result<f64> {
    non_empty(pairs)?;
    let exact = pairs.iter().filter(|p| p.gold == p.predicted).count();
    Ok(exact as f64 / pairs.len() as f64)
}

/// Per-pair precision and recall averaged over pairs. An empty prediction
/// contributes precision 0.
pub fn macro_f1(pairs: &[EvalPair]) -> Result<PrecisionRecall> {
    non_empty(pairs)?;
    let n = pairs.len() as f64;
    let (mut p, mut r) = (0.0, 0.0);
    for pair in pairs {
        let overlap = pair.overlap() as f64;
        if !pair.predicted.is_empty() {
            p += overlap / pair.predicted.len() as f64;
        }
        r += overlap / pair.gold.len() as f64;
    }
    Ok(PrecisionRecall::new(p / n, r / n))
}

/// Precision and recall from overlap and set sizes summed over pairs.
pub fn micro_f1(pairs: &[EvalPair]) -> Result<PrecisionRecall> {
    non_empty(pairs)?;
    let (mut overlap, mut predicted, mut gold) = (0usize, 0usize, 0usize);
    for pair in pairs {
        overlap += pair.overlap();
        predicted += pair.predicted.len();
        gold += pair.gold.len();
    }
    let p = if predicted == 0 { 0.0 } else { overlap as f64 / predicted as f64 };
    Ok(PrecisionRecall::new(p, overlap as f64 / gold as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    pub strict_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
}

pub fn evaluate(pairs: &[EvalPair]) -> Result<MetricsReport> {
    let macro_ = macro_f1(pairs)?;
    let micro = micro_f1(pairs)?;
    Ok(MetricsReport {
        count: pairs.len(),
        strict_accuracy: strict_accuracy(pairs)?,
        macro_precision: macro_.precision,
        macro_recall: macro_.recall,
        macro_f1: macro_.f1,
        micro_precision: micro.precision,
        micro_recall: micro.recall,
        micro_f1: micro.f1,
    })
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mentions         {}", self.count)?;
        writeln!(f, "strict accuracy  {:.4}", self.strict_accuracy)?;
        writeln!(
            f,
            "macro P/R/F1     {:.4} / {:.4} / {:.4}",
            self.macro_precision, self.macro_recall, self.macro_f1
        )?;
        write!(
            f,
            "micro P/R/F1     {:.4} / {:.4} / {:.4}",
            self.micro_precision, self.micro_recall, self.micro_f1
        )
    }
}
