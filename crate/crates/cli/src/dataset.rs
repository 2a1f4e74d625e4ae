use std::collections::HashSet;

use anyhow::{bail, Context, Result};
use fet_core::inference::{InferenceMode, Mention, TypePrediction};
use fet_core::synthetic::LabeledMention;
use serde::{Deserialize, Serialize};

/// One labeled mention. `span` holds character offsets into `context`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub context: String,
    pub mention: String,
    pub span: (usize, usize),
    pub gold: Vec<String>,
}

impl DatasetRecord {
    pub fn to_mention(&self) -> Result<Mention> {
        Mention::new(self.context.clone(), self.mention.clone(), self.span)
            .with_context(|| format!("record {}", self.id))
    }
}

impl From<&LabeledMention> for DatasetRecord {
    fn from(m: &LabeledMention) -> Self {
        DatasetRecord {
            id: m.id.clone(),
            context: m.mention.context.clone(),
            mention: m.mention.surface.clone(),
            span: m.mention.span,
            gold: m.gold.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub path: String,
    pub level_scores: Vec<(String, f64)>,
    pub mode: InferenceMode,
}

impl PredictionRecord {
    pub fn new(id: &str, p: TypePrediction) -> Self {
        PredictionRecord {
            id: id.to_string(),
            path: p.path,
            level_scores: p.level_scores,
            mode: p.mode,
        }
    }

    pub fn prediction(&self) -> TypePrediction {
        TypePrediction {
            path: self.path.clone(),
            level_scores: self.level_scores.clone(),
            mode: self.mode,
        }
    }
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl<T: for<'de> Deserialize<'de>>(source: &str) -> Result<Vec<T>> {
    source
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("line {}", i + 1)))
        .collect()
}

/// Parses a dataset and checks spans and id uniqueness.
pub fn load_dataset(source: &str) -> Result<Vec<DatasetRecord>> {
    let records: Vec<DatasetRecord> = from_jsonl(source)?;
    let mut ids = HashSet::new();
    for r in &records {
        if !ids.insert(r.id.as_str()) {
            bail!("duplicate record id {}", r.id);
        }
        if r.gold.is_empty() {
            bail!("record {} has no gold types", r.id);
        }
        r.to_mention()?;
    }
    Ok(records)
}

/// A record in the token-list layout shared by several public typing
/// datasets (`left_context_token`, `mention_span`, `right_context_token`,
/// `y_str`).
#[derive(Debug, Deserialize)]
struct TokenListRecord {
    #[serde(default)]
    annot_id: Option<String>,
    left_context_token: Vec<String>,
    mention_span: String,
    right_context_token: Vec<String>,
    y_str: Vec<String>,
}

/// Converts token-list records; ids default to the line number.
pub fn convert_token_lists(source: &str) -> Result<Vec<DatasetRecord>> {
    let raw: Vec<TokenListRecord> = from_jsonl(source)?;
    raw.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let left = r.left_context_token.join(" ");
            let right = r.right_context_token.join(" ");
            let mut context = left.clone();
            if !context.is_empty() {
                context.push(' ');
            }
            let start = context.chars().count();
            context.push_str(&r.mention_span);
            let end = context.chars().count();
            if !right.is_empty() {
                context.push(' ');
                context.push_str(&right);
            }
            let gold = r
                .y_str
                .iter()
                .map(|t| if t.starts_with('/') { t.clone() } else { format!("/{t}") })
                .collect();
            Ok(DatasetRecord {
                id: r.annot_id.unwrap_or_else(|| format!("{}", i + 1)),
                context,
                mention: r.mention_span,
                span: (start, end),
                gold,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip_and_validation() {
        let r = DatasetRecord {
            id: "a".into(),
            context: "Ann Lee painted".into(),
            mention: "Ann Lee".into(),
            span: (0, 7),
            gold: vec!["/person/artist".into()],
        };
        let text = to_jsonl(&[r.clone()]);
        assert_eq!(load_dataset(&text).unwrap(), [r.clone()]);
        assert!(load_dataset(&to_jsonl(&[r.clone(), r.clone()])).is_err());
        let bad = DatasetRecord { span: (1, 7), ..r };
        assert!(load_dataset(&to_jsonl(&[bad])).is_err());
    }

    #[test]
    fn token_list_conversion() {
        let line = r#"{"left_context_token": ["the", "club", "signed"], "mention_span": "Ana Díaz", "right_context_token": ["today"], "y_str": ["/person/athlete", "person"]}"#;
        let recs = convert_token_lists(line).unwrap();
        assert_eq!(recs[0].context, "the club signed Ana Díaz today");
        assert_eq!(recs[0].span, (16, 24));
        assert_eq!(recs[0].gold, ["/person/athlete", "/person"]);
        assert_eq!(recs[0].id, "1");
        recs[0].to_mention().unwrap();
    }
}
