//! Word tokenization, stopwords and tf-idf term ranking.
//!
//! Shared by the baseline topic miner (enrichment) and the test-time keyword
//! extractor (inference), so that train-time topics and test-time keywords
//! are produced by the same scoring rule.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any",
    "are", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few",
    "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its",
    "itself", "just", "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of",
    "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own",
    "same", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs",
    "them", "themselves", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.binary_search(&word).is_ok()
}

fn is_clause_break(c: char) -> bool {
    matches!(c, '.' | ',' | ';' | ':' | '!' | '?' | '(' | ')' | '"' | '[' | ']')
}

fn normalize_word(raw: &str) -> Option<String> {
    let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_lowercase())
    }
}

/// Lowercased words with surrounding punctuation stripped.
pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace().filter_map(normalize_word).collect()
}

/// Words grouped into clauses; bigrams never cross a clause boundary.
pub fn clauses(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for raw in text.split_whitespace() {
        let ends_clause = raw.chars().last().is_some_and(is_clause_break);
        let starts_clause = raw.chars().next().is_some_and(is_clause_break);
        if starts_clause && !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
        if let Some(w) = normalize_word(raw) {
            current.push(w);
        }
        if ends_clause && !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Splits on sentence-final punctuation followed by whitespace.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|(_, n)| n.is_whitespace()) {
            let end = i + c.len_utf8();
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

/// Case-insensitive word-sequence containment.
pub fn contains_word_sequence(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && haystack.len() >= needle.len()
        && haystack.windows(needle.len()).any(|w| w == needle)
}

fn eligible(word: &str) -> bool {
    !is_stopword(word) && word.chars().any(char::is_alphabetic)
}

/// Unigram and bigram candidates of one clause, in order of occurrence.
fn clause_terms(clause: &[String]) -> Vec<String> {
    let mut terms = Vec::new();
    for (i, w) in clause.iter().enumerate() {
        if !eligible(w) {
            continue;
        }
        terms.push(w.clone());
        if let Some(next) = clause.get(i + 1) {
            if eligible(next) {
                terms.push(format!("{w} {next}"));
            }
        }
    }
    terms
}

/// Document frequencies of unigrams and bigrams over a background collection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BackgroundTable {
    pub documents: usize,
    pub df: BTreeMap<String, usize>,
}

impl BackgroundTable {
    pub fn from_documents<I, S>(docs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut table = BackgroundTable::default();
        for doc in docs {
            table.documents += 1;
            let seen: HashSet<String> = clauses(doc.as_ref())
                .iter()
                .flat_map(|c| clause_terms(c))
                .collect();
            for term in seen {
                *table.df.entry(term).or_default() += 1;
            }
        }
        table
    }

    pub fn idf(&self, term: &str) -> f64 {
        let df = self.df.get(term).copied().unwrap_or(0);
        ((self.documents as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
    }
}

/// Ranks unigram/bigram terms of `texts` by tf-idf against `background`.
///
/// Stopwords, tokens without letters and any term in `exclude` (or containing
/// an excluded word) are skipped. Ties keep first-occurrence order.
pub fn rank_terms<S: AsRef<str>>(
    texts: &[S],
    background: &BackgroundTable,
    exclude: &HashSet<String>,
    k: usize,
) -> Vec<String> {
    let mut order: Vec<String> = Vec::new();
    let mut tf: HashMap<String, usize> = HashMap::new();
    for text in texts {
        for clause in clauses(text.as_ref()) {
            for term in clause_terms(&clause) {
                if exclude.contains(&term) || term.split(' ').any(|w| exclude.contains(w)) {
                    continue;
                }
                let count = tf.entry(term.clone()).or_insert(0);
                if *count == 0 {
                    order.push(term);
                }
                *count += 1;
            }
        }
    }
    let mut scored: Vec<(usize, f64, String)> = order
        .into_iter()
        .enumerate()
        .map(|(pos, term)| {
            let score = tf[&term] as f64 * background.idf(&term);
            (pos, score, term)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(_, _, t)| t).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopword_list_is_sorted() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, STOPWORDS);
    }

    #[test]
    fn words_strip_punctuation() {
        assert_eq!(words("Hello, World! it's 7-3."), vec!["hello", "world", "it's", "7-3"]);
    }

    #[test]
    fn clauses_split_on_punctuation() {
        let c = clauses("final game, the New York Yankees. home runs");
        assert_eq!(c.len(), 3);
        assert_eq!(c[1], vec!["the", "new", "york", "yankees"]);
    }

    #[test]
    fn bigrams_skip_stopwords() {
        let terms = clause_terms(&words("the new york yankees of oakland"));
        assert_eq!(
            terms,
            vec!["new", "new york", "york", "york yankees", "yankees", "oakland"]
        );
    }

    #[test]
    fn idf_of_unseen_term_is_maximal() {
        let bg = BackgroundTable::from_documents(["red apple", "red pear"]);
        assert!(bg.idf("banana") > bg.idf("apple"));
        assert!(bg.idf("apple") > bg.idf("red"));
    }

    #[test]
    fn sentence_split() {
        assert_eq!(
            sentences("It won 7-3. Then it rained! Version 2.0 shipped"),
            vec!["It won 7-3.", "Then it rained!", "Version 2.0 shipped"]
        );
    }

    #[test]
    fn word_sequence_containment() {
        let hay = words("the influence of Leonardo da Vinci today");
        assert!(contains_word_sequence(&hay, &words("leonardo DA vinci")));
        assert!(!contains_word_sequence(&hay, &words("da leonardo")));
        assert!(!contains_word_sequence(&hay, &[]));
    }
}
