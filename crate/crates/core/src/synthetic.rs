//! A small self-contained world for end-to-end runs: a 3 × 3 ontology with
//! disjoint keyword vocabularies per type, syllable-generated names, a token
//! LM that knows which type every name belongs to, and held-out mentions.

use std::collections::{BTreeSet, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::generation::{self, GenerationConfig, GenerationError, TokenId, TokenLm};
use crate::inference::Mention;
use crate::ontology::{Enrichment, TypeOntology};
use crate::seed::derive_seed;

/// `(path, keywords)`; roots first within each branch.
const TYPES: &[(&str, &[&str])] = &[
    ("/person", &["people", "born", "family", "life", "career", "childhood"]),
    ("/person/artist", &["painted", "canvas", "gallery", "sculpture", "exhibition", "portrait", "brush", "studio"]),
    ("/person/athlete", &["sprinted", "medal", "tournament", "coach", "olympic", "marathon", "training", "record"]),
    ("/person/politician", &["elected", "senate", "campaign", "minister", "parliament", "vote", "policy", "governor"]),
    ("/organization", &["founded", "headquarters", "members", "staff", "board", "chairman"]),
    ("/organization/company", &["revenue", "shares", "products", "customers", "profit", "market", "brand", "merger"]),
    ("/organization/sports_team", &["roster", "playoffs", "franchise", "fans", "defeated", "trophy", "stadium", "league"]),
    ("/organization/university", &["students", "campus", "professors", "research", "degree", "faculty", "lecture", "enrolled"]),
    ("/location", &["located", "region", "area", "population", "north", "south"]),
    ("/location/city", &["downtown", "mayor", "streets", "neighborhood", "suburbs", "residents", "transit", "skyline"]),
    ("/location/country", &["nation", "border", "capital", "economy", "national", "territory", "citizens", "independence"]),
    ("/location/river", &["flows", "banks", "tributary", "water", "bridge", "delta", "fishing", "upstream"]),
];

const FILLER: &[&str] = &[
    "the", "a", "of", "in", "and", "was", "with", "for", "on", "to", "by", "at", "from", "after", "during",
    "also", "later", "many", "year", "time", "new", "first", "known", "often", "then", "its", "their",
];

const EOS: &str = "<eos>";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmWeights {
    pub filler: f64,
    /// Keywords of the type of the most recent complete name.
    pub own_keyword: f64,
    /// Keywords of that type's parent.
    pub parent_keyword: f64,
    pub other_keyword: f64,
    /// First token of any name, before and after a name has appeared.
    pub name: f64,
    pub name_after: f64,
    /// Share of probability mass on a name's second token right after its first.
    pub continuation: f64,
    /// End-of-sentence weight grows by this much per token after `eos_after`.
    pub eos_slope: f64,
    pub eos_after: usize,
}

impl Default for LmWeights {
    fn default() -> Self {
        LmWeights {
            filler: 1.0,
            own_keyword: 3.0,
            parent_keyword: 1.5,
            other_keyword: 0.01,
            name: 1e-4,
            name_after: 1e-5,
            continuation: 0.95,
            eos_slope: 2.0,
            eos_after: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Role {
    Eos,
    Filler,
    Keyword { node: usize },
    First { last: TokenId, node: usize },
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LmNode {
    path: String,
    parent: Option<usize>,
}

/// Next-token model over filler words, type keywords and two-token names.
///
/// The most recent complete name decides which keywords are likely; before
/// any name appears only filler words (and, faintly, names) are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLm {
    vocabulary: Vec<String>,
    roles: Vec<Role>,
    nodes: Vec<LmNode>,
    pub weights: LmWeights,
}

impl SyntheticLm {
    fn active_node(&self, prefix: &[TokenId]) -> Option<(usize, usize)> {
        (1..prefix.len()).rev().find_map(|i| match self.roles[prefix[i - 1] as usize] {
            Role::First { last, node } if prefix[i] == last => Some((node, prefix.len() - i - 1)),
            _ => None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("lm serializes")
    }

    pub fn from_json(source: &str) -> Result<Self, GenerationError> {
        let lm: SyntheticLm = serde_json::from_str(source).map_err(|e| GenerationError::Lm(e.to_string()))?;
        if lm.roles.len() != lm.vocabulary.len() {
            return Err(GenerationError::Lm("roles and vocabulary differ in length".into()));
        }
        Ok(lm)
    }
}

impl TokenLm for SyntheticLm {
    fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    fn stop_tokens(&self) -> Vec<TokenId> {
        vec![0]
    }

    fn next_logits(&self, prefix: &[TokenId]) -> generation::Result<Vec<f64>> {
        let w = &self.weights;
        let active = self.active_node(prefix);
        let own = active.map(|(n, _)| n);
        let parent = own.and_then(|n| self.nodes[n].parent);
        let pending_last = prefix.last().and_then(|&t| match self.roles[t as usize] {
            Role::First { last, .. } => Some(last),
            _ => None,
        });

        let mut weights: Vec<f64> = self
            .roles
            .iter()
            .map(|role| match *role {
                Role::Eos => match active {
                    Some((_, since)) => (w.eos_slope * since.saturating_sub(w.eos_after) as f64).max(1e-6),
                    None => 1e-6,
                },
                Role::Filler => w.filler,
                Role::Keyword { node } if Some(node) == own => w.own_keyword,
                Role::Keyword { node } if Some(node) == parent => w.parent_keyword,
                Role::Keyword { .. } => w.other_keyword,
                Role::First { .. } if active.is_some() => w.name_after,
                Role::First { .. } => w.name,
                Role::Last => 1e-6,
            })
            .collect();
        if let Some(last) = pending_last {
            let rest: f64 = weights.iter().sum::<f64>() - weights[last as usize];
            weights[last as usize] = rest * w.continuation / (1.0 - w.continuation);
        }
        Ok(weights.into_iter().map(f64::ln).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMention {
    pub id: String,
    pub mention: Mention,
    pub gold: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub instances_per_type: usize,
    pub test_mentions_per_leaf: usize,
    pub topics_per_type: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            instances_per_type: 30,
            test_mentions_per_leaf: 20,
            topics_per_type: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub ontology: TypeOntology,
    pub enrichment: Enrichment,
    pub lm: SyntheticLm,
    pub test_mentions: Vec<LabeledMention>,
}

fn syllable_name<R: Rng>(rng: &mut R) -> String {
    const C: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
    const V: &[char] = &['a', 'e', 'i', 'o', 'u'];
    let mut s = String::new();
    for i in 0..2 {
        let c = *C.choose(rng).expect("nonempty");
        s.push(if i == 0 { c.to_ascii_uppercase() } else { c });
        s.push(*V.choose(rng).expect("nonempty"));
    }
    if rng.random_bool(0.5) {
        s.push(*C.choose(rng).expect("nonempty"));
    }
    s
}

/// Attempts per held-out mention before giving up on a name.
const TEST_ATTEMPTS: usize = 20;

/// Builds the world. Held-out sentences are sampled from the LM with
/// `generation` and names that never occur among the enrichment instances.
pub fn synthetic_world(config: &SyntheticConfig, generation: &GenerationConfig) -> Result<SyntheticWorld, GenerationError> {
    generation.validate()?;
    let ontology = TypeOntology::from_types(TYPES.iter().map(|(p, _)| (*p, None::<String>)))
        .expect("bundled ontology is valid");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &["synthetic-names"]));

    let mut vocabulary = vec![EOS.to_string()];
    let mut roles = vec![Role::Eos];
    for f in FILLER {
        vocabulary.push(f.to_string());
        roles.push(Role::Filler);
    }
    let mut nodes = Vec::new();
    for (i, (path, keywords)) in TYPES.iter().enumerate() {
        let parent = TYPES[..i].iter().position(|(p, _)| TypeOntology::is_proper_ancestor(p, path));
        nodes.push(LmNode {
            path: path.to_string(),
            parent,
        });
        for k in *keywords {
            vocabulary.push(k.to_string());
            roles.push(Role::Keyword { node: i });
        }
    }

    let mut taken: HashSet<String> = vocabulary.iter().map(|v| v.to_lowercase()).collect();
    let mut fresh = |rng: &mut ChaCha8Rng| loop {
        let n = syllable_name(rng);
        if taken.insert(n.to_lowercase()) {
            return n;
        }
    };

    let mut enrichment = Enrichment::new();
    let mut held_out: Vec<(usize, Vec<String>)> = Vec::new();
    for (i, (path, keywords)) in TYPES.iter().enumerate() {
        let is_leaf = path.matches('/').count() > 1;
        let n_test = if is_leaf { config.test_mentions_per_leaf * 2 } else { 0 };
        let mut train_names = Vec::new();
        let mut test_names = Vec::new();
        for j in 0..config.instances_per_type + n_test {
            let first = fresh(&mut rng);
            let last = fresh(&mut rng);
            vocabulary.push(first.clone());
            roles.push(Role::First {
                last: vocabulary.len() as TokenId,
                node: i,
            });
            vocabulary.push(last.clone());
            roles.push(Role::Last);
            let name = format!("{first} {last}");
            if j < config.instances_per_type {
                train_names.push(name);
            } else {
                test_names.push(name);
            }
        }
        let topics = keywords.iter().take(config.topics_per_type).map(|k| k.to_string()).collect();
        enrichment
            .insert(&ontology, path, train_names, topics)
            .expect("bundled types exist");
        if is_leaf {
            held_out.push((i, test_names));
        }
    }

    let lm = SyntheticLm {
        vocabulary,
        roles,
        nodes,
        weights: LmWeights::default(),
    };

    let stops: HashSet<TokenId> = lm.stop_tokens().into_iter().collect();
    let mut test_mentions = Vec::new();
    for (node, names) in held_out {
        let path = TYPES[node].0;
        let gold: Vec<String> = ontology.root_path(path).expect("bundled type");
        let mut kept = 0;
        for name in names {
            if kept == config.test_mentions_per_leaf {
                break;
            }
            for attempt in 0..TEST_ATTEMPTS {
                let seed = derive_seed(config.seed, &["synthetic-test", path, &name, &attempt.to_string()]);
                let s = generation::sample_sentence(&lm, &name, generation, &stops, seed)?;
                if !s.contains_instance() {
                    continue;
                }
                if let Ok(mention) = Mention::locate(&s.text, &name) {
                    test_mentions.push(LabeledMention {
                        id: format!("synthetic-{:04}", test_mentions.len()),
                        mention,
                        gold: gold.clone(),
                    });
                    kept += 1;
                    break;
                }
            }
        }
    }

    Ok(SyntheticWorld {
        ontology,
        enrichment,
        lm,
        test_mentions,
    })
}

/// Distinct keywords of every bundled type, for checks on disjointness.
pub fn keyword_sets() -> Vec<(String, BTreeSet<String>)> {
    TYPES
        .iter()
        .map(|(p, k)| (p.to_string(), k.iter().map(|s| s.to_string()).collect()))
        .collect()
}
