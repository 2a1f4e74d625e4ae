//! Type hierarchy, enrichment attachments and their structural queries.
//!
//! Types are identified by slash paths (`/person/artist`). Parents are derived
//! from path prefixes, so a loaded ontology is a forest by construction; the
//! loader only has to check that every prefix is itself declared.

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OntologyError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("invalid type path {0:?}")]
    InvalidPath(String),
    #[error("duplicate type path {0}")]
    DuplicatePath(String),
    #[error("type {path} references undeclared parent {parent}")]
    DanglingParent { path: String, parent: String },
    #[error("unknown type path {0}")]
    UnknownPath(String),
    #[error("empty display name for {0}")]
    EmptyName(String),
}

pub type Result<T, E = OntologyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeNode {
    pub path: String,
    /// Surface string used in hypotheses.
    pub name: String,
    /// Explicit display name from the source document, kept for round-trips.
    pub display_name: Option<String>,
    pub parent: Option<String>,
    pub children: Vec<String>,
}

impl TypeNode {
    pub fn depth(&self) -> usize {
        path_depth(&self.path)
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

pub fn path_depth(path: &str) -> usize {
    path.split('/').skip(1).count()
}

/// Last path segment, underscores mapped to spaces, lowercased.
pub fn default_name(path: &str) -> String {
    path.rsplit('/')
        .next()
        .unwrap_or_default()
        .replace('_', " ")
        .to_lowercase()
}

fn parent_path(path: &str) -> Option<&str> {
    match path.rfind('/') {
        Some(0) | None => None,
        Some(i) => Some(&path[..i]),
    }
}

fn validate_path(path: &str) -> Result<()> {
    let ok = path.starts_with('/')
        && path[1..]
            .split('/')
            .all(|seg| !seg.is_empty() && !seg.chars().any(char::is_whitespace));
    if ok {
        Ok(())
    } else {
        Err(OntologyError::InvalidPath(path.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct OntologyRecord {
    path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    display_name: Option<String>,
}

/// The three hypothesis-type pools for a source type.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContrastSets {
    pub entailment: Vec<String>,
    pub neutral: Vec<String>,
    pub contradiction: Vec<String>,
}

/// Which siblings join the other-branch contradiction pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiblingContrast {
    #[default]
    None,
    /// Siblings of the type itself.
    Own,
    /// Siblings of the type and of each of its ancestors.
    Path,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TypeOntology {
    nodes: IndexMap<String, TypeNode>,
    roots: Vec<String>,
}

impl TypeOntology {
    /// Builds an ontology from `(path, display_name)` pairs in document order.
    pub fn from_types<I, P>(types: I) -> Result<Self>
    where
        I: IntoIterator<Item = (P, Option<String>)>,
        P: Into<String>,
    {
        let mut nodes: IndexMap<String, TypeNode> = IndexMap::new();
        for (path, display_name) in types {
            let path = path.into();
            validate_path(&path)?;
            let name = match &display_name {
                Some(d) if d.trim().is_empty() => return Err(OntologyError::EmptyName(path)),
                Some(d) => d.clone(),
                None => default_name(&path),
            };
            if nodes.contains_key(&path) {
                return Err(OntologyError::DuplicatePath(path));
            }
            let node = TypeNode {
                parent: parent_path(&path).map(str::to_string),
                path: path.clone(),
                name,
                display_name,
                children: Vec::new(),
            };
            nodes.insert(path, node);
        }

        let mut roots = Vec::new();
        let links: Vec<(String, Option<String>)> = nodes
            .values()
            .map(|n| (n.path.clone(), n.parent.clone()))
            .collect();
        for (path, parent) in links {
            match parent {
                None => roots.push(path),
                Some(parent) => match nodes.get_mut(&parent) {
                    Some(p) => p.children.push(path),
                    None => return Err(OntologyError::DanglingParent { path, parent }),
                },
            }
        }
        Ok(TypeOntology { nodes, roots })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> &[String] {
        &self.roots
    }

    pub fn contains(&self, path: &str) -> bool {
        self.nodes.contains_key(path)
    }

    pub fn node(&self, path: &str) -> Result<&TypeNode> {
        self.nodes
            .get(path)
            .ok_or_else(|| OntologyError::UnknownPath(path.to_string()))
    }

    /// Nodes in document order.
    pub fn nodes(&self) -> impl Iterator<Item = &TypeNode> {
        self.nodes.values()
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn children(&self, path: &str) -> Result<&[String]> {
        Ok(&self.node(path)?.children)
    }

    /// Proper ancestors from depth 1 down to the parent.
    pub fn ancestors(&self, path: &str) -> Result<Vec<String>> {
        let mut chain = Vec::new();
        let mut cursor = self.node(path)?.parent.as_deref();
        while let Some(p) = cursor {
            chain.push(p.to_string());
            cursor = self.node(p)?.parent.as_deref();
        }
        chain.reverse();
        Ok(chain)
    }

    /// The node itself preceded by its ancestors.
    pub fn root_path(&self, path: &str) -> Result<Vec<String>> {
        let mut chain = self.ancestors(path)?;
        chain.push(path.to_string());
        Ok(chain)
    }

    pub fn root_of<'a>(&'a self, path: &'a str) -> Result<&'a str> {
        let node = self.node(path)?;
        let end = node.path[1..].find('/').map_or(node.path.len(), |i| i + 1);
        Ok(&node.path[..end])
    }

    /// Nodes sharing the parent of `path`; depth-1 nodes are siblings of each other.
    pub fn siblings(&self, path: &str) -> Result<Vec<String>> {
        let node = self.node(path)?;
        let pool: &[String] = match &node.parent {
            Some(p) => &self.node(p)?.children,
            None => &self.roots,
        };
        Ok(pool.iter().filter(|p| **p != node.path).cloned().collect())
    }

    /// Whether `ancestor` is a proper ancestor of `path` (string-structural).
    pub fn is_proper_ancestor(ancestor: &str, path: &str) -> bool {
        path.len() > ancestor.len()
            && path.starts_with(ancestor)
            && path.as_bytes()[ancestor.len()] == b'/'
    }

    pub fn contrast_sets(&self, path: &str, siblings: SiblingContrast) -> Result<ContrastSets> {
        let root = self.root_of(path)?;
        let mut contradiction: Vec<String> = self
            .nodes
            .values()
            .filter(|n| n.depth() >= 2 && !Self::is_proper_ancestor(root, &n.path))
            .map(|n| n.path.clone())
            .collect();
        let along = match siblings {
            SiblingContrast::None => Vec::new(),
            SiblingContrast::Own => vec![path.to_string()],
            SiblingContrast::Path => {
                let mut v = self.ancestors(path)?;
                v.push(path.to_string());
                v.reverse();
                v
            }
        };
        for a in &along {
            for s in self.siblings(a)? {
                if !contradiction.contains(&s) {
                    contradiction.push(s);
                }
            }
        }
        Ok(ContrastSets {
            entailment: vec![path.to_string()],
            neutral: self.ancestors(path)?,
            contradiction,
        })
    }

    /// Parses the JSON-lines ontology format: one `{"path", "display_name"?}` per line.
    pub fn from_jsonl(source: &str) -> Result<Self> {
        let mut types = Vec::new();
        for (i, line) in source.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: OntologyRecord =
                serde_json::from_str(line).map_err(|e| OntologyError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            types.push((rec.path, rec.display_name));
        }
        Self::from_types(types)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for node in self.nodes.values() {
            let rec = OntologyRecord {
                path: node.path.clone(),
                display_name: node.display_name.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("ontology record serializes"));
            out.push('\n');
        }
        out
    }
}

pub fn load_ontology(source: &str) -> Result<TypeOntology> {
    TypeOntology::from_jsonl(source)
}

/// Instances and topics attached to one type.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TypeEnrichment {
    pub instances: Vec<String>,
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct EnrichmentRecord {
    path: String,
    instances: Vec<String>,
    topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Enrichment {
    entries: IndexMap<String, TypeEnrichment>,
}

fn dedup_by_key<F: Fn(&str) -> String>(items: Vec<String>, key: F) -> Vec<String> {
    let mut seen = HashSet::new();
    items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty() && seen.insert(key(s)))
        .collect()
}

impl Enrichment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Attaches lists to `path`, dropping blanks and duplicates (instances
    /// case-insensitively).
    pub fn insert(
        &mut self,
        ontology: &TypeOntology,
        path: &str,
        instances: Vec<String>,
        topics: Vec<String>,
    ) -> Result<()> {
        ontology.node(path)?;
        let entry = TypeEnrichment {
            instances: dedup_by_key(instances, str::to_lowercase),
            topics: dedup_by_key(topics, str::to_string),
        };
        self.entries.insert(path.to_string(), entry);
        Ok(())
    }

    pub fn get(&self, path: &str) -> Option<&TypeEnrichment> {
        self.entries.get(path)
    }

    pub fn instances(&self, path: &str) -> &[String] {
        self.entries.get(path).map_or(&[], |e| &e.instances)
    }

    pub fn topics(&self, path: &str) -> &[String] {
        self.entries.get(path).map_or(&[], |e| &e.topics)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TypeEnrichment)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_jsonl(source: &str, ontology: &TypeOntology) -> Result<Self> {
        let mut out = Enrichment::new();
        for (i, line) in source.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: EnrichmentRecord =
                serde_json::from_str(line).map_err(|e| OntologyError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if out.entries.contains_key(&rec.path) {
                return Err(OntologyError::DuplicatePath(rec.path));
            }
            out.insert(ontology, &rec.path, rec.instances, rec.topics)?;
        }
        Ok(out)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (path, e) in &self.entries {
            let rec = EnrichmentRecord {
                path: path.clone(),
                instances: e.instances.clone(),
                topics: e.topics.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("enrichment record serializes"));
            out.push('\n');
        }
        out
    }
}
