use std::collections::{HashMap, HashSet};

use indexmap::IndexSet;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ModelError, Result, TextEncoder, SEPARATOR};
use crate::nli_data::NliExample;
use crate::text;

/// Trainable bag-of-embeddings encoder.
///
/// Only in-vocabulary words are pooled; others are skipped. Tokens before
/// the separator marker read from the first embedding table and tokens after
/// it from the second. Each segment is mean-pooled, shifted by
/// its own bias and squashed with `tanh`, giving `u` and `v`. A text with a
/// second segment encodes to `u ⊙ v`, otherwise to `u`. The product lets a
/// linear head compare premise and hypothesis, which a sum cannot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEncoder {
    vocabulary: IndexSet<String>,
    pub(crate) first_segment: Array2<f64>,
    pub(crate) second_segment: Array2<f64>,
    pub(crate) first_bias: Array1<f64>,
    pub(crate) second_bias: Array1<f64>,
}

/// Token ids of one input, split by segment.
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct Segments {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    /// Whether the input had a separator marker.
    pub paired: bool,
    /// Words seen, known or not.
    pub words: usize,
}

impl ToyEncoder {
    pub fn new<R: Rng + ?Sized>(vocabulary: Vec<String>, dim: usize, init_scale: f64, rng: &mut R) -> Result<Self> {
        if dim == 0 {
            return Err(ModelError::InvalidConfig("dimension must be positive".into()));
        }
        if !(init_scale.is_finite() && init_scale >= 0.0) {
            return Err(ModelError::InvalidConfig("init_scale must be finite and nonnegative".into()));
        }
        let vocab: IndexSet<String> = vocabulary.into_iter().collect();
        let normal = Normal::new(0.0, init_scale).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        let mut table = || Array2::from_shape_simple_fn((vocab.len(), dim), || normal.sample(rng));
        let first_segment = table();
        let second_segment = table();
        Ok(ToyEncoder {
            vocabulary: vocab,
            first_segment,
            second_segment,
            first_bias: Array1::zeros(dim),
            second_bias: Array1::zeros(dim),
        })
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.vocabulary.iter().map(String::as_str)
    }

    pub fn vocabulary_len(&self) -> usize {
        self.vocabulary.len()
    }

    pub(crate) fn segments(&self, text: &str) -> Segments {
        let mut out = Segments::default();
        let mut second = false;
        for raw in text.split_whitespace() {
            if raw == SEPARATOR {
                second = true;
                out.paired = true;
                continue;
            }
            for w in text::words(raw) {
                out.words += 1;
                let Some(id) = self.vocabulary.get_index_of(&w) else {
                    continue;
                };
                if second {
                    out.second.push(id);
                } else {
                    out.first.push(id);
                }
            }
        }
        out
    }

    fn pool(ids: &[usize], table: &Array2<f64>, bias: &Array1<f64>) -> Array1<f64> {
        let mut z = bias.clone();
        if !ids.is_empty() {
            let w = 1.0 / ids.len() as f64;
            for &id in ids {
                z.scaled_add(w, &table.row(id));
            }
        }
        z.mapv(f64::tanh)
    }

    fn pooled(&self, seg: &Segments) -> (Array1<f64>, Option<Array1<f64>>) {
        let u = Self::pool(&seg.first, &self.first_segment, &self.first_bias);
        let v = seg.paired.then(|| Self::pool(&seg.second, &self.second_segment, &self.second_bias));
        (u, v)
    }

    pub(crate) fn forward(&self, seg: &Segments) -> Result<Array1<f64>> {
        if seg.words == 0 {
            return Err(ModelError::EmptyInput("text"));
        }
        Ok(match self.pooled(seg) {
            (u, Some(v)) => u * v,
            (u, None) => u,
        })
    }

    /// Accumulates the gradient of a loss with respect to the encoder
    /// parameters, given its gradient `d_out` at the encoder output.
    pub(crate) fn backward(&self, seg: &Segments, d_out: &Array1<f64>, grads: &mut EncoderGradients) {
        let (u, v) = self.pooled(seg);
        let du = match &v {
            Some(v) => d_out * v,
            None => d_out.clone(),
        };
        let dz1 = du * &u.mapv(|x| 1.0 - x * x);
        Self::scatter(&seg.first, &dz1, &mut grads.first_segment, &mut grads.first_bias);
        if let Some(v) = v {
            let dz2 = (d_out * &u) * &v.mapv(|x| 1.0 - x * x);
            Self::scatter(&seg.second, &dz2, &mut grads.second_segment, &mut grads.second_bias);
        }
    }

    fn scatter(ids: &[usize], dz: &Array1<f64>, table: &mut Array2<f64>, bias: &mut Array1<f64>) {
        *bias += dz;
        if ids.is_empty() {
            return;
        }
        let w = 1.0 / ids.len() as f64;
        for &id in ids {
            table.row_mut(id).scaled_add(w, dz);
        }
    }

    pub(crate) fn zero_gradients(&self) -> EncoderGradients {
        EncoderGradients {
            first_segment: Array2::zeros(self.first_segment.raw_dim()),
            second_segment: Array2::zeros(self.second_segment.raw_dim()),
            first_bias: Array1::zeros(self.first_bias.raw_dim()),
            second_bias: Array1::zeros(self.second_bias.raw_dim()),
        }
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let d = self.first_bias.len();
        if self.second_bias.len() != d {
            return Err(ModelError::Shape("encoder biases".into()));
        }
        let v = self.vocabulary.len();
        if d == 0 {
            return Err(ModelError::Shape("encoder dimension is zero".into()));
        }
        for t in [&self.first_segment, &self.second_segment] {
            if t.dim() != (v, d) {
                return Err(ModelError::Shape(format!("embedding table {:?}, expected ({v}, {d})", t.dim())));
            }
        }
        Ok(())
    }
}

impl TextEncoder for ToyEncoder {
    fn dimension(&self) -> usize {
        self.first_bias.len()
    }

    fn encode(&self, text: &str) -> Result<Array1<f64>> {
        self.forward(&self.segments(text))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderGradients {
    pub first_segment: Array2<f64>,
    pub second_segment: Array2<f64>,
    pub first_bias: Array1<f64>,
    pub second_bias: Array1<f64>,
}

/// Vocabulary for a [`ToyEncoder`] trained on `examples`.
///
/// Premise words must occur in at least `min_df` distinct premises. Words of
/// the instance names and stopwords are left out everywhere, so names are
/// invisible to the encoder both in training and on unseen mentions.
pub fn build_vocabulary(examples: &[NliExample], min_df: usize) -> Vec<String> {
    let instance_words: HashSet<String> = examples.iter().flat_map(|e| text::words(&e.instance)).collect();
    let mut df: HashMap<String, usize> = HashMap::new();
    let mut seen_premises = HashSet::new();
    for e in examples {
        if seen_premises.insert(e.premise.as_str()) {
            let unique: HashSet<String> = text::words(&e.premise).into_iter().collect();
            for w in unique {
                *df.entry(w).or_default() += 1;
            }
        }
    }

    let mut vocab = IndexSet::new();
    for e in examples {
        for w in text::words(&e.premise) {
            if df.get(&w).copied().unwrap_or(0) >= min_df {
                vocab.insert(w);
            }
        }
        for w in text::words(&e.hypothesis) {
            vocab.insert(w);
        }
        for t in &e.topics {
            vocab.extend(text::words(t));
        }
    }
    vocab
        .into_iter()
        .filter(|w| !instance_words.contains(w) && !text::is_stopword(w))
        .collect()
}
