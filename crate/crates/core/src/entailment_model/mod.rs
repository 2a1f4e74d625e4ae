//! Three-way entailment classifier over (premise, hypothesis, topics).
//!
//! The context encoding `H^c` of premise and hypothesis is fused with the
//! topic encoding `H^t` through an elementwise gate,
//! `λ = σ(W H^t + U H^c)` and `H = H^c + λ ⊙ P H^t`, and a softmax head maps
//! `H` to Entailment/Neutral/Contradiction probabilities. Training uses the
//! generalized cross-entropy `(1 - p^q) / q` or plain cross-entropy.

mod encoder;
mod train;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use encoder::{build_vocabulary, ToyEncoder};
pub use train::{loss_and_gradients, train, Gradients, LossMode, LrSchedule, TrainConfig};

/// Marker between premise and hypothesis in the joint context input.
pub const SEPARATOR: &str = "[SEP]";
/// Delimiter used to join topics before encoding.
pub const TOPIC_DELIMITER: &str = " ; ";

pub const TOY_ENCODER_ID: &str = "toy-segment-bag-v1";

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("probability {0} outside (0, 1]")]
    InvalidProbability(f64),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("unknown encoder {0:?}")]
    UnknownEncoder(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

pub trait TextEncoder: Send + Sync {
    fn dimension(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Array1<f64>>;
}

/// Anything that can score a premise/hypothesis pair. Probabilities are in
/// Entailment, Neutral, Contradiction order.
pub trait EntailmentScorer: Send + Sync {
    fn predict(&self, premise: &str, hypothesis: &str, topics: &[String]) -> Result<[f64; 3]>;
}

pub(crate) fn context_text(premise: &str, hypothesis: &str) -> Result<String> {
    if premise.trim().is_empty() {
        return Err(ModelError::EmptyInput("premise"));
    }
    if hypothesis.trim().is_empty() {
        return Err(ModelError::EmptyInput("hypothesis"));
    }
    Ok(format!("{premise} {SEPARATOR} {hypothesis}"))
}

/// Joined topics, or `None` when there are no non-blank topics.
pub(crate) fn topics_text(topics: &[String]) -> Option<String> {
    let kept: Vec<&str> = topics.iter().map(|t| t.trim()).filter(|t| !t.is_empty()).collect();
    (!kept.is_empty()).then(|| kept.join(TOPIC_DELIMITER))
}

pub fn encode_context(encoder: &dyn TextEncoder, premise: &str, hypothesis: &str) -> Result<Array1<f64>> {
    encoder.encode(&context_text(premise, hypothesis)?)
}

pub fn encode_topics(encoder: &dyn TextEncoder, topics: &[String]) -> Result<Array1<f64>> {
    match topics_text(topics) {
        Some(t) => encoder.encode(&t),
        None => Ok(Array1::zeros(encoder.dimension())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedFusionParams {
    pub w_lambda: Array2<f64>,
    pub u_lambda: Array2<f64>,
    /// Applied to `H^t` to form `H̃`; identity when absent.
    pub projection: Option<Array2<f64>>,
}

impl GatedFusionParams {
    pub fn zeros(dim: usize, projection: bool) -> Self {
        GatedFusionParams {
            w_lambda: Array2::zeros((dim, dim)),
            u_lambda: Array2::zeros((dim, dim)),
            projection: projection.then(|| Array2::eye(dim)),
        }
    }

    fn check(&self, dim: usize) -> Result<()> {
        let mats = [Some(&self.w_lambda), Some(&self.u_lambda), self.projection.as_ref()];
        for m in mats.into_iter().flatten() {
            if m.dim() != (dim, dim) {
                return Err(ModelError::Shape(format!("fusion matrix {:?}, expected ({dim}, {dim})", m.dim())));
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Fused {
    pub lambda: Array1<f64>,
    pub h_tilde: Array1<f64>,
    pub h: Array1<f64>,
}

pub(crate) fn fuse(h_c: &Array1<f64>, h_t: &Array1<f64>, params: &GatedFusionParams) -> Result<Fused> {
    let d = h_c.len();
    if h_t.len() != d {
        return Err(ModelError::Shape(format!("H^c has {d} entries, H^t has {}", h_t.len())));
    }
    params.check(d)?;
    let lambda = (params.w_lambda.dot(h_t) + params.u_lambda.dot(h_c)).mapv(sigmoid);
    let h_tilde = match &params.projection {
        Some(p) => p.dot(h_t),
        None => h_t.clone(),
    };
    let h = h_c + &(&lambda * &h_tilde);
    Ok(Fused { lambda, h_tilde, h })
}

pub fn gated_fuse(h_c: &Array1<f64>, h_t: &Array1<f64>, params: &GatedFusionParams) -> Result<Array1<f64>> {
    Ok(fuse(h_c, h_t, params)?.h)
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidProbability(p))
    }
}

pub fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidConfig(format!("q = {q} outside (0, 1]")))
    }
}

/// `Σ (1 - p_i^q) / q` over the probabilities assigned to the true labels.
pub fn gce_loss(probabilities: &[f64], q: f64) -> Result<f64> {
    check_q(q)?;
    probabilities.iter().try_fold(0.0, |acc, &p| {
        check_probability(p)?;
        Ok(acc + (1.0 - p.powf(q)) / q)
    })
}

/// `Σ -ln p_i`.
pub fn cross_entropy_loss(probabilities: &[f64]) -> Result<f64> {
    probabilities.iter().try_fold(0.0, |acc, &p| {
        check_probability(p)?;
        Ok(acc - p.ln())
    })
}

pub(crate) fn softmax3(logits: &Array1<f64>) -> [f64; 3] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    [e[0] / s, e[1] / s, e[2] / s]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    /// 3×d, rows in Entailment, Neutral, Contradiction order.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub q: f64,
    pub init_scale: f64,
    pub min_df: usize,
    pub learn_projection: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 32,
            q: 0.7,
            init_scale: 0.1,
            min_df: 2,
            learn_projection: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailmentModel {
    pub encoder_id: String,
    pub dim: usize,
    pub encoder: ToyEncoder,
    pub fusion: GatedFusionParams,
    pub head: ClassifierParams,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    pub h_c: Array1<f64>,
    pub h_t: Option<Array1<f64>>,
    pub fused: Fused,
    pub probs: [f64; 3],
}

impl EntailmentModel {
    /// Encoder embeddings start small and random; gate and head start at
    /// zero and the projection, when learned, at the identity.
    pub fn new(vocabulary: Vec<String>, config: &ModelConfig) -> Result<Self> {
        check_q(config.q)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = ToyEncoder::new(vocabulary, config.dim, config.init_scale, &mut rng)?;
        Ok(EntailmentModel {
            encoder_id: TOY_ENCODER_ID.to_string(),
            dim: config.dim,
            encoder,
            fusion: GatedFusionParams::zeros(config.dim, config.learn_projection),
            head: ClassifierParams {
                weights: Array2::zeros((3, config.dim)),
                bias: Array1::zeros(3),
                q: config.q,
            },
        })
    }

    /// Builds the vocabulary from `examples` and initializes a model.
    pub fn for_examples(examples: &[crate::nli_data::NliExample], config: &ModelConfig) -> Result<Self> {
        Self::new(build_vocabulary(examples, config.min_df), config)
    }

    pub(crate) fn forward(&self, context: &encoder::Segments, topics: Option<&encoder::Segments>) -> Result<Trace> {
        let h_c = self.encoder.forward(context)?;
        let h_t = topics.map(|t| self.encoder.forward(t)).transpose()?;
        let zero;
        let ht_ref = match &h_t {
            Some(v) => v,
            None => {
                zero = Array1::zeros(self.dim);
                &zero
            }
        };
        let fused = fuse(&h_c, ht_ref, &self.fusion)?;
        let logits = self.head.weights.dot(&fused.h) + &self.head.bias;
        let probs = softmax3(&logits);
        Ok(Trace { h_c, h_t, fused, probs })
    }

    pub(crate) fn prepare(&self, premise: &str, hypothesis: &str, topics: &[String]) -> Result<(encoder::Segments, Option<encoder::Segments>)> {
        let context = self.encoder.segments(&context_text(premise, hypothesis)?);
        let topics = topics_text(topics).map(|t| self.encoder.segments(&t));
        Ok((context, topics))
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.encoder_id != TOY_ENCODER_ID {
            return Err(ModelError::UnknownEncoder(self.encoder_id.clone()));
        }
        self.encoder.check_shapes()?;
        if self.encoder.dimension() != self.dim {
            return Err(ModelError::Shape("encoder dimension".into()));
        }
        self.fusion.check(self.dim)?;
        if self.head.weights.dim() != (3, self.dim) || self.head.bias.len() != 3 {
            return Err(ModelError::Shape("classifier head".into()));
        }
        check_q(self.head.q)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(source: &str) -> Result<Self> {
        let model: EntailmentModel = serde_json::from_str(source).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        model.check_shapes()?;
        Ok(model)
    }
}

impl EntailmentScorer for EntailmentModel {
    fn predict(&self, premise: &str, hypothesis: &str, topics: &[String]) -> Result<[f64; 3]> {
        let (context, topics) = self.prepare(premise, hypothesis, topics)?;
        Ok(self.forward(&context, topics.as_ref())?.probs)
    }
}

pub fn predict(model: &dyn EntailmentScorer, premise: &str, hypothesis: &str, topics: &[String]) -> Result<[f64; 3]> {
    model.predict(premise, hypothesis, topics)
}

/// Tab-separated `epoch\tloss` lines with a header.
pub fn loss_trace_to_tsv(trace: &[f64]) -> String {
    let mut out = String::from("epoch\tloss\n");
    for (i, l) in trace.iter().enumerate() {
        out.push_str(&format!("{}\t{l}\n", i + 1));
    }
    out
}
