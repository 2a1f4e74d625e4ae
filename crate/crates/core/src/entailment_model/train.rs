use ndarray::{Array1, Array2, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{EncoderGradients, Segments};
use super::{EntailmentModel, ModelError, Result};
use crate::nli_data::NliExample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    #[default]
    Gce,
    Ce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Decays linearly from the base rate to zero over all updates.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    /// Rescales each minibatch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
    pub batch_size: usize,
    pub seed: u64,
    /// When false only the gate, projection and head are updated.
    pub train_encoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 1e-5,
            schedule: LrSchedule::Constant,
            clip_norm: None,
            batch_size: 16,
            seed: 0,
            train_encoder: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch_size must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(ModelError::InvalidConfig("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    encoder: EncoderGradients,
    pub w_lambda: Array2<f64>,
    pub u_lambda: Array2<f64>,
    pub projection: Option<Array2<f64>>,
    pub head_weights: Array2<f64>,
    pub head_bias: Array1<f64>,
}

impl Gradients {
    fn zeros(model: &EntailmentModel) -> Self {
        Gradients {
            encoder: model.encoder.zero_gradients(),
            w_lambda: Array2::zeros(model.fusion.w_lambda.raw_dim()),
            u_lambda: Array2::zeros(model.fusion.u_lambda.raw_dim()),
            projection: model.fusion.projection.as_ref().map(|p| Array2::zeros(p.raw_dim())),
            head_weights: Array2::zeros(model.head.weights.raw_dim()),
            head_bias: Array1::zeros(3),
        }
    }

    /// Named flat views, in the order of [`EntailmentModel::tensors_mut`].
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = vec![
            ("encoder.first_segment", flat(&self.encoder.first_segment)),
            ("encoder.second_segment", flat(&self.encoder.second_segment)),
            ("encoder.first_bias", self.encoder.first_bias.as_slice().expect("contiguous")),
            ("encoder.second_bias", self.encoder.second_bias.as_slice().expect("contiguous")),
            ("fusion.w_lambda", flat(&self.w_lambda)),
            ("fusion.u_lambda", flat(&self.u_lambda)),
        ];
        if let Some(p) = &self.projection {
            out.push(("fusion.projection", flat(p)));
        }
        out.push(("head.weights", flat(&self.head_weights)));
        out.push(("head.bias", self.head_bias.as_slice().expect("contiguous")));
        out
    }
}

fn flat(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn flat_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

impl EntailmentModel {
    /// Named flat views of every trainable parameter tensor.
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = vec![
            ("encoder.first_segment", flat_mut(&mut self.encoder.first_segment)),
            ("encoder.second_segment", flat_mut(&mut self.encoder.second_segment)),
            ("encoder.first_bias", self.encoder.first_bias.as_slice_mut().expect("contiguous")),
            ("encoder.second_bias", self.encoder.second_bias.as_slice_mut().expect("contiguous")),
            ("fusion.w_lambda", flat_mut(&mut self.fusion.w_lambda)),
            ("fusion.u_lambda", flat_mut(&mut self.fusion.u_lambda)),
        ];
        if let Some(p) = &mut self.fusion.projection {
            out.push(("fusion.projection", flat_mut(p)));
        }
        out.push(("head.weights", flat_mut(&mut self.head.weights)));
        out.push(("head.bias", self.head.bias.as_slice_mut().expect("contiguous")));
        out
    }
}

fn add_outer(m: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (i, mut row) in m.rows_mut().into_iter().enumerate() {
        row.scaled_add(a[i], b);
    }
}

struct Prepared {
    context: Segments,
    topics: Option<Segments>,
    label: usize,
}

fn prepare_all(model: &EntailmentModel, examples: &[NliExample]) -> Result<Vec<Prepared>> {
    examples
        .iter()
        .map(|e| {
            let (context, topics) = model.prepare(&e.premise, &e.hypothesis, &e.topics)?;
            Ok(Prepared {
                context,
                topics,
                label: e.label.index(),
            })
        })
        .collect()
}

fn example_loss(p: f64, mode: LossMode, q: f64) -> f64 {
    match mode {
        LossMode::Gce => (1.0 - p.powf(q)) / q,
        LossMode::Ce => -p.ln(),
    }
}

/// Mean loss over `batch`, accumulating its gradient into `grads`.
fn accumulate(model: &EntailmentModel, batch: &[&Prepared], mode: LossMode, grads: &mut Gradients) -> Result<f64> {
    let n = batch.len() as f64;
    let q = model.head.q;
    let mut total = 0.0;
    for ex in batch {
        let tr = model.forward(&ex.context, ex.topics.as_ref())?;
        let p_y = tr.probs[ex.label];
        total += example_loss(p_y, mode, q);

        let coeff = match mode {
            LossMode::Gce => -p_y.powf(q),
            LossMode::Ce => 1.0,
        };
        // GCE: -p_y^q (δ - p); CE: p - δ.
        let d_out = Array1::from_shape_fn(3, |k| {
            let delta = if k == ex.label { 1.0 } else { 0.0 };
            match mode {
                LossMode::Gce => coeff * (delta - tr.probs[k]) / n,
                LossMode::Ce => (tr.probs[k] - delta) / n,
            }
        });

        let h = &tr.fused.h;
        add_outer(&mut grads.head_weights, &d_out, h);
        grads.head_bias += &d_out;
        let d_h = model.head.weights.t().dot(&d_out);

        let lambda = &tr.fused.lambda;
        let d_gate = Zip::from(&d_h)
            .and(&tr.fused.h_tilde)
            .and(lambda)
            .map_collect(|&dh, &ht, &l| dh * ht * l * (1.0 - l));
        let d_h_tilde = &d_h * lambda;
        let zero;
        let h_t = match &tr.h_t {
            Some(v) => v,
            None => {
                zero = Array1::zeros(model.dim);
                &zero
            }
        };
        add_outer(&mut grads.w_lambda, &d_gate, h_t);
        add_outer(&mut grads.u_lambda, &d_gate, &tr.h_c);
        if let Some(gp) = &mut grads.projection {
            add_outer(gp, &d_h_tilde, h_t);
        }

        let d_hc = &d_h + &model.fusion.u_lambda.t().dot(&d_gate);
        model.encoder.backward(&ex.context, &d_hc, &mut grads.encoder);
        if let Some(seg) = &ex.topics {
            let through_projection = match &model.fusion.projection {
                Some(p) => p.t().dot(&d_h_tilde),
                None => d_h_tilde.clone(),
            };
            let d_ht = through_projection + model.fusion.w_lambda.t().dot(&d_gate);
            model.encoder.backward(seg, &d_ht, &mut grads.encoder);
        }
    }
    Ok(total / n)
}

/// Mean loss over `examples` and its gradient with respect to every
/// parameter.
pub fn loss_and_gradients(model: &EntailmentModel, examples: &[NliExample], mode: LossMode) -> Result<(f64, Gradients)> {
    if examples.is_empty() {
        return Err(ModelError::EmptyInput("examples"));
    }
    let prepared = prepare_all(model, examples)?;
    let refs: Vec<&Prepared> = prepared.iter().collect();
    let mut grads = Gradients::zeros(model);
    let loss = accumulate(model, &refs, mode, &mut grads)?;
    Ok((loss, grads))
}

fn mean_loss(model: &EntailmentModel, data: &[Prepared], mode: LossMode) -> Result<f64> {
    let mut total = 0.0;
    for ex in data {
        let p = model.forward(&ex.context, ex.topics.as_ref())?.probs[ex.label];
        total += example_loss(p, mode, model.head.q);
    }
    Ok(total / data.len() as f64)
}

/// Minibatch SGD with a fixed learning rate. Returns the mean loss over all
/// examples after each epoch.
pub fn train(model: &mut EntailmentModel, examples: &[NliExample], config: &TrainConfig, mode: LossMode) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(ModelError::EmptyInput("examples"));
    }
    config.validate()?;
    model.check_shapes()?;
    let data = prepare_all(model, examples)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = Vec::with_capacity(config.epochs);
    let total_steps = config.epochs * data.len().div_ceil(config.batch_size);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &data[i]).collect();
            let mut grads = Gradients::zeros(model);
            let loss = accumulate(model, &batch, mode, &mut grads)?;
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b });
            }
            let mut lr = match config.schedule {
                LrSchedule::Constant => config.learning_rate,
                LrSchedule::Linear => config.learning_rate * (total_steps - step) as f64 / total_steps as f64,
            };
            step += 1;
            if let Some(max) = config.clip_norm {
                let norm = grads
                    .tensors()
                    .iter()
                    .filter(|(name, _)| config.train_encoder || !name.starts_with("encoder."))
                    .flat_map(|(_, g)| g.iter())
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    lr *= max / norm;
                }
            }
            for ((name, param), (_, grad)) in model.tensors_mut().into_iter().zip(grads.tensors()) {
                if !config.train_encoder && name.starts_with("encoder.") {
                    continue;
                }
                for (p, g) in param.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
        }
        let loss = mean_loss(model, &data, mode)?;
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        trace.push(loss);
    }
    Ok(trace)
}
