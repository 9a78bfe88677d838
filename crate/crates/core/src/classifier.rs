//! Classification track: a fully connected layer with softmax, trained on
//! frozen `(observations + hypothesis)` embeddings.
//!
//! Each input is scored independently as implausible (class 0) or plausible
//! (class 1); the hypothesis with the higher plausibility wins, ties to `H1`.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Hypothesis;
use crate::error::{Error, Result};
use crate::similarity::{check_evaluable, Prediction, Track, TrackResult};
use crate::store::{index_u32, EmbeddingRole, EmbeddingStore};
use crate::tensor::{linear_forward, softmax};

/// Learning-rate range searched for the encoders in the reference setup.
pub const LR_GRID_MIN: f64 = 1e-5;
pub const LR_GRID_MAX: f64 = 9e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Implausible = 0,
    Plausible = 1,
}

impl Class {
    fn index(self) -> usize {
        self as usize
    }
}

/// Weights of the head: a 2 x d matrix (row-major) and a bias per class.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub d: usize,
    pub weights: Vec<f64>,
    pub bias: [f64; 2],
}

impl HeadParams {
    pub fn zeros(d: usize) -> Self {
        HeadParams {
            d,
            weights: vec![0.0; 2 * d],
            bias: [0.0; 2],
        }
    }

    pub fn logits(&self, x: &[f32]) -> Result<[f64; 2]> {
        if x.len() != self.d {
            return Err(Error::Domain(format!(
                "input has dim {}, head expects {}",
                x.len(),
                self.d
            )));
        }
        linear_forward(&self.weights, self.bias, x)
    }
}

/// Uniform fan-in initialisation in `[-1/sqrt(d), 1/sqrt(d)]`, zero bias.
pub fn init_head(d: usize, seed: u64) -> Result<HeadParams> {
    if d == 0 {
        return Err(Error::Domain("head dimension must be >= 1".into()));
    }
    let bound = 1.0 / (d as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(HeadParams {
        d,
        weights: (0..2 * d).map(|_| dist.sample(&mut rng)).collect(),
        bias: [0.0; 2],
    })
}

/// Probability that `x` is plausible.
pub fn head_prob(head: &HeadParams, x: &[f32]) -> Result<f64> {
    let p = softmax(&head.logits(x)?)?;
    Ok(p[Class::Plausible.index()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<f64>,
    pub bias: [f64; 2],
}

/// Mean cross-entropy over `batch` and its exact gradient.
///
/// Weight decay is not part of the loss; the optimizer applies it.
pub fn loss_and_grad(head: &HeadParams, batch: &[(&[f32], Class)]) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let d = head.d;
    let mut grad = Gradients {
        weights: vec![0.0; 2 * d],
        bias: [0.0; 2],
    };
    let mut loss = 0.0;
    for &(x, class) in batch {
        let z = head.logits(x)?;
        let max = z[0].max(z[1]);
        let log_norm = max + ((z[0] - max).exp() + (z[1] - max).exp()).ln();
        loss += log_norm - z[class.index()];
        let p = softmax(&z)?;
        for (k, pk) in p.into_iter().enumerate() {
            let delta = pk - if k == class.index() { 1.0 } else { 0.0 };
            grad.bias[k] += delta;
            for (g, &xi) in grad.weights[k * d..(k + 1) * d].iter_mut().zip(x) {
                *g += delta * f64::from(xi);
            }
        }
    }
    let n = batch.len() as f64;
    grad.weights.iter_mut().for_each(|g| *g /= n);
    grad.bias.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// One gradient step with decoupled weight decay on the weights (not the bias):
/// `W <- W * (1 - lr * wd) - lr * dW`, `b <- b - lr * db`.
pub fn sgd_step(head: &mut HeadParams, grad: &Gradients, learning_rate: f64, weight_decay: f64) {
    let decay = 1.0 - learning_rate * weight_decay;
    for (w, g) in head.weights.iter_mut().zip(&grad.weights) {
        *w = *w * decay - learning_rate * g;
    }
    for (b, g) in head.bias.iter_mut().zip(grad.bias) {
        *b -= learning_rate * g;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub const DEFAULT_EPOCHS: usize = 3;
    pub const DEFAULT_WEIGHT_DECAY: f64 = 0.01;

    pub fn new(learning_rate: f64, batch_size: usize, seed: u64) -> Self {
        TrainConfig {
            learning_rate,
            batch_size,
            epochs: Self::DEFAULT_EPOCHS,
            weight_decay: Self::DEFAULT_WEIGHT_DECAY,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight decay must be finite and >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    /// Rejects learning rates outside `[LR_GRID_MIN, LR_GRID_MAX]`.
    pub fn check_lr_grid(&self) -> Result<()> {
        if (LR_GRID_MIN..=LR_GRID_MAX).contains(&self.learning_rate) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "learning rate {} outside [{LR_GRID_MIN:e}, {LR_GRID_MAX:e}] (pass --allow-any-lr to override)",
                self.learning_rate
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epoch_losses: Vec<f64>,
    pub wall_seconds: f64,
}

/// Two examples per labeled instance, in instance order.
fn training_examples<'a>(store: &'a EmbeddingStore, labels: &[Hypothesis]) -> Result<Vec<(&'a [f32], Class)>> {
    let mut examples = Vec::with_capacity(2 * labels.len());
    for (i, &gold) in labels.iter().enumerate() {
        let i = index_u32(i)?;
        for (role, hyp) in [
            (EmbeddingRole::ObsH1, Hypothesis::H1),
            (EmbeddingRole::ObsH2, Hypothesis::H2),
        ] {
            let class = if gold == hyp {
                Class::Plausible
            } else {
                Class::Implausible
            };
            examples.push((store.pooled(i, role)?.as_slice(), class));
        }
    }
    Ok(examples)
}

pub fn train_head(
    store: &EmbeddingStore,
    labels: &[Hypothesis],
    cfg: &TrainConfig,
) -> Result<(HeadParams, TrainHistory)> {
    train_head_from(init_head(store.dim(), cfg.seed)?, store, labels, cfg)
}

/// Trains starting from an explicit head instead of the seeded initialisation.
pub fn train_head_from(
    mut head: HeadParams,
    store: &EmbeddingStore,
    labels: &[Hypothesis],
    cfg: &TrainConfig,
) -> Result<(HeadParams, TrainHistory)> {
    cfg.validate()?;
    if head.d != store.dim() {
        return Err(Error::Domain(format!(
            "head dim {} does not match store dim {}",
            head.d,
            store.dim()
        )));
    }
    check_evaluable(store, labels, &EmbeddingRole::CLASSIFICATION)?;
    let examples = training_examples(store, labels)?;

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&j| examples[j]));
            let (loss, grad) = loss_and_grad(&head, &batch)?;
            total += loss * batch.len() as f64;
            sgd_step(&mut head, &grad, cfg.learning_rate, cfg.weight_decay);
        }
        epoch_losses.push(total / examples.len() as f64);
    }
    Ok((
        head,
        TrainHistory {
            epoch_losses,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Scores both `(observations + hypothesis)` embeddings; ties go to `H1`.
pub fn predict_clf(head: &HeadParams, emb_oh1: &[f32], emb_oh2: &[f32]) -> Result<Prediction> {
    Ok(Prediction::from_scores(
        head_prob(head, emb_oh1)?,
        head_prob(head, emb_oh2)?,
    ))
}

/// Accuracy of `head` on `store`; `wall_seconds` covers scoring only.
pub fn evaluate_clf(
    head: &HeadParams,
    store: &EmbeddingStore,
    labels: &[Hypothesis],
    keep_predictions: bool,
) -> Result<TrackResult> {
    if head.d != store.dim() {
        return Err(Error::Domain(format!(
            "head dim {} does not match store dim {}",
            head.d,
            store.dim()
        )));
    }
    check_evaluable(store, labels, &EmbeddingRole::CLASSIFICATION)?;
    let start = Instant::now();
    let predictions = (0..labels.len())
        .into_par_iter()
        .map(|i| {
            let i = index_u32(i)?;
            predict_clf(
                head,
                store.pooled(i, EmbeddingRole::ObsH1)?,
                store.pooled(i, EmbeddingRole::ObsH2)?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let wall = start.elapsed().as_secs_f64();
    Ok(TrackResult::from_predictions(
        &store.model_id,
        Track::Classification,
        predictions,
        labels,
        wall,
        keep_predictions,
    ))
}

/// Serialized form of a trained head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadFile {
    pub model_id: String,
    pub d: usize,
    #[serde(rename = "W")]
    pub weights: Vec<f64>,
    pub b: [f64; 2],
    pub train_config: TrainConfig,
    pub epoch_losses: Vec<f64>,
}

impl HeadFile {
    pub fn new(model_id: &str, head: &HeadParams, cfg: &TrainConfig, history: &TrainHistory) -> Self {
        HeadFile {
            model_id: model_id.to_string(),
            d: head.d,
            weights: head.weights.clone(),
            b: head.bias,
            train_config: *cfg,
            epoch_losses: history.epoch_losses.clone(),
        }
    }

    pub fn head(&self) -> Result<HeadParams> {
        if self.weights.len() != 2 * self.d {
            return Err(Error::Domain(format!(
                "head file has {} weights, expected 2 x {}",
                self.weights.len(),
                self.d
            )));
        }
        if self.weights.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::Domain("head file holds non-finite parameters".into()));
        }
        Ok(HeadParams {
            d: self.d,
            weights: self.weights.clone(),
            bias: self.b,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = serde_json::to_string(self).expect("head serializes");
        s.push('\n');
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Domain(format!("bad head file: {e}")))
    }
}
