//! Similarity track: pick the hypothesis whose embedding has the larger
//! cosine similarity with the combined observations.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Hypothesis;
use crate::error::{Error, Result};
use crate::store::{index_u32, EmbeddingRole, EmbeddingStore, StoreKind};
use crate::tensor::cosine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Track {
    Similarity,
    Classification,
}

/// One scored instance. For the similarity track the scores are cosines,
/// for the classification track plausibility probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub choice: Hypothesis,
    pub score_h1: f64,
    pub score_h2: f64,
}

impl Prediction {
    /// Ties go to `H1`.
    pub fn from_scores(score_h1: f64, score_h2: f64) -> Self {
        let choice = if score_h1 >= score_h2 {
            Hypothesis::H1
        } else {
            Hypothesis::H2
        };
        Prediction {
            choice,
            score_h1,
            score_h2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    pub model_id: String,
    pub track: Track,
    pub accuracy: f64,
    pub n: usize,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_instance: Option<Vec<Prediction>>,
}

impl TrackResult {
    pub(crate) fn from_predictions(
        model_id: &str,
        track: Track,
        predictions: Vec<Prediction>,
        labels: &[Hypothesis],
        wall_seconds: f64,
        keep_predictions: bool,
    ) -> Self {
        let correct = predictions
            .iter()
            .zip(labels)
            .filter(|(p, &gold)| p.choice == gold)
            .count();
        TrackResult {
            model_id: model_id.to_string(),
            track,
            accuracy: correct as f64 / labels.len() as f64,
            n: labels.len(),
            wall_seconds,
            per_instance: keep_predictions.then_some(predictions),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("TrackResult serializes");
        s.push('\n');
        s
    }
}

pub fn predict_sim(obs: &[f32], h1: &[f32], h2: &[f32]) -> Result<Prediction> {
    Ok(Prediction::from_scores(cosine(obs, h1)?, cosine(obs, h2)?))
}

/// Scores every labeled instance; `labels[i]` aligns with store instance `i`.
///
/// `wall_seconds` covers the scoring loop only.
pub fn evaluate_sim(store: &EmbeddingStore, labels: &[Hypothesis], keep_predictions: bool) -> Result<TrackResult> {
    check_evaluable(store, labels, &EmbeddingRole::SIMILARITY)?;
    let start = Instant::now();
    let predictions = (0..labels.len())
        .into_par_iter()
        .map(|i| {
            let i = index_u32(i)?;
            predict_sim(
                store.pooled(i, EmbeddingRole::ObsPair)?,
                store.pooled(i, EmbeddingRole::H1)?,
                store.pooled(i, EmbeddingRole::H2)?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let wall = start.elapsed().as_secs_f64();
    Ok(TrackResult::from_predictions(
        &store.model_id,
        Track::Similarity,
        predictions,
        labels,
        wall,
        keep_predictions,
    ))
}

pub(crate) fn check_evaluable(store: &EmbeddingStore, labels: &[Hypothesis], roles: &[EmbeddingRole]) -> Result<()> {
    if store.kind() != StoreKind::Pooled {
        return Err(Error::InvalidStore(
            "token-level store must be pooled before evaluation".into(),
        ));
    }
    if labels.is_empty() {
        return Err(Error::Domain("no labeled instances to evaluate".into()));
    }
    store.require_roles(labels.len(), roles)
}
