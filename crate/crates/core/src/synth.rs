//! Synthetic embedding stores with a controllable amount of task signal.
//!
//! Stand-ins for real encoder output when exercising both tracks end to end
//! without a model runtime.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::Hypothesis;
use crate::error::Result;
use crate::store::{Embedding, EmbeddingRole, EmbeddingStore, StoreKind};
use crate::tensor::TokenMatrix;

/// Geometry of one synthetic "encoder".
///
/// Observation embeddings cluster around a shared mean direction. The
/// correct hypothesis sits at `correct_angle` (radians) from its
/// observations, the wrong one at `wrong_angle`, each jittered by Gaussian
/// noise of scale `angle_noise`. More noise means a weaker signal for both
/// tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEncoder {
    pub model_id: String,
    pub dim: usize,
    pub correct_angle: f64,
    pub wrong_angle: f64,
    pub angle_noise: f64,
    /// Weight of the shared mean direction in each observation embedding.
    pub anisotropy: f64,
    /// Isotropic noise added to every stored coordinate.
    pub coord_noise: f64,
    /// Fixes the shared mean direction; splits drawn with different seeds
    /// from the same encoder share it.
    pub model_seed: u64,
}

impl SyntheticEncoder {
    pub fn new(model_id: impl Into<String>, dim: usize, angle_noise: f64, model_seed: u64) -> Self {
        SyntheticEncoder {
            model_id: model_id.into(),
            dim,
            correct_angle: 0.9,
            wrong_angle: 1.3,
            angle_noise,
            anisotropy: 1.5,
            coord_noise: 0.02,
            model_seed,
        }
    }

    fn mean_direction(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.model_seed);
        unit(gaussian(&mut rng, self.dim))
    }

    /// A pooled store with all five roles for `n` instances, plus gold labels.
    pub fn generate(&self, n: usize, split_seed: u64) -> Result<(EmbeddingStore, Vec<Hypothesis>)> {
        let mu = self.mean_direction();
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
        let mut store = EmbeddingStore::new(self.model_id.clone(), self.dim, StoreKind::Pooled)?;
        store.created_by = "abduct-rank synth".into();
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let g = gaussian(&mut rng, self.dim);
            let obs = unit(
                mu.iter()
                    .zip(&g)
                    .map(|(m, z)| self.anisotropy * m + z / (self.dim as f64).sqrt())
                    .collect(),
            );
            let mut angle = |center: f64| {
                let a: f64 = center + self.angle_noise * rng.sample::<f64, _>(StandardNormal);
                a.abs().min(std::f64::consts::PI)
            };
            let (phi, psi) = (angle(self.correct_angle), angle(self.wrong_angle));
            let correct = rotate_away(&obs, phi, &mut rng);
            let wrong = rotate_away(&obs, psi, &mut rng);
            let gold = if rng.random_bool(0.5) {
                Hypothesis::H1
            } else {
                Hypothesis::H2
            };
            let (h1, h2) = match gold {
                Hypothesis::H1 => (correct, wrong),
                Hypothesis::H2 => (wrong, correct),
            };
            // mean pooling over two observation sentences and one hypothesis
            let joint = |h: &[f64]| -> Vec<f64> { obs.iter().zip(h).map(|(o, h)| (2.0 * o + h) / 3.0).collect() };
            let i = i as u32;
            let mut put = |role, v: Vec<f64>, rng: &mut ChaCha8Rng| {
                let noisy = v
                    .iter()
                    .map(|x| (x + self.coord_noise * rng.sample::<f64, _>(StandardNormal)) as f32)
                    .collect();
                store.insert_pooled(i, role, noisy)
            };
            put(EmbeddingRole::ObsPair, obs.clone(), &mut rng)?;
            put(EmbeddingRole::H1, h1.clone(), &mut rng)?;
            put(EmbeddingRole::H2, h2.clone(), &mut rng)?;
            put(EmbeddingRole::ObsH1, joint(&h1), &mut rng)?;
            put(EmbeddingRole::ObsH2, joint(&h2), &mut rng)?;
            labels.push(gold);
        }
        Ok((store, labels))
    }
}

/// Two Gaussian clusters along a hidden direction for the classification
/// roles only: plausible inputs centred at `+margin * sigma`, implausible at
/// `-margin * sigma`. Returns the store, labels and the generating direction.
pub fn gaussian_clusters(
    n: usize,
    dim: usize,
    margin: f64,
    seed: u64,
    direction_seed: u64,
) -> Result<(EmbeddingStore, Vec<Hypothesis>, Vec<f64>)> {
    let direction = unit(gaussian(&mut ChaCha8Rng::seed_from_u64(direction_seed), dim));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = EmbeddingStore::new("clusters", dim, StoreKind::Pooled)?;
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let gold = if rng.random_bool(0.5) {
            Hypothesis::H1
        } else {
            Hypothesis::H2
        };
        for (role, hyp) in [
            (EmbeddingRole::ObsH1, Hypothesis::H1),
            (EmbeddingRole::ObsH2, Hypothesis::H2),
        ] {
            let sign = if hyp == gold { 1.0 } else { -1.0 };
            let v = direction
                .iter()
                .map(|d| (sign * margin * d + rng.sample::<f64, _>(StandardNormal)) as f32)
                .collect();
            store.insert_pooled(i as u32, role, v)?;
        }
        labels.push(gold);
    }
    Ok((store, labels, direction))
}

/// Token-level store with random row counts in `1..=max_tokens`.
pub fn token_store(model_id: &str, n: usize, dim: usize, max_tokens: usize, seed: u64) -> Result<EmbeddingStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = EmbeddingStore::new(model_id, dim, StoreKind::Token)?;
    for i in 0..n {
        for role in EmbeddingRole::ALL {
            let rows = rng.random_range(1..=max_tokens);
            let data = (0..rows * dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
                .collect();
            store.insert(
                i as u32,
                role,
                Embedding::Token(TokenMatrix::from_flat(data, rows, dim)?),
            )?;
        }
    }
    Ok(store)
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Unit vector at `angle` from unit vector `base`, in a random direction.
fn rotate_away(base: &[f64], angle: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut u = gaussian(rng, base.len());
    let along: f64 = u.iter().zip(base).map(|(a, b)| a * b).sum();
    u.iter_mut().zip(base).for_each(|(x, b)| *x -= along * b);
    let u = unit(u);
    base.iter()
        .zip(&u)
        .map(|(b, p)| angle.cos() * b + angle.sin() * p)
        .collect()
}
