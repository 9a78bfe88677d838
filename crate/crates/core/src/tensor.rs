//! Vector and matrix kernels shared by both tracks.
//!
//! Embeddings are stored as `f32`; every reduction (dot products, norms,
//! means, matrix-vector products) accumulates in `f64`.

use std::ops::Deref;

use crate::error::{Error, Result};

/// A finite, non-empty embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f32>);

impl Vector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("vector must have dimension >= 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite entry at coordinate {i}")));
        }
        Ok(Vector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

impl Deref for Vector {
    type Target = [f32];

    fn deref(&self) -> &[f32] {
        &self.0
    }
}

impl TryFrom<Vec<f32>> for Vector {
    type Error = Error;

    fn try_from(values: Vec<f32>) -> Result<Self> {
        Vector::new(values)
    }
}

/// Token-level encoder output: `n` rows of dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    data: Vec<f32>,
    n_tokens: usize,
    dim: usize,
}

impl TokenMatrix {
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Domain("token rows have differing dimensions".into()));
        }
        Self::from_flat(rows.concat(), rows.len(), dim)
    }

    pub fn from_flat(data: Vec<f32>, n_tokens: usize, dim: usize) -> Result<Self> {
        if n_tokens == 0 {
            return Err(Error::Domain("token matrix has no rows".into()));
        }
        if dim == 0 {
            return Err(Error::Domain("token dimension must be >= 1".into()));
        }
        if data.len() != n_tokens * dim {
            return Err(Error::Domain(format!(
                "token matrix data length {} != {n_tokens} x {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite entry at token {} coordinate {}",
                i / dim,
                i % dim
            )));
        }
        Ok(TokenMatrix { data, n_tokens, dim })
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Sentence embedding as the arithmetic mean of the token vectors.
pub fn mean_pool(tokens: &TokenMatrix) -> Result<Vector> {
    let mut acc = vec![0f64; tokens.dim];
    for row in tokens.rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += f64::from(v);
        }
    }
    let n = tokens.n_tokens as f64;
    Vector::new(acc.into_iter().map(|s| (s / n) as f32).collect())
}

pub fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum()
}

pub fn norm(u: &[f32]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`. Zero-norm inputs are an error.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Domain(format!("dimension mismatch: {} vs {}", u.len(), v.len())));
    }
    let (uu, vv) = (dot(u, u), dot(v, v));
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::Domain("cosine of a zero-norm vector".into()));
    }
    Ok((dot(u, v) / (uu * vv).sqrt()).clamp(-1.0, 1.0))
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Domain("softmax of an empty vector".into()));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Domain("softmax of non-finite logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `W x + b` for a two-row weight matrix given row-major.
pub fn linear_forward(weights: &[f64], bias: [f64; 2], x: &[f32]) -> Result<[f64; 2]> {
    let d = x.len();
    if weights.len() != 2 * d {
        return Err(Error::Domain(format!(
            "weight matrix has {} entries, expected 2 x {d}",
            weights.len()
        )));
    }
    let mut logits = bias;
    for (k, row) in weights.chunks_exact(d).enumerate() {
        logits[k] += row.iter().zip(x).map(|(&w, &xi)| w * f64::from(xi)).sum::<f64>();
    }
    Ok(logits)
}
