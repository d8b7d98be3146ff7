//! Similarity refinement: keep the `t` demonstrations whose questions are
//! closest to the target question under cosine similarity.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, Embedder};
use crate::exec;
use crate::model::Demonstration;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("embedding has no components")]
    Empty,
    #[error("embedding component {index} is not finite")]
    NonFinite { index: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("pool of {pool} cannot yield top {t}")]
    PoolTooSmall { pool: usize, t: usize },
    #[error("t must be at least 1")]
    InvalidT,
    #[error(transparent)]
    Embedding(#[from] BackendError),
}

/// Dense embedding with finite components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, RefineError> {
        if values.is_empty() {
            return Err(RefineError::Empty);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(RefineError::NonFinite { index });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn dot(&self, other: &Self) -> Result<f64, RefineError> {
        if self.dim() != other.dim() {
            return Err(RefineError::DimensionMismatch { left: self.dim(), right: other.dim() });
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    /// Unit-length copy.
    pub fn normalized(&self) -> Result<Self, RefineError> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(RefineError::ZeroVector);
        }
        Ok(Self { values: self.values.iter().map(|v| v / norm).collect() })
    }

    /// Indices of non-zero components, for sparse scoring.
    pub fn support(&self) -> Vec<(u32, f64)> {
        self.values.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i as u32, *v)).collect()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = RefineError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

/// Cosine similarity in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `a·b / (‖a‖₂ ‖b‖₂)`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<SimilarityScore, RefineError> {
    let dot = a.dot(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(RefineError::ZeroVector);
    }
    Ok(SimilarityScore((dot / (na * nb)).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub t: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { t: 5 }
    }
}

/// Heap entry ordered so the *worst* kept candidate sits on top.
#[derive(PartialEq)]
struct Ranked {
    score: f64,
    index: usize,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        // "Greater" means worse: lower score, or same score and later index.
        other.score.total_cmp(&self.score).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Indices of the `t` highest scores, best first; equal scores keep input
/// order. Bounded heap, `O(n log t)`.
pub fn top_t_indices(scores: &[f64], t: usize) -> Vec<usize> {
    let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(t + 1);
    for (index, &score) in scores.iter().enumerate() {
        heap.push(Ranked { score, index });
        if heap.len() > t {
            heap.pop();
        }
    }
    heap.into_sorted_vec().into_iter().map(|r| r.index).collect()
}

/// Score `pool` against `target` and keep the top `t`.
pub fn rank_vectors(
    target: &EmbeddingVector,
    pool: &[EmbeddingVector],
    t: usize,
) -> Result<Vec<(usize, SimilarityScore)>, RefineError> {
    if t == 0 {
        return Err(RefineError::InvalidT);
    }
    if pool.len() < t {
        return Err(RefineError::PoolTooSmall { pool: pool.len(), t });
    }
    let target = target.normalized()?;
    let scores =
        exec::map_slice(pool, |v| -> Result<f64, RefineError> { Ok(v.normalized()?.dot(&target)?.clamp(-1.0, 1.0)) })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
    Ok(top_t_indices(&scores, t).into_iter().map(|i| (i, SimilarityScore(scores[i]))).collect())
}

/// Top-`t` demonstrations by question similarity, with their scores.
pub fn rank_top_t_scored<'d>(
    demos: &'d [Demonstration],
    target_question: &str,
    embedder: &dyn Embedder,
    cfg: &RefineConfig,
) -> Result<Vec<(&'d Demonstration, SimilarityScore)>, RefineError> {
    if cfg.t == 0 {
        return Err(RefineError::InvalidT);
    }
    if demos.len() < cfg.t {
        return Err(RefineError::PoolTooSmall { pool: demos.len(), t: cfg.t });
    }
    let mut texts: Vec<&str> = demos.iter().map(Demonstration::question).collect();
    texts.push(target_question);
    let mut vectors = embedder.embed(&texts)?;
    let target = vectors.pop().ok_or(BackendError::EmptyInput)?;
    let ranked = rank_vectors(&target, &vectors, cfg.t)?;
    Ok(ranked.into_iter().map(|(i, s)| (&demos[i], s)).collect())
}

/// Top-`t` demonstrations by question similarity, best first.
pub fn rank_top_t(
    demos: &[Demonstration],
    target_question: &str,
    embedder: &dyn Embedder,
    cfg: &RefineConfig,
) -> Result<Vec<Demonstration>, RefineError> {
    Ok(rank_top_t_scored(demos, target_question, embedder, cfg)?.into_iter().map(|(d, _)| d.clone()).collect())
}
