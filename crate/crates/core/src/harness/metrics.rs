use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::reasoning::Prediction;
use crate::retrieval::RetrievalRanking;

pub const RECALL_KS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("empty input")]
    Empty,
    #[error("ranking for query {0} has no ground-truth rank")]
    MissingGtRank(String),
    #[error("k must be at least 1")]
    InvalidK,
}

pub fn gt_ranks(rankings: &[RetrievalRanking]) -> Result<Vec<usize>, MetricError> {
    if rankings.is_empty() {
        return Err(MetricError::Empty);
    }
    rankings
        .iter()
        .map(|r| r.gt_rank.ok_or_else(|| MetricError::MissingGtRank(r.query_id.clone())))
        .collect()
}

/// Fraction of ranks at or above `k`.
pub fn recall_from_ranks(ranks: &[usize], k: usize) -> Result<f64, MetricError> {
    if k == 0 {
        return Err(MetricError::InvalidK);
    }
    if ranks.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// Lower median: for an even count the smaller of the two middle values.
pub fn median_from_ranks(ranks: &[usize]) -> Result<usize, MetricError> {
    if ranks.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    Ok(sorted[(sorted.len() - 1) / 2])
}

pub fn recall_at_k(rankings: &[RetrievalRanking], k: usize) -> Result<f64, MetricError> {
    if k == 0 {
        return Err(MetricError::InvalidK);
    }
    recall_from_ranks(&gt_ranks(rankings)?, k)
}

pub fn median_rank(rankings: &[RetrievalRanking]) -> Result<usize, MetricError> {
    median_from_ranks(&gt_ranks(rankings)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub r_at: BTreeMap<usize, f64>,
    pub mr: usize,
    pub n_queries: usize,
}

impl RetrievalMetrics {
    pub fn from_ranks(ranks: &[usize]) -> Result<Self, MetricError> {
        let mut r_at = BTreeMap::new();
        for k in RECALL_KS {
            r_at.insert(k, recall_from_ranks(ranks, k)?);
        }
        Ok(RetrievalMetrics {
            r_at,
            mr: median_from_ranks(ranks)?,
            n_queries: ranks.len(),
        })
    }

    pub fn compute(rankings: &[RetrievalRanking]) -> Result<Self, MetricError> {
        Self::from_ranks(&gt_ranks(rankings)?)
    }

    pub fn recall(&self, k: usize) -> Option<f64> {
        self.r_at.get(&k).copied()
    }
}

pub fn accuracy(predictions: &[Prediction]) -> Result<f64, MetricError> {
    if predictions.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(predictions.iter().filter(|p| p.correct).count() as f64 / predictions.len() as f64)
}
