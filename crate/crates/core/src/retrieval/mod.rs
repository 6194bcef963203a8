//! Knowledge retrieval: a linear scorer over lexical features, trained with a
//! negative-sampled softmax and transferable across domains.

mod features;
mod train;

use serde::{Deserialize, Serialize};

pub use features::{
    FeatureExtractor, FeatureVector, IdfTable, PreparedText, QueryText, BIAS, FEATURE_DIM, FEATURE_NAMES,
    QUERY_SEPARATOR,
};
pub use train::{
    log_likelihood, log_likelihood_grad, sampled_candidates, train_retrieval, transfer_finetune, RetrievalHyper,
    TrainOutcome,
};

use crate::corpus::{KbId, KnowledgeBase};
use crate::det::TypeLabels;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("scorer has {got} weights, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("knowledge of sample {sample_id} is not in the knowledge base")]
    KnowledgeNotInKb { sample_id: String },
    #[error("{negatives} negatives requested but the knowledge base has only {kb_len} entries")]
    TooManyNegatives { negatives: usize, kb_len: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("knowledge id {0} out of range")]
    UnknownKbId(KbId),
    #[error("non-finite score encountered")]
    NonFinite,
    #[error("malformed scorer parameters: {0}")]
    Malformed(String),
}

/// Anything that maps a feature vector to a relevance score.
pub trait Scorer: Sync {
    fn score_features(&self, f: &FeatureVector) -> f64;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScorerMetadata {
    /// Datasets trained on, in order. A transferred scorer lists source then target.
    pub trained_on: Vec<String>,
    pub epochs: usize,
    pub seed: u64,
}

/// Weights of the linear scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub weights: Vec<f64>,
    pub metadata: ScorerMetadata,
}

const PARAMS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamsWire {
    version: u32,
    dim: usize,
    weights: Vec<f64>,
    metadata: ScorerMetadata,
}

impl ScorerParams {
    pub fn new(weights: Vec<f64>) -> Result<Self, RetrievalError> {
        let p = ScorerParams {
            weights,
            metadata: ScorerMetadata::default(),
        };
        p.check()?;
        Ok(p)
    }

    /// All-zero weights: every knowledge entry scores the same.
    pub fn zeros() -> Self {
        ScorerParams {
            weights: vec![0.0; FEATURE_DIM],
            metadata: ScorerMetadata::default(),
        }
    }

    fn check(&self) -> Result<(), RetrievalError> {
        if self.weights.len() != FEATURE_DIM {
            return Err(RetrievalError::DimensionMismatch {
                expected: FEATURE_DIM,
                got: self.weights.len(),
            });
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(RetrievalError::NonFinite);
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let wire = ParamsWire {
            version: PARAMS_VERSION,
            dim: self.weights.len(),
            weights: self.weights.clone(),
            metadata: self.metadata.clone(),
        };
        serde_json::to_string_pretty(&wire).expect("scorer params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, RetrievalError> {
        let wire: ParamsWire = serde_json::from_str(text).map_err(|e| RetrievalError::Malformed(e.to_string()))?;
        if wire.version != PARAMS_VERSION {
            return Err(RetrievalError::Malformed(format!("unsupported version {}", wire.version)));
        }
        if wire.dim != wire.weights.len() {
            return Err(RetrievalError::Malformed(format!(
                "dim {} but {} weights",
                wire.dim,
                wire.weights.len()
            )));
        }
        let p = ScorerParams {
            weights: wire.weights,
            metadata: wire.metadata,
        };
        p.check()?;
        Ok(p)
    }
}

impl Scorer for ScorerParams {
    fn score_features(&self, f: &FeatureVector) -> f64 {
        f.dot(&self.weights)
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// A knowledge base with precomputed feature inputs for every entry.
///
/// IDF statistics come from this knowledge base, so the same query scores
/// differently against different bases.
#[derive(Debug, Clone)]
pub struct KbIndex {
    kb: KnowledgeBase,
    extractor: FeatureExtractor,
    prepared: Vec<PreparedText>,
}

impl KbIndex {
    pub fn new(kb: KnowledgeBase, labels: &TypeLabels) -> Self {
        use rayon::prelude::*;
        let extractor = FeatureExtractor::for_kb(&kb, labels);
        let texts: Vec<&str> = kb.texts().collect();
        let prepared = texts.par_iter().map(|t| extractor.prepare(t)).collect();
        KbIndex { kb, extractor, prepared }
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn len(&self) -> usize {
        self.prepared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prepared.is_empty()
    }

    pub fn prepared(&self, id: KbId) -> &PreparedText {
        &self.prepared[id]
    }

    pub fn features(&self, query: &PreparedText, id: KbId) -> FeatureVector {
        self.extractor.features(query, &self.prepared[id])
    }
}

/// Score one (query, knowledge) pair.
pub fn score(
    theta: &ScorerParams,
    query: &QueryText,
    knowledge: &str,
    extractor: &FeatureExtractor,
) -> Result<f64, RetrievalError> {
    theta.check()?;
    Ok(theta.score_features(&extractor.extract(query, knowledge)))
}

/// Softmax probability of each candidate given the query.
pub fn probability(
    theta: &ScorerParams,
    query: &QueryText,
    candidates: &[&str],
    extractor: &FeatureExtractor,
) -> Result<Vec<f64>, RetrievalError> {
    theta.check()?;
    let q = extractor.prepare_query(query);
    let scores: Vec<f64> = candidates
        .iter()
        .map(|k| theta.score_features(&extractor.features(&q, &extractor.prepare(k))))
        .collect();
    Ok(softmax(&scores))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub kb_id: KbId,
    pub score: f64,
}

/// Knowledge entries ordered by descending score, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRanking {
    pub query_id: String,
    pub entries: Vec<RankedEntry>,
    /// 1-based position of the ground-truth entry, if known.
    pub gt_rank: Option<usize>,
}

impl RetrievalRanking {
    /// `scores[i]` is the score of knowledge id `i`.
    pub fn from_scores(query_id: impl Into<String>, scores: &[f64], gt: Option<KbId>) -> Result<Self, RetrievalError> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(RetrievalError::NonFinite);
        }
        if let Some(g) = gt {
            if g >= scores.len() {
                return Err(RetrievalError::UnknownKbId(g));
            }
        }
        let mut entries: Vec<RankedEntry> = scores
            .iter()
            .enumerate()
            .map(|(kb_id, &score)| RankedEntry { kb_id, score })
            .collect();
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.kb_id.cmp(&b.kb_id)));
        let gt_rank = gt.map(|g| entries.iter().position(|e| e.kb_id == g).unwrap() + 1);
        Ok(RetrievalRanking {
            query_id: query_id.into(),
            entries,
            gt_rank,
        })
    }

    /// Keep only the first `k` entries; `gt_rank` is unaffected.
    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }

    pub fn top(&self, k: usize) -> &[RankedEntry] {
        &self.entries[..k.min(self.entries.len())]
    }
}

/// Rank every entry of the indexed knowledge base for one query.
pub fn rank(
    theta: &dyn Scorer,
    query_id: &str,
    query: &QueryText,
    index: &KbIndex,
    gt: Option<KbId>,
) -> Result<RetrievalRanking, RetrievalError> {
    let q = index.extractor().prepare_query(query);
    let scores: Vec<f64> = (0..index.len())
        .map(|id| theta.score_features(&index.features(&q, id)))
        .collect();
    RetrievalRanking::from_scores(query_id, &scores, gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::KnowledgeBase;
    use proptest::prelude::*;

    #[test]
    fn softmax_is_shift_invariant_and_stable() {
        let p = softmax(&[1000.0, 1000.0, 999.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - p[1]).abs() < 1e-15);
        let q = softmax(&[0.0, 0.0, -1.0]);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((log_sum_exp(&[0.0; 4]) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn from_scores_breaks_ties_by_id() {
        let r = RetrievalRanking::from_scores("q", &[0.5, 0.9, 0.5, 0.9], Some(2)).unwrap();
        let ids: Vec<KbId> = r.entries.iter().map(|e| e.kb_id).collect();
        assert_eq!(ids, vec![1, 3, 0, 2]);
        assert_eq!(r.gt_rank, Some(4));
        assert!(RetrievalRanking::from_scores("q", &[f64::NAN], None).is_err());
        assert!(RetrievalRanking::from_scores("q", &[0.0], Some(1)).is_err());
    }

    #[test]
    fn params_roundtrip_and_dimension_check() {
        let mut p = ScorerParams::new(vec![0.5, -1.0, 2.0, 0.25, 0.0, 1.0, -0.125]).unwrap();
        p.metadata.trained_on = vec!["a".into(), "b".into()];
        let back = ScorerParams::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        assert!(matches!(
            ScorerParams::new(vec![1.0; 3]),
            Err(RetrievalError::DimensionMismatch { expected: 7, got: 3 })
        ));
        assert!(ScorerParams::from_json(r#"{"version":1,"dim":2,"weights":[1,2],"metadata":{"trained_on":[],"epochs":0,"seed":0}}"#).is_err());
        let mut bad = p.clone();
        bad.weights.pop();
        let fx = FeatureExtractor::new(IdfTable::default(), &TypeLabels::default());
        assert!(score(&bad, &QueryText::new("q", vec![]), "k", &fx).is_err());
    }

    #[test]
    fn rank_prefers_matching_entry() {
        let mut kb = KnowledgeBase::new("kb");
        for t in ["Ross is a paleontologist", "Monica cooks dinner", "Joey acts on a soap"] {
            kb.insert(t);
        }
        let idx = KbIndex::new(kb, &TypeLabels::default());
        let theta = ScorerParams::new(vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let q = QueryText::new("Who cooks dinner?", vec!["Monica".into(), "Ross".into()]);
        let r = rank(&theta, "q1", &q, &idx, Some(1)).unwrap();
        assert_eq!(r.entries[0].kb_id, 1);
        assert_eq!(r.gt_rank, Some(1));
        assert_eq!(r.entries.len(), 3);
    }

    proptest! {
        #[test]
        fn ranking_is_a_sorted_permutation(scores in prop::collection::vec(-3i32..3, 1..40), gt_seed in 0usize..1000) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let gt = gt_seed % scores.len();
            let r = RetrievalRanking::from_scores("q", &scores, Some(gt)).unwrap();
            let mut ids: Vec<KbId> = r.entries.iter().map(|e| e.kb_id).collect();
            for w in r.entries.windows(2) {
                prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].kb_id < w[1].kb_id));
            }
            ids.sort();
            prop_assert_eq!(ids, (0..scores.len()).collect::<Vec<_>>());
            let rank = r.gt_rank.unwrap();
            prop_assert!(rank >= 1 && rank <= scores.len());
            prop_assert_eq!(r.entries[rank - 1].kb_id, gt);
        }

        #[test]
        fn softmax_sums_to_one(scores in prop::collection::vec(-50.0f64..50.0, 1..30)) {
            let p = softmax(&scores);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
        }
    }
}
