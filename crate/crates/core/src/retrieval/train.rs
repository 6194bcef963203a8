use rand::seq::index;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{log_sum_exp, softmax, FeatureVector, KbIndex, QueryText, RetrievalError, ScorerParams, FEATURE_DIM};
use crate::corpus::{Dataset, KbId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Negatives drawn per training query.
    pub negatives: usize,
    pub batch_size: usize,
    /// Set by the caller; experiment configs derive it from the run seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for RetrievalHyper {
    fn default() -> Self {
        RetrievalHyper {
            epochs: 10,
            learning_rate: 0.5,
            negatives: 31,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl RetrievalHyper {
    fn validate(&self) -> Result<(), RetrievalError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(RetrievalError::InvalidHyper(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(RetrievalError::InvalidHyper("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ScorerParams,
    /// Mean negative log-likelihood on a fixed negative draw: entry 0 at the
    /// initial parameters, entry `e` after epoch `e`.
    pub loss_trace: Vec<f64>,
}

/// Log-probability of candidate `gt` under the softmax over `candidates`.
pub fn log_likelihood(weights: &[f64], candidates: &[FeatureVector], gt: usize) -> f64 {
    let scores: Vec<f64> = candidates.iter().map(|f| f.dot(weights)).collect();
    scores[gt] - log_sum_exp(&scores)
}

/// Gradient of [`log_likelihood`] with respect to the weights.
pub fn log_likelihood_grad(weights: &[f64], candidates: &[FeatureVector], gt: usize) -> Vec<f64> {
    let scores: Vec<f64> = candidates.iter().map(|f| f.dot(weights)).collect();
    let p = softmax(&scores);
    let mut g = candidates[gt].0.to_vec();
    for (f, pj) in candidates.iter().zip(&p) {
        for (gd, fd) in g.iter_mut().zip(&f.0) {
            *gd -= pj * fd;
        }
    }
    g
}

/// Ground truth followed by `m` distinct negatives drawn uniformly from the
/// rest of the knowledge base.
pub fn sampled_candidates(rng: &mut ChaCha8Rng, kb_len: usize, gt: KbId, m: usize) -> Vec<KbId> {
    let mut out = Vec::with_capacity(m + 1);
    out.push(gt);
    for i in index::sample(rng, kb_len - 1, m).into_iter() {
        out.push(if i >= gt { i + 1 } else { i });
    }
    out
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

struct Prepared {
    queries: Vec<super::PreparedText>,
    gts: Vec<KbId>,
}

fn prepare(train: &Dataset, index: &KbIndex, hyper: &RetrievalHyper) -> Result<Prepared, RetrievalError> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(RetrievalError::EmptyTrainingSet);
    }
    if hyper.negatives >= index.len() {
        return Err(RetrievalError::TooManyNegatives {
            negatives: hyper.negatives,
            kb_len: index.len(),
        });
    }
    let gts = train
        .samples
        .iter()
        .map(|s| {
            index.kb().lookup(&s.knowledge).ok_or_else(|| RetrievalError::KnowledgeNotInKb {
                sample_id: s.sample_id.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let queries = train
        .samples
        .par_iter()
        .map(|s| index.extractor().prepare_query(&QueryText::from_sample(s)))
        .collect();
    Ok(Prepared { queries, gts })
}

fn candidate_features(index: &KbIndex, query: &super::PreparedText, ids: &[KbId]) -> Vec<FeatureVector> {
    ids.iter().map(|&id| index.features(query, id)).collect()
}

fn mean_nll(weights: &[f64], sets: &[Vec<FeatureVector>]) -> f64 {
    let total: f64 = sets.par_iter().map(|c| -log_likelihood(weights, c, 0)).sum();
    total / sets.len() as f64
}

/// Maximise the sampled-softmax log-likelihood of the ground-truth knowledge
/// with mini-batch gradient ascent, starting from `theta0`.
pub fn train_retrieval(
    theta0: &ScorerParams,
    train: &Dataset,
    index: &KbIndex,
    hyper: &RetrievalHyper,
) -> Result<TrainOutcome, RetrievalError> {
    ScorerParams::new(theta0.weights.clone())?;
    let prep = prepare(train, index, hyper)?;
    let n = prep.gts.len();

    let mut eval_rng = epoch_rng(hyper.seed, usize::MAX - 1);
    let eval_ids: Vec<Vec<KbId>> = prep
        .gts
        .iter()
        .map(|&g| sampled_candidates(&mut eval_rng, index.len(), g, hyper.negatives))
        .collect();
    let eval_sets: Vec<Vec<FeatureVector>> = eval_ids
        .par_iter()
        .zip(&prep.queries)
        .map(|(ids, q)| candidate_features(index, q, ids))
        .collect();

    let mut w = theta0.weights.clone();
    let mut trace = vec![mean_nll(&w, &eval_sets)];
    for epoch in 0..hyper.epochs {
        let mut rng = epoch_rng(hyper.seed, epoch);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let draws: Vec<Vec<KbId>> = order
            .iter()
            .map(|&i| sampled_candidates(&mut rng, index.len(), prep.gts[i], hyper.negatives))
            .collect();
        for (batch, batch_ids) in order.chunks(hyper.batch_size).zip(draws.chunks(hyper.batch_size)) {
            let grads: Vec<Vec<f64>> = batch
                .par_iter()
                .zip(batch_ids)
                .map(|(&i, ids)| log_likelihood_grad(&w, &candidate_features(index, &prep.queries[i], ids), 0))
                .collect();
            let scale = hyper.learning_rate / batch.len() as f64;
            for g in &grads {
                for (wd, gd) in w.iter_mut().zip(g) {
                    *wd += scale * gd;
                }
            }
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(RetrievalError::NonFinite);
        }
        trace.push(mean_nll(&w, &eval_sets));
    }

    let mut metadata = theta0.metadata.clone();
    metadata.trained_on.push(train.name.clone());
    metadata.epochs += hyper.epochs;
    metadata.seed = hyper.seed;
    debug_assert_eq!(w.len(), FEATURE_DIM);
    Ok(TrainOutcome {
        params: ScorerParams { weights: w, metadata },
        loss_trace: trace,
    })
}

/// Continue training source-domain parameters on target-domain data.
pub fn transfer_finetune(
    theta_pre: &ScorerParams,
    target_train: &Dataset,
    index: &KbIndex,
    hyper: &RetrievalHyper,
) -> Result<TrainOutcome, RetrievalError> {
    train_retrieval(theta_pre, target_train, index, hyper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_kb, QASample, Split};
    use crate::det::TypeLabels;

    fn sample(i: usize, q: &str, k: &str) -> QASample {
        QASample {
            sample_id: format!("s{i}"),
            clip_id: format!("c{i}"),
            question: q.into(),
            answers: vec!["yes".into(), "no".into()],
            correct_index: 0,
            knowledge: k.into(),
            subtitles: String::new(),
            origin: Default::default(),
        }
    }

    fn toy() -> (Dataset, KbIndex) {
        let names = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"];
        let samples = names
            .iter()
            .enumerate()
            .map(|(i, n)| sample(i, &format!("what about {n}"), &format!("{n} is item number {i}")))
            .collect();
        let d = Dataset::new("toy", Split::Train, samples);
        let kb = build_kb(&d).unwrap().kb;
        (d, KbIndex::new(kb, &TypeLabels::default()))
    }

    #[test]
    fn negatives_are_distinct_and_exclude_gt() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for gt in 0..10 {
            let c = sampled_candidates(&mut rng, 10, gt, 9);
            assert_eq!(c[0], gt);
            let mut s = c.clone();
            s.sort();
            assert_eq!(s, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn zero_weights_give_log_m_plus_one() {
        let (d, idx) = toy();
        let h = RetrievalHyper {
            epochs: 0,
            negatives: 3,
            ..Default::default()
        };
        let out = train_retrieval(&ScorerParams::zeros(), &d, &idx, &h).unwrap();
        assert_eq!(out.loss_trace.len(), 1);
        assert!((out.loss_trace[0] - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn training_lowers_loss_and_records_lineage() {
        let (d, idx) = toy();
        let h = RetrievalHyper {
            epochs: 5,
            negatives: 5,
            batch_size: 2,
            ..Default::default()
        };
        let out = train_retrieval(&ScorerParams::zeros(), &d, &idx, &h).unwrap();
        assert_eq!(out.loss_trace.len(), 6);
        assert!(out.loss_trace[5] < out.loss_trace[0]);
        let again = train_retrieval(&ScorerParams::zeros(), &d, &idx, &h).unwrap();
        assert_eq!(again, out);
        let ft = transfer_finetune(&out.params, &d, &idx, &h).unwrap();
        assert_eq!(ft.params.metadata.trained_on, vec!["toy", "toy"]);
        assert_eq!(ft.params.metadata.epochs, 10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (d, idx) = toy();
        let too_many = RetrievalHyper {
            negatives: 8,
            ..Default::default()
        };
        assert!(matches!(
            train_retrieval(&ScorerParams::zeros(), &d, &idx, &too_many),
            Err(RetrievalError::TooManyNegatives { .. })
        ));
        let mut stray = d.clone();
        stray.samples[0].knowledge = "not in the base".into();
        assert!(matches!(
            train_retrieval(&ScorerParams::zeros(), &stray, &idx, &RetrievalHyper { negatives: 2, ..Default::default() }),
            Err(RetrievalError::KnowledgeNotInKb { .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (d, idx) = toy();
        let q = idx.extractor().prepare_query(&QueryText::from_sample(&d.samples[2]));
        let cands: Vec<FeatureVector> = (0..idx.len()).map(|id| idx.features(&q, id)).collect();
        let w = vec![0.3, -0.2, 0.7, 0.1, -0.4, 0.2, 0.05];
        let g = log_likelihood_grad(&w, &cands, 2);
        let h = 1e-6;
        for d in 0..FEATURE_DIM {
            let (mut a, mut b) = (w.clone(), w.clone());
            a[d] += h;
            b[d] -= h;
            let fd = (log_likelihood(&a, &cands, 2) - log_likelihood(&b, &cands, 2)) / (2.0 * h);
            assert!((fd - g[d]).abs() < 1e-7, "dim {d}: {fd} vs {}", g[d]);
        }
    }
}
