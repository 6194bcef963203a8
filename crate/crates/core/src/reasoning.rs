//! Answer prediction: per-candidate lexical encoding, linear fusion with
//! visual vectors, cross-entropy training over the candidate set.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, KnowledgeBase, QASample, VisualFeatures, VisualStore};
use crate::retrieval::{log_sum_exp, softmax, RetrievalRanking};
use crate::text::{jaccard, normalize, trigram_set, TokenBag};

/// Contexts each answer is compared against: knowledge, question, subtitles, caption.
pub const CONTEXTS: usize = 4;
pub const GROUP_FEATURES: usize = 3;
/// Lexical groups, top-1 retrieval score, answer length.
pub const D_U: usize = CONTEXTS * GROUP_FEATURES + 2;
pub const DEFAULT_K: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum ReasoningError {
    #[error("expected {expected} knowledge texts, got {got}")]
    WrongK { expected: usize, got: usize },
    #[error("ranking holds {available} entries, {k} requested")]
    ShortRanking { available: usize, k: usize },
    #[error("visual features for clip {got} supplied to sample of clip {expected}")]
    ClipMismatch { expected: String, got: String },
    #[error("missing visual features for clip {0}")]
    MissingFeatures(String),
    #[error("fusion layout mismatch: {0}")]
    Layout(String),
    #[error("sample {0} has no candidate answers")]
    NoCandidates(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("knowledge id {0} not in the knowledge base")]
    UnknownKbId(usize),
    #[error("malformed reasoner parameters: {0}")]
    Malformed(String),
    #[error("non-finite value encountered")]
    NonFinite,
}

/// Which visual channels feed the fusion layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VisionMode {
    #[default]
    None,
    Image,
    Facial,
    Caption,
    All,
}

impl VisionMode {
    pub fn image(self) -> bool {
        matches!(self, VisionMode::Image | VisionMode::All)
    }
    pub fn facial(self) -> bool {
        matches!(self, VisionMode::Facial | VisionMode::All)
    }
    pub fn caption(self) -> bool {
        matches!(self, VisionMode::Caption | VisionMode::All)
    }
    pub fn any(self) -> bool {
        self != VisionMode::None
    }
}

impl fmt::Display for VisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VisionMode::None => "none",
            VisionMode::Image => "image",
            VisionMode::Facial => "facial",
            VisionMode::Caption => "caption",
            VisionMode::All => "all",
        })
    }
}

impl FromStr for VisionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "none" => VisionMode::None,
            "image" => VisionMode::Image,
            "facial" => VisionMode::Facial,
            "caption" => VisionMode::Caption,
            "all" => VisionMode::All,
            _ => return Err(format!("unknown vision mode {s:?} (none|image|facial|caption|all)")),
        })
    }
}

/// The knowledge every candidate of one sample is scored against.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeContext {
    /// Knowledge texts in rank order.
    pub texts: Vec<String>,
    pub top_score: f64,
}

impl KnowledgeContext {
    pub fn from_ranking(ranking: &RetrievalRanking, kb: &KnowledgeBase, k: usize) -> Result<Self, ReasoningError> {
        if ranking.entries.len() < k {
            return Err(ReasoningError::ShortRanking {
                available: ranking.entries.len(),
                k,
            });
        }
        let texts = ranking.entries[..k]
            .iter()
            .map(|e| kb.get(e.kb_id).map(str::to_string).ok_or(ReasoningError::UnknownKbId(e.kb_id)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(KnowledgeContext {
            texts,
            top_score: ranking.entries.first().map_or(0.0, |e| e.score),
        })
    }

    /// The sample's annotated knowledge as the single retrieved text.
    pub fn ground_truth(sample: &QASample) -> Self {
        KnowledgeContext {
            texts: vec![sample.knowledge.clone()],
            top_score: 1.0,
        }
    }

    pub fn none() -> Self {
        KnowledgeContext::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedCandidate {
    pub u: Vec<f64>,
}

fn lexical_group(answer: &TokenBag, answer_norm: &str, answer_grams: &std::collections::BTreeSet<String>, context: &str) -> [f64; GROUP_FEATURES] {
    let ctx = TokenBag::from_text(context);
    if answer.is_empty() || ctx.is_empty() {
        return [0.0; GROUP_FEATURES];
    }
    let recall = answer.shared_distinct(&ctx) as f64 / answer.distinct() as f64;
    let grams = trigram_set(context);
    let jac = if answer_grams.is_empty() || grams.is_empty() {
        0.0
    } else {
        jaccard(answer_grams, &grams)
    };
    let sub = if normalize(context).contains(answer_norm) { 1.0 } else { 0.0 };
    [recall, jac, sub]
}

/// Encode one candidate answer. `knowledge_topk` must hold exactly `k` texts;
/// they are concatenated in rank order.
pub fn encode_candidate(
    question: &str,
    answer: &str,
    knowledge_topk: &[String],
    k: usize,
    subtitles: &str,
    caption: &str,
    retrieval_score: f64,
) -> Result<EncodedCandidate, ReasoningError> {
    if knowledge_topk.len() != k {
        return Err(ReasoningError::WrongK {
            expected: k,
            got: knowledge_topk.len(),
        });
    }
    if !retrieval_score.is_finite() {
        return Err(ReasoningError::NonFinite);
    }
    let bag = TokenBag::from_text(answer);
    let norm = normalize(answer);
    let grams = trigram_set(answer);
    let knowledge = knowledge_topk.join(" ");
    let mut u = Vec::with_capacity(D_U);
    for ctx in [knowledge.as_str(), question, subtitles, caption] {
        u.extend(lexical_group(&bag, &norm, &grams, ctx));
    }
    u.push(retrieval_score);
    let n = bag.total() as f64;
    u.push(n / (n + 1.0));
    Ok(EncodedCandidate { u })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionLayout {
    pub d_u: usize,
    pub d_img: usize,
    pub d_face: usize,
}

impl FusionLayout {
    pub fn new(d_img: usize, d_face: usize) -> Self {
        FusionLayout { d_u: D_U, d_img, d_face }
    }

    /// `u`, image vector, image mask, facial vector, facial mask.
    pub fn dim(&self) -> usize {
        self.d_u + self.d_img + 1 + self.d_face + 1
    }
}

/// Visual channels of one clip after applying the vision mode.
#[derive(Debug, Clone, Copy, Default)]
pub struct VisualInput<'a> {
    pub image: Option<&'a [f64]>,
    pub facial: Option<&'a [f64]>,
}

impl<'a> VisualInput<'a> {
    pub fn select(feats: Option<&'a VisualFeatures>, mode: VisionMode) -> Self {
        match feats {
            None => VisualInput::default(),
            Some(f) => VisualInput {
                image: mode.image().then_some(f.image_vec.as_slice()),
                facial: mode.facial().then_some(f.facial_vec.as_slice()),
            },
        }
    }
}

/// The concatenated fusion input; absent channels are zeros with mask 0.
pub fn fusion_vector(u: &EncodedCandidate, v: VisualInput<'_>, layout: &FusionLayout) -> Result<Vec<f64>, ReasoningError> {
    if u.u.len() != layout.d_u {
        return Err(ReasoningError::Layout(format!("u has {} dims, layout {}", u.u.len(), layout.d_u)));
    }
    let mut x = Vec::with_capacity(layout.dim());
    x.extend_from_slice(&u.u);
    for (chan, d, name) in [(v.image, layout.d_img, "image"), (v.facial, layout.d_face, "facial")] {
        match chan {
            Some(vec) if vec.len() != d => {
                return Err(ReasoningError::Layout(format!("{name} vector has {} dims, layout {d}", vec.len())))
            }
            Some(vec) => {
                x.extend_from_slice(vec);
                x.push(1.0);
            }
            None => {
                x.extend(std::iter::repeat_n(0.0, d));
                x.push(0.0);
            }
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReasonerParams {
    pub layout: FusionLayout,
    pub weights: Vec<f64>,
    pub bias: f64,
}

const PARAMS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamsWire {
    version: u32,
    layout: FusionLayout,
    weights: Vec<f64>,
    bias: f64,
}

impl ReasonerParams {
    pub fn zeros(layout: FusionLayout) -> Self {
        ReasonerParams {
            layout,
            weights: vec![0.0; layout.dim()],
            bias: 0.0,
        }
    }

    pub fn check(&self) -> Result<(), ReasoningError> {
        if self.weights.len() != self.layout.dim() {
            return Err(ReasoningError::Layout(format!(
                "{} weights for a layout of {}",
                self.weights.len(),
                self.layout.dim()
            )));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(ReasoningError::NonFinite);
        }
        Ok(())
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn to_json(&self) -> String {
        let wire = ParamsWire {
            version: PARAMS_VERSION,
            layout: self.layout,
            weights: self.weights.clone(),
            bias: self.bias,
        };
        serde_json::to_string_pretty(&wire).expect("reasoner params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, ReasoningError> {
        let w: ParamsWire = serde_json::from_str(text).map_err(|e| ReasoningError::Malformed(e.to_string()))?;
        if w.version != PARAMS_VERSION {
            return Err(ReasoningError::Malformed(format!("unsupported version {}", w.version)));
        }
        let p = ReasonerParams {
            layout: w.layout,
            weights: w.weights,
            bias: w.bias,
        };
        p.check()?;
        Ok(p)
    }
}

pub fn fuse_and_score(u: &EncodedCandidate, v: VisualInput<'_>, params: &ReasonerParams) -> Result<f64, ReasoningError> {
    params.check()?;
    Ok(params.score(&fusion_vector(u, v, &params.layout)?))
}

/// Fusion inputs for every candidate of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub sample_id: String,
    pub candidates: Vec<Vec<f64>>,
    pub correct_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeOptions {
    pub k: usize,
    pub vision: VisionMode,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            k: DEFAULT_K,
            vision: VisionMode::None,
        }
    }
}

/// Encode all candidates of a sample against one knowledge context. The
/// caption channel contributes lexical features when the vision mode allows.
pub fn encode_sample(
    sample: &QASample,
    knowledge: &KnowledgeContext,
    k: usize,
    feats: Option<&VisualFeatures>,
    vision: VisionMode,
    layout: &FusionLayout,
) -> Result<EncodedSample, ReasoningError> {
    if let Some(f) = feats {
        if f.clip_id != sample.clip_id {
            return Err(ReasoningError::ClipMismatch {
                expected: sample.clip_id.clone(),
                got: f.clip_id.clone(),
            });
        }
    }
    if sample.answers.is_empty() {
        return Err(ReasoningError::NoCandidates(sample.sample_id.clone()));
    }
    let caption = match feats {
        Some(f) if vision.caption() => f.caption_text.as_str(),
        _ => "",
    };
    let visual = VisualInput::select(feats, vision);
    let candidates = sample
        .answers
        .iter()
        .map(|a| {
            let u = encode_candidate(
                &sample.question,
                a,
                &knowledge.texts,
                k,
                &sample.subtitles,
                caption,
                knowledge.top_score,
            )?;
            fusion_vector(&u, visual, layout)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EncodedSample {
        sample_id: sample.sample_id.clone(),
        candidates,
        correct_index: sample.correct_index,
    })
}

/// Encode a dataset; `knowledge[i]` belongs to `dataset.samples[i]`. When a
/// vision mode is set, every clip must be present in `store`.
pub fn encode_dataset(
    dataset: &Dataset,
    knowledge: &[KnowledgeContext],
    k: usize,
    store: Option<&VisualStore>,
    vision: VisionMode,
    layout: &FusionLayout,
) -> Result<Vec<EncodedSample>, ReasoningError> {
    if knowledge.len() != dataset.len() {
        return Err(ReasoningError::Layout(format!(
            "{} knowledge contexts for {} samples",
            knowledge.len(),
            dataset.len()
        )));
    }
    dataset
        .samples
        .par_iter()
        .zip(knowledge)
        .map(|(s, kc)| {
            let feats = match store {
                Some(st) if vision.any() => {
                    Some(st.get(&s.clip_id).ok_or_else(|| ReasoningError::MissingFeatures(s.clip_id.clone()))?)
                }
                None if vision.any() => return Err(ReasoningError::MissingFeatures(s.clip_id.clone())),
                _ => None,
            };
            encode_sample(s, kc, k, feats, vision, layout)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub scores: Vec<f64>,
    pub predicted_index: usize,
    pub correct: bool,
}

/// Index of the maximum; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn predict_encoded(sample: &EncodedSample, params: &ReasonerParams) -> Prediction {
    let scores: Vec<f64> = sample.candidates.iter().map(|x| params.score(x)).collect();
    let predicted_index = argmax(&scores);
    Prediction {
        sample_id: sample.sample_id.clone(),
        correct: predicted_index == sample.correct_index,
        scores,
        predicted_index,
    }
}

/// Score every candidate against the same knowledge and pick the best.
pub fn predict(
    sample: &QASample,
    knowledge: &KnowledgeContext,
    k: usize,
    feats: Option<&VisualFeatures>,
    vision: VisionMode,
    params: &ReasonerParams,
) -> Result<Prediction, ReasoningError> {
    params.check()?;
    let enc = encode_sample(sample, knowledge, k, feats, vision, &params.layout)?;
    Ok(predict_encoded(&enc, params))
}

/// Cross-entropy of the correct candidate under the softmax of candidate scores.
pub fn cross_entropy(params: &ReasonerParams, sample: &EncodedSample) -> f64 {
    let scores: Vec<f64> = sample.candidates.iter().map(|x| params.score(x)).collect();
    log_sum_exp(&scores) - scores[sample.correct_index]
}

/// Gradient of [`cross_entropy`] with respect to (weights, bias).
pub fn cross_entropy_grad(params: &ReasonerParams, sample: &EncodedSample) -> (Vec<f64>, f64) {
    let scores: Vec<f64> = sample.candidates.iter().map(|x| params.score(x)).collect();
    let p = softmax(&scores);
    let mut g = vec![0.0; params.weights.len()];
    let mut gb = 0.0;
    for (j, (x, pj)) in sample.candidates.iter().zip(&p).enumerate() {
        let coef = pj - if j == sample.correct_index { 1.0 } else { 0.0 };
        gb += coef;
        for (gd, xd) in g.iter_mut().zip(x) {
            *gd += coef * xd;
        }
    }
    (g, gb)
}

pub fn mean_cross_entropy(params: &ReasonerParams, samples: &[EncodedSample]) -> f64 {
    samples.par_iter().map(|s| cross_entropy(params, s)).sum::<f64>() / samples.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasoningHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Set by the caller; experiment configs derive it from the run seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for ReasoningHyper {
    fn default() -> Self {
        ReasoningHyper {
            epochs: 30,
            learning_rate: 1.0,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningOutcome {
    pub params: ReasonerParams,
    /// Mean cross-entropy over the training set: entry 0 before training,
    /// entry `e` after epoch `e`.
    pub loss_trace: Vec<f64>,
}

/// Mini-batch gradient descent on mean cross-entropy.
pub fn train_reasoning(
    params0: &ReasonerParams,
    train: &[EncodedSample],
    hyper: &ReasoningHyper,
) -> Result<ReasoningOutcome, ReasoningError> {
    params0.check()?;
    if !(hyper.learning_rate.is_finite() && hyper.learning_rate >= 0.0) {
        return Err(ReasoningError::InvalidHyper(format!("learning_rate {}", hyper.learning_rate)));
    }
    if hyper.batch_size == 0 {
        return Err(ReasoningError::InvalidHyper("batch_size must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(ReasoningError::InvalidHyper("empty training set".into()));
    }
    for s in train {
        if s.candidates.iter().any(|x| x.len() != params0.layout.dim()) {
            return Err(ReasoningError::Layout(format!("sample {} does not match the layout", s.sample_id)));
        }
    }
    let mut params = params0.clone();
    let mut trace = vec![mean_cross_entropy(&params, train)];
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            let grads: Vec<(Vec<f64>, f64)> = batch.par_iter().map(|&i| cross_entropy_grad(&params, &train[i])).collect();
            let scale = hyper.learning_rate / batch.len() as f64;
            for (g, gb) in &grads {
                for (w, gd) in params.weights.iter_mut().zip(g) {
                    *w -= scale * gd;
                }
                params.bias -= scale * gb;
            }
        }
        params.check()?;
        trace.push(mean_cross_entropy(&params, train));
    }
    Ok(ReasoningOutcome { params, loss_trace: trace })
}
