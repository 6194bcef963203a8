//! Training-set augmentation by back translation with near-duplicate removal.

mod similarity;
mod translator;

pub use similarity::{similarity, SimilarityFn, TrigramCosine};
pub use translator::{
    HttpTranslator, IdentityTranslator, PhraseTableTranslator, TranslateError, Translator,
    TRANSLATOR_URL_ENV,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Origin, QASample, Split};

/// Threshold reported for a neural sentence-similarity backend.
pub const NEURAL_ALPHA: f64 = 0.998;
/// Recommended threshold for [`TrigramCosine`].
pub const LEXICAL_ALPHA: f64 = 0.95;

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("alpha {0} not in [0, 1]")]
    InvalidAlpha(f64),
    #[error("no field selected for augmentation")]
    NoFields,
    #[error("no pivot language configured")]
    NoPivot,
    #[error("augmentation needs a training split, got {0}")]
    NotTraining(Split),
    #[error(
        "pivot {pivot:?}: {source} (sample {sample_id}); {completed_passes} pass(es) completed, {survivors_so_far} augmented samples kept so far"
    )]
    Translator {
        pivot: String,
        sample_id: String,
        completed_passes: usize,
        survivors_so_far: usize,
        #[source]
        source: TranslateError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSet {
    pub question: bool,
    pub answers: bool,
    pub knowledge: bool,
}

impl Default for FieldSet {
    fn default() -> Self {
        FieldSet {
            question: true,
            answers: true,
            knowledge: false,
        }
    }
}

impl FieldSet {
    /// Parses a comma list such as `q,a` or `question,answers,knowledge`.
    pub fn parse(list: &str) -> Result<Self, String> {
        let mut f = FieldSet {
            question: false,
            answers: false,
            knowledge: false,
        };
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "q" | "question" | "questions" => f.question = true,
                "a" | "answer" | "answers" => f.answers = true,
                "k" | "knowledge" => f.knowledge = true,
                other => return Err(format!("unknown field {other:?}")),
            }
        }
        Ok(f)
    }

    pub fn any(&self) -> bool {
        self.question || self.answers || self.knowledge
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub alpha: f64,
    pub fields: FieldSet,
    pub pivot_languages: Vec<String>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            alpha: LEXICAL_ALPHA,
            fields: FieldSet::default(),
            pivot_languages: vec!["de".into()],
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(AugmentError::InvalidAlpha(self.alpha));
        }
        if !self.fields.any() {
            return Err(AugmentError::NoFields);
        }
        if self.pivot_languages.is_empty() {
            return Err(AugmentError::NoPivot);
        }
        Ok(())
    }
}

/// `BackTranslate(Translate(s))` for a single text.
pub fn back_translate<T: Translator + ?Sized>(
    s: &str,
    translator: &T,
    pivot: &str,
) -> Result<String, TranslateError> {
    let input = [s.to_string()];
    let pivot_text = translator.translate(&input, pivot)?;
    log_pivot(&pivot_text);
    let mut back = translator.back_translate(&pivot_text, pivot)?;
    back.pop()
        .ok_or_else(|| TranslateError::new(Some(0), "backend returned no text"))
}

fn log_pivot(texts: &[String]) {
    if std::env::var_os("KBQA_LOG_PIVOT").is_some() {
        for t in texts {
            eprintln!("pivot: {t}");
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassStats {
    pub pivot: String,
    pub candidates: usize,
    pub removed: usize,
    pub kept: usize,
}

#[derive(Debug, Clone)]
pub struct Augmented {
    pub dataset: Dataset,
    pub passes: Vec<PassStats>,
}

/// Which text slots of a sample a pass rewrites, flattened in a fixed order.
fn selected_texts(s: &QASample, fields: FieldSet) -> Vec<&str> {
    let mut out = Vec::new();
    if fields.question {
        out.push(s.question.as_str());
    }
    if fields.answers {
        out.extend(s.answers.iter().map(String::as_str));
    }
    if fields.knowledge {
        out.push(s.knowledge.as_str());
    }
    out
}

fn rebuild(s: &QASample, fields: FieldSet, mut texts: std::vec::IntoIter<String>, pivot: &str) -> QASample {
    let mut c = s.clone();
    if fields.question {
        c.question = texts.next().unwrap();
    }
    if fields.answers {
        for a in c.answers.iter_mut() {
            *a = texts.next().unwrap();
        }
    }
    if fields.knowledge {
        c.knowledge = texts.next().unwrap();
    }
    c.sample_id = format!("{}#bt-{pivot}", s.sample_id);
    c.origin = Origin::Augmented;
    c
}

/// A candidate is a near duplicate only if every augmented field is; the
/// answers field counts as near duplicate when every answer is.
fn is_near_duplicate<S: SimilarityFn + ?Sized>(
    original: &QASample,
    candidate: &QASample,
    fields: FieldSet,
    alpha: f64,
    sim: &S,
) -> bool {
    let close = |a: &str, b: &str| sim.similarity(a, b) >= alpha;
    (!fields.question || close(&original.question, &candidate.question))
        && (!fields.answers
            || original
                .answers
                .iter()
                .zip(&candidate.answers)
                .all(|(a, b)| close(a, b)))
        && (!fields.knowledge || close(&original.knowledge, &candidate.knowledge))
}

/// Returns `T ∪ T_bk`: the original samples, untouched and in order, followed
/// by the surviving back-translated candidates sorted by source sample id.
/// One pass runs per pivot language, each over the original samples.
pub fn augment_training_set<T, S>(
    train: &Dataset,
    translator: &T,
    config: &AugmentConfig,
    sim: &S,
) -> Result<Augmented, AugmentError>
where
    T: Translator + ?Sized,
    S: SimilarityFn + ?Sized,
{
    config.validate()?;
    if train.split != Split::Train {
        return Err(AugmentError::NotTraining(train.split));
    }
    let fields = config.fields;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.sort_by(|&a, &b| train.samples[a].sample_id.cmp(&train.samples[b].sample_id));

    // owner[i] = index of the sample that text i belongs to
    let mut texts = Vec::new();
    let mut owner = Vec::new();
    for (i, s) in train.samples.iter().enumerate() {
        for t in selected_texts(s, fields) {
            texts.push(t.to_string());
            owner.push(i);
        }
    }

    let mut survivors: Vec<QASample> = Vec::new();
    let mut passes = Vec::new();
    for (pass, pivot) in config.pivot_languages.iter().enumerate() {
        let wrap = |e: TranslateError, kept: usize| AugmentError::Translator {
            pivot: pivot.clone(),
            sample_id: e
                .index
                .and_then(|i| owner.get(i))
                .map(|&o| train.samples[o].sample_id.clone())
                .unwrap_or_else(|| "?".into()),
            completed_passes: pass,
            survivors_so_far: kept,
            source: e,
        };
        let pivot_texts = translator
            .translate(&texts, pivot)
            .map_err(|e| wrap(e, survivors.len()))?;
        log_pivot(&pivot_texts);
        let back = translator
            .back_translate(&pivot_texts, pivot)
            .map_err(|e| wrap(e, survivors.len()))?;
        if back.len() != texts.len() {
            return Err(wrap(
                TranslateError::new(None, format!("expected {} texts, got {}", texts.len(), back.len())),
                survivors.len(),
            ));
        }

        let mut per_sample: Vec<Vec<String>> = vec![Vec::new(); train.len()];
        for (text, &o) in back.into_iter().zip(&owner) {
            per_sample[o].push(text);
        }
        let kept: Vec<QASample> = order
            .par_iter()
            .filter_map(|&i| {
                let s = &train.samples[i];
                let cand = rebuild(s, fields, per_sample[i].clone().into_iter(), pivot);
                (!is_near_duplicate(s, &cand, fields, config.alpha, sim)).then_some(cand)
            })
            .collect();
        passes.push(PassStats {
            pivot: pivot.clone(),
            candidates: train.len(),
            removed: train.len() - kept.len(),
            kept: kept.len(),
        });
        survivors.extend(kept);
    }

    let mut samples = train.samples.clone();
    samples.extend(survivors);
    Ok(Augmented {
        dataset: Dataset {
            name: format!("{}+da", train.name),
            samples,
            ..train.clone()
        },
        passes,
    })
}
