//! Lexical (query, knowledge) features for the linear relevance scorer.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::KnowledgeBase;
use crate::det::TypeLabels;
use crate::text::{fnv1a, normalize, sorted_intersection, trigram_ids, TokenBag};

pub const FEATURE_DIM: usize = 7;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "idf_cosine",
    "token_overlap",
    "trigram_jaccard",
    "type_label_overlap",
    "length_ratio",
    "exact_substring",
    "bias",
];

pub const BIAS: usize = 6;

/// Separator between the question and each candidate answer in a rendered query.
pub const QUERY_SEPARATOR: &str = " | ";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.0.iter().zip(weights).map(|(a, b)| a * b).sum()
    }
}

/// A retrieval query: the question together with every candidate answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryText {
    pub question: String,
    pub answers: Vec<String>,
}

impl QueryText {
    pub fn new(question: impl Into<String>, answers: Vec<String>) -> Self {
        QueryText {
            question: question.into(),
            answers,
        }
    }

    pub fn from_sample(s: &crate::corpus::QASample) -> Self {
        QueryText::new(s.question.clone(), s.answers.clone())
    }

    pub fn rendered(&self) -> String {
        let mut out = self.question.clone();
        for a in &self.answers {
            out.push_str(QUERY_SEPARATOR);
            out.push_str(a);
        }
        out
    }
}

/// Document frequencies over a knowledge base.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdfTable {
    n_docs: usize,
    df: BTreeMap<String, u32>,
}

impl IdfTable {
    pub fn from_texts<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> Self {
        let mut df = BTreeMap::new();
        let mut n_docs = 0;
        for t in texts {
            n_docs += 1;
            for (tok, _) in TokenBag::from_text(t).iter() {
                *df.entry(tok.to_string()).or_insert(0) += 1;
            }
        }
        IdfTable { n_docs, df }
    }

    /// Smoothed idf: `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0) as f64;
        ((1.0 + self.n_docs as f64) / (1.0 + df)).ln() + 1.0
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }
}

/// Text with everything the feature functions need precomputed. Tokens and
/// trigrams are held as sorted hash ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedText {
    pub normalized: String,
    /// (token id, tf * idf), sorted by id.
    tfidf: Vec<(u64, f64)>,
    tfidf_norm: f64,
    total_tokens: usize,
    trigrams: Vec<u64>,
    /// (label id, count), sorted by id.
    label_counts: Vec<(u64, u32)>,
}

impl PreparedText {
    pub fn distinct_tokens(&self) -> usize {
        self.tfidf.len()
    }

    pub fn total_tokens(&self) -> usize {
        self.total_tokens
    }
}

/// Computes feature vectors against one knowledge base's statistics.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    idf: IdfTable,
    labels: BTreeSet<String>,
}

impl FeatureExtractor {
    pub fn new(idf: IdfTable, labels: &TypeLabels) -> Self {
        FeatureExtractor {
            idf,
            labels: labels.iter().map(str::to_string).collect(),
        }
    }

    pub fn for_kb(kb: &KnowledgeBase, labels: &TypeLabels) -> Self {
        Self::new(IdfTable::from_texts(kb.texts()), labels)
    }

    pub fn idf(&self) -> &IdfTable {
        &self.idf
    }

    pub fn prepare(&self, text: &str) -> PreparedText {
        let bag = TokenBag::from_text(text);
        let mut tfidf: Vec<(u64, f64)> = bag
            .iter()
            .map(|(t, c)| (fnv1a(t), c as f64 * self.idf.idf(t)))
            .collect();
        tfidf.sort_unstable_by_key(|(id, _)| *id);
        let tfidf_norm = tfidf.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        let mut label_counts: Vec<(u64, u32)> = bag
            .iter()
            .filter(|(t, _)| self.labels.contains(*t))
            .map(|(t, c)| (fnv1a(t), c))
            .collect();
        label_counts.sort_unstable();
        PreparedText {
            normalized: normalize(text),
            tfidf,
            tfidf_norm,
            total_tokens: bag.total(),
            trigrams: trigram_ids(text),
            label_counts,
        }
    }

    pub fn prepare_query(&self, query: &QueryText) -> PreparedText {
        self.prepare(&query.rendered())
    }

    pub fn features(&self, q: &PreparedText, k: &PreparedText) -> FeatureVector {
        let mut f = [0.0; FEATURE_DIM];
        let (mut dot, mut shared) = (0.0, 0usize);
        merge(&q.tfidf, &k.tfidf, |a, b| {
            dot += a * b;
            shared += 1;
        });
        if q.tfidf_norm > 0.0 && k.tfidf_norm > 0.0 {
            f[0] = (dot / (q.tfidf_norm * k.tfidf_norm)).clamp(0.0, 1.0);
        }
        let (dq, dk) = (q.distinct_tokens(), k.distinct_tokens());
        if dq > 0 && dk > 0 {
            f[1] = shared as f64 / ((dq * dk) as f64).sqrt();
        }
        if !q.trigrams.is_empty() && !k.trigrams.is_empty() {
            let inter = sorted_intersection(&q.trigrams, &k.trigrams);
            f[2] = inter as f64 / (q.trigrams.len() + k.trigrams.len() - inter) as f64;
        }
        merge(&q.label_counts, &k.label_counts, |a, b| f[3] += a.min(b) as f64);
        let (lq, lk) = (q.total_tokens, k.total_tokens);
        if lq.max(lk) > 0 {
            f[4] = lq.min(lk) as f64 / lq.max(lk) as f64;
        }
        let substring = !k.normalized.is_empty()
            && !q.normalized.is_empty()
            && (q.normalized.contains(&k.normalized) || k.normalized.contains(&q.normalized));
        f[5] = if substring { 1.0 } else { 0.0 };
        f[BIAS] = 1.0;
        FeatureVector(f)
    }

    pub fn extract(&self, query: &QueryText, knowledge: &str) -> FeatureVector {
        self.features(&self.prepare_query(query), &self.prepare(knowledge))
    }
}

/// Calls `on_match` for every id present in both sorted lists.
fn merge<V: Copy>(a: &[(u64, V)], b: &[(u64, V)], mut on_match: impl FnMut(V, V)) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                on_match(a[i].1, b[j].1);
                i += 1;
                j += 1;
            }
        }
    }
}
