//! Shared lexical primitives: tokenization, normalization and character n-grams.
//!
//! Everything here is deterministic and allocation-light; the retrieval
//! features, the reasoning encoder and the near-duplicate filter all build on
//! these helpers so that they agree on what a "token" is.

use std::collections::{BTreeMap, BTreeSet};

/// Lowercases and collapses every run of whitespace into one space, trimming both ends.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Splits text into lowercase alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Token multiset as a sorted `(token, count)` list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenBag {
    counts: Vec<(String, u32)>,
    total: usize,
}

impl TokenBag {
    pub fn from_text(text: &str) -> Self {
        Self::from_tokens(tokenize(text))
    }

    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut map: BTreeMap<String, u32> = BTreeMap::new();
        let mut total = 0;
        for t in tokens {
            *map.entry(t).or_insert(0) += 1;
            total += 1;
        }
        TokenBag {
            counts: map.into_iter().collect(),
            total,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.counts.iter().map(|(t, c)| (t.as_str(), *c))
    }

    pub fn count(&self, token: &str) -> u32 {
        self.counts
            .binary_search_by(|(t, _)| t.as_str().cmp(token))
            .map(|i| self.counts[i].1)
            .unwrap_or(0)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.count(token) > 0
    }

    /// Number of distinct tokens.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Number of tokens including repeats.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Number of distinct tokens present in both bags.
    pub fn shared_distinct(&self, other: &TokenBag) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.counts.len() && j < other.counts.len() {
            match self.counts[i].0.cmp(&other.counts[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Character trigrams of the normalized text. Non-empty strings shorter than
/// three characters yield themselves as a single gram.
pub fn char_trigrams(text: &str) -> Vec<String> {
    let chars: Vec<char> = normalize(text).chars().collect();
    match chars.len() {
        0 => Vec::new(),
        1 | 2 => vec![chars.iter().collect()],
        _ => chars.windows(3).map(|w| w.iter().collect()).collect(),
    }
}

pub fn trigram_set(text: &str) -> BTreeSet<String> {
    char_trigrams(text).into_iter().collect()
}

pub fn trigram_counts(text: &str) -> BTreeMap<String, u32> {
    let mut map = BTreeMap::new();
    for g in char_trigrams(text) {
        *map.entry(g).or_insert(0) += 1;
    }
    map
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hashed, sorted, deduplicated trigram ids.
pub fn trigram_ids(text: &str) -> Vec<u64> {
    let mut ids: Vec<u64> = char_trigrams(text).iter().map(|g| fnv1a(g)).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Size of the intersection of two sorted, deduplicated slices.
pub fn sorted_intersection<T: Ord>(a: &[T], b: &[T]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Jaccard index of two sets; two empty sets count as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Cosine similarity of two sparse count vectors.
pub fn count_cosine(a: &BTreeMap<String, u32>, b: &BTreeMap<String, u32>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let dot: u64 = a
        .iter()
        .filter_map(|(k, &x)| b.get(k).map(|&y| x as u64 * y as u64))
        .sum();
    let na: u64 = a.values().map(|&x| x as u64 * x as u64).sum();
    let nb: u64 = b.values().map(|&x| x as u64 * x as u64).sum();
    (dot as f64 / ((na as f64).sqrt() * (nb as f64).sqrt())).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_whitespace_and_case() {
        assert_eq!(normalize("  The  Red\tHat \n"), "the red hat");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn tokenize_splits_on_punctuation() {
        assert_eq!(
            tokenize("Why was Chandler, a person, acting weird?"),
            vec!["why", "was", "chandler", "a", "person", "acting", "weird"]
        );
        assert_eq!(tokenize("Chandler's"), vec!["chandler", "s"]);
    }

    #[test]
    fn short_strings_are_single_grams() {
        assert_eq!(char_trigrams("ab"), vec!["ab"]);
        assert_eq!(char_trigrams("abcd"), vec!["abc", "bcd"]);
        assert!(char_trigrams("   ").is_empty());
    }

    #[test]
    fn bag_overlap() {
        let a = TokenBag::from_text("the red hat the");
        let b = TokenBag::from_text("a red cap");
        assert_eq!(a.total(), 4);
        assert_eq!(a.distinct(), 3);
        assert_eq!(a.count("the"), 2);
        assert_eq!(a.shared_distinct(&b), 1);
    }
}
