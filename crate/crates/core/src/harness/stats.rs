use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::text::tokenize;

/// The NLTK English stopword list plus two conversational fillers.
pub const ENGLISH_STOPWORDS: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've", "you'll",
    "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself", "she", "she's",
    "her", "hers", "herself", "it", "it's", "its", "itself", "they", "them", "their", "theirs",
    "themselves", "what", "which", "who", "whom", "this", "that", "that'll", "these", "those", "am",
    "is", "are", "was", "were", "be", "been", "being", "have", "has", "had", "having", "do", "does",
    "did", "doing", "a", "an", "the", "and", "but", "if", "or", "because", "as", "until", "while",
    "of", "at", "by", "for", "with", "about", "against", "between", "into", "through", "during",
    "before", "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over",
    "under", "again", "further", "then", "once", "here", "there", "when", "where", "why", "how",
    "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor", "not",
    "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will", "just", "don",
    "don't", "should", "should've", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren",
    "aren't", "couldn", "couldn't", "didn", "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn",
    "hasn't", "haven", "haven't", "isn", "isn't", "ma", "mightn", "mightn't", "mustn", "mustn't",
    "needn", "needn't", "shan", "shan't", "shouldn", "shouldn't", "wasn", "wasn't", "weren",
    "weren't", "won", "won't", "wouldn", "wouldn't", "n't", "ah",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldLengths {
    pub question: f64,
    pub answer: f64,
    pub knowledge: f64,
    pub subtitles: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub questions: BTreeMap<String, usize>,
    pub answers: BTreeMap<String, usize>,
    pub knowledge: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_samples: usize,
    /// First question token, lowercased.
    pub question_types: BTreeMap<String, usize>,
    pub vocabulary: Vocabulary,
    /// Mean token counts; answers are averaged over every candidate.
    pub average_length: FieldLengths,
}

impl CorpusStats {
    /// Most frequent entries first, ties alphabetical.
    pub fn top(counts: &BTreeMap<String, usize>, n: usize) -> Vec<(&str, usize)> {
        let mut v: Vec<(&str, usize)> = counts.iter().map(|(k, &c)| (k.as_str(), c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v.truncate(n);
        v
    }
}

fn count_into(map: &mut BTreeMap<String, usize>, text: &str, stop: &BTreeSet<&str>) {
    for t in tokenize(text) {
        if !stop.contains(t.as_str()) {
            *map.entry(t).or_insert(0) += 1;
        }
    }
}

fn mean(total: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total as f64 / n as f64
    }
}

pub fn corpus_stats(dataset: &Dataset, stopwords: &[&str]) -> CorpusStats {
    let stop: BTreeSet<&str> = stopwords.iter().copied().collect();
    let mut s = CorpusStats {
        n_samples: dataset.len(),
        ..Default::default()
    };
    let (mut q_len, mut a_len, mut a_n, mut k_len, mut sub_len) = (0, 0, 0, 0, 0);
    for x in &dataset.samples {
        let q = tokenize(&x.question);
        if let Some(first) = q.first() {
            *s.question_types.entry(first.clone()).or_insert(0) += 1;
        }
        q_len += q.len();
        count_into(&mut s.vocabulary.questions, &x.question, &stop);
        for a in &x.answers {
            a_len += tokenize(a).len();
            a_n += 1;
            count_into(&mut s.vocabulary.answers, a, &stop);
        }
        k_len += tokenize(&x.knowledge).len();
        count_into(&mut s.vocabulary.knowledge, &x.knowledge, &stop);
        sub_len += tokenize(&x.subtitles).len();
    }
    let n = dataset.len();
    s.average_length = FieldLengths {
        question: mean(q_len, n),
        answer: mean(a_len, a_n),
        knowledge: mean(k_len, n),
        subtitles: mean(sub_len, n),
    };
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{QASample, Split};

    fn ds(questions: &[&str]) -> Dataset {
        let samples = questions
            .iter()
            .enumerate()
            .map(|(i, q)| QASample {
                sample_id: format!("s{i}"),
                clip_id: "c".into(),
                question: q.to_string(),
                answers: vec!["the cat".into(), "a dog".into()],
                correct_index: 0,
                knowledge: "the cat sat".into(),
                subtitles: String::new(),
                origin: Default::default(),
            })
            .collect();
        Dataset::new("d", Split::Train, samples)
    }

    #[test]
    fn question_types_by_first_token() {
        let s = corpus_stats(&ds(&["Why is X?", "Who is Y?", "Why not?"]), ENGLISH_STOPWORDS);
        assert_eq!(s.question_types, BTreeMap::from([("who".into(), 1), ("why".into(), 2)]));
    }

    #[test]
    fn empty_stoplist_keeps_everything() {
        let s = corpus_stats(&ds(&["Why is X?"]), &[]);
        assert_eq!(s.vocabulary.questions.len(), 3);
        assert_eq!(s.vocabulary.answers.get("the"), Some(&1));
        let t = corpus_stats(&ds(&["Why is X?"]), ENGLISH_STOPWORDS);
        assert_eq!(t.vocabulary.questions.keys().collect::<Vec<_>>(), vec!["x"]);
    }

    #[test]
    fn average_lengths() {
        let s = corpus_stats(&ds(&["one two three four five six seven"]), &[]);
        assert_eq!(s.average_length.question, 7.0);
        assert_eq!(s.average_length.answer, 2.0);
        assert_eq!(s.average_length.knowledge, 3.0);
        assert_eq!(CorpusStats::top(&s.vocabulary.answers, 1), vec![("a", 1)]);
    }
}
