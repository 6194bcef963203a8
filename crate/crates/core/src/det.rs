//! Domain-specific entity tagging.
//!
//! Entities recognized in a text are rewritten so that their *type* becomes
//! visible to downstream models. Three renderings are supported:
//!
//! * appositive: `Chandler` → `Chandler, a person,`
//! * mask-out: `Chandler` → `person`
//! * hyphen: `Chandler` → `Chandler-person,`
//!
//! Only the first taggable occurrence of each distinct surface form in a text
//! is rewritten, and possessives (`Chandler's`) are left alone.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, QASample};

#[derive(Debug, thiserror::Error)]
pub enum DetError {
    #[error("gazetteer line {line}: {message}")]
    Gazetteer { line: usize, message: String },
    #[error("invalid span {start}..{end}: {message}")]
    InvalidSpan {
        start: usize,
        end: usize,
        message: String,
    },
    #[error("unknown tagging strategy {0:?} (expected appositive, mask-out or hyphen)")]
    UnknownStrategy(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// The 18 default type labels, after the usual OntoNotes-style inventory.
pub const DEFAULT_TYPE_LABELS: [&str; 18] = [
    "person",
    "nationality",
    "facility",
    "organisation",
    "country",
    "location",
    "product",
    "event",
    "artwork",
    "law",
    "language",
    "date",
    "time",
    "percent",
    "money",
    "quantity",
    "ordinal",
    "cardinal",
];

/// The configured entity type vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeLabels(Vec<String>);

impl Default for TypeLabels {
    fn default() -> Self {
        TypeLabels(DEFAULT_TYPE_LABELS.iter().map(|s| s.to_string()).collect())
    }
}

impl TypeLabels {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(labels: I) -> Self {
        TypeLabels(labels.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.iter().any(|l| l == label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    /// Character offset, inclusive.
    pub start: usize,
    /// Character offset, exclusive.
    pub end: usize,
    pub surface: String,
    pub entity_type: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TagStrategy {
    Appositive,
    MaskOut,
    Hyphen,
}

impl FromStr for TagStrategy {
    type Err = DetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "appositive" => Ok(TagStrategy::Appositive),
            "mask-out" | "mask_out" => Ok(TagStrategy::MaskOut),
            "hyphen" => Ok(TagStrategy::Hyphen),
            other => Err(DetError::UnknownStrategy(other.to_string())),
        }
    }
}

impl fmt::Display for TagStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TagStrategy::Appositive => "appositive",
            TagStrategy::MaskOut => "mask-out",
            TagStrategy::Hyphen => "hyphen",
        })
    }
}

/// Anything that can find entity spans in text.
pub trait EntityRecognizer: Send + Sync {
    fn recognize(&self, text: &str) -> Vec<EntitySpan>;
}

/// Surface form → type label dictionary with longest-match lookup.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: BTreeMap<String, String>,
    case_sensitive: bool,
    /// Surface forms as char vectors, longest first.
    by_length: Vec<(Vec<char>, String)>,
}

impl Gazetteer {
    pub fn new(case_sensitive: bool) -> Self {
        Gazetteer {
            case_sensitive,
            ..Default::default()
        }
    }

    fn key(&self, surface: &str) -> String {
        if self.case_sensitive {
            surface.to_string()
        } else {
            surface.to_lowercase()
        }
    }

    /// Adds a surface form; re-adding the same form with a different type is an error.
    pub fn insert(&mut self, surface: &str, label: &str) -> Result<(), String> {
        let surface = surface.trim();
        if surface.is_empty() {
            return Err("empty surface form".into());
        }
        if label.trim().is_empty() {
            return Err(format!("empty type label for {surface:?}"));
        }
        let key = self.key(surface);
        match self.entries.get(&key) {
            Some(existing) if existing != label => {
                return Err(format!(
                    "{surface:?} already mapped to {existing:?}, cannot remap to {label:?}"
                ))
            }
            Some(_) => return Ok(()),
            None => {}
        }
        self.entries.insert(key.clone(), label.to_string());
        self.by_length.push((key.chars().collect(), label.to_string()));
        self.by_length
            .sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(())
    }

    pub fn from_pairs<'a, I>(pairs: I, case_sensitive: bool) -> Result<Self, String>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut g = Gazetteer::new(case_sensitive);
        for (s, l) in pairs {
            g.insert(s, l)?;
        }
        Ok(g)
    }

    /// Parses `surface<TAB>type_label` lines; blank lines and `#` comments are skipped.
    /// Labels must belong to `labels`.
    pub fn from_tsv(text: &str, labels: &TypeLabels, case_sensitive: bool) -> Result<Self, DetError> {
        let mut g = Gazetteer::new(case_sensitive);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let bad = |message: String| DetError::Gazetteer { line, message };
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = raw.split('\t');
            let (Some(surface), Some(label), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(bad("expected surface<TAB>type_label".into()));
            };
            let label = label.trim();
            if !labels.contains(label) {
                return Err(bad(format!("unknown type label {label:?}")));
            }
            g.insert(surface, label).map_err(bad)?;
        }
        Ok(g)
    }

    pub fn load(path: &Path, labels: &TypeLabels, case_sensitive: bool) -> Result<Self, DetError> {
        Self::from_tsv(&std::fs::read_to_string(path)?, labels, case_sensitive)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn label_of(&self, surface: &str) -> Option<&str> {
        self.entries.get(&self.key(surface)).map(String::as_str)
    }

    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|(s, l)| format!("{s}\t{l}\n"))
            .collect()
    }

    fn matches_at(&self, text: &[char], at: usize, pattern: &[char]) -> bool {
        if at + pattern.len() > text.len() {
            return false;
        }
        text[at..at + pattern.len()]
            .iter()
            .zip(pattern)
            .all(|(a, b)| {
                if self.case_sensitive {
                    a == b
                } else {
                    a.to_lowercase().eq(b.to_lowercase())
                }
            })
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

impl EntityRecognizer for Gazetteer {
    /// Greedy longest match, left to right, anchored at word boundaries.
    fn recognize(&self, text: &str) -> Vec<EntitySpan> {
        let chars: Vec<char> = text.chars().collect();
        let mut spans = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let at_word_start = is_word_char(chars[i]) && (i == 0 || !is_word_char(chars[i - 1]));
            if !at_word_start {
                i += 1;
                continue;
            }
            let hit = self.by_length.iter().find(|(pat, _)| {
                let end = i + pat.len();
                self.matches_at(&chars, i, pat)
                    && (end == chars.len()
                        || !is_word_char(chars[end])
                        || !is_word_char(chars[end - 1]))
            });
            match hit {
                Some((pat, label)) => {
                    let end = i + pat.len();
                    spans.push(EntitySpan {
                        start: i,
                        end,
                        surface: chars[i..end].iter().collect(),
                        entity_type: label.clone(),
                    });
                    i = end;
                }
                None => i += 1,
            }
        }
        spans
    }
}

/// A rendered text plus enough bookkeeping to undo the rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedText {
    pub original: String,
    pub spans: Vec<EntitySpan>,
    pub strategy: TagStrategy,
    pub rendered: String,
    /// Char ranges of `rendered` that were inserted (appositive, hyphen) or
    /// that replaced an entity (mask-out).
    pub inserted: Vec<(usize, usize)>,
}

impl TaggedText {
    /// Removes the inserted material. For appositive and hyphen this gives
    /// back the original text; for mask-out it is the rendered text itself.
    pub fn strip(&self) -> String {
        if self.strategy == TagStrategy::MaskOut {
            return self.rendered.clone();
        }
        let mut out = String::with_capacity(self.original.len());
        let mut ranges = self.inserted.iter().peekable();
        for (i, c) in self.rendered.chars().enumerate() {
            while ranges.peek().is_some_and(|r| r.1 <= i) {
                ranges.next();
            }
            if ranges.peek().is_some_and(|r| r.0 <= i && i < r.1) {
                continue;
            }
            out.push(c);
        }
        out
    }
}

pub fn article_for(label: &str) -> &'static str {
    match label.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn validate_spans(chars: &[char], spans: &[EntitySpan]) -> Result<(), DetError> {
    let mut prev_end = 0;
    for s in spans {
        let bad = |message: &str| DetError::InvalidSpan {
            start: s.start,
            end: s.end,
            message: message.to_string(),
        };
        if s.start >= s.end || s.end > chars.len() {
            return Err(bad("offsets out of range"));
        }
        if s.start < prev_end {
            return Err(bad("spans overlap or are out of order"));
        }
        if chars[s.start..s.end].iter().collect::<String>() != s.surface {
            return Err(bad("surface does not match text"));
        }
        prev_end = s.end;
    }
    Ok(())
}

fn is_possessive(chars: &[char], end: usize) -> bool {
    matches!(chars.get(end), Some('\'' | '\u{2019}'))
        && matches!(chars.get(end + 1), Some('s' | 'S'))
        && chars.get(end + 2).is_none_or(|c| !is_word_char(*c))
}

/// Renders `text` with the given spans under `strategy`.
pub fn tag_text(text: &str, spans: &[EntitySpan], strategy: TagStrategy) -> Result<TaggedText, DetError> {
    let chars: Vec<char> = text.chars().collect();
    validate_spans(&chars, spans)?;

    let mut rendered: Vec<char> = Vec::with_capacity(chars.len() + 16 * spans.len());
    let mut inserted = Vec::new();
    let mut tagged_surfaces: HashSet<&str> = HashSet::new();
    let mut cursor = 0;

    for span in spans {
        if is_possessive(&chars, span.end) || tagged_surfaces.contains(span.surface.as_str()) {
            continue;
        }
        tagged_surfaces.insert(&span.surface);
        rendered.extend(&chars[cursor..span.start]);
        let label = span.entity_type.as_str();
        // no closing comma when punctuation already follows the entity
        let closing = match chars.get(span.end) {
            Some('?' | '.' | '!' | ',' | ';' | ':') => "",
            _ => ",",
        };
        match strategy {
            TagStrategy::Appositive => {
                rendered.extend(&chars[span.start..span.end]);
                let ins = format!(", {} {label}{closing}", article_for(label));
                inserted.push((rendered.len(), rendered.len() + ins.chars().count()));
                rendered.extend(ins.chars());
            }
            TagStrategy::Hyphen => {
                rendered.extend(&chars[span.start..span.end]);
                let ins = format!("-{label}{closing}");
                inserted.push((rendered.len(), rendered.len() + ins.chars().count()));
                rendered.extend(ins.chars());
            }
            TagStrategy::MaskOut => {
                inserted.push((rendered.len(), rendered.len() + label.chars().count()));
                rendered.extend(label.chars());
            }
        }
        cursor = span.end;
    }
    rendered.extend(&chars[cursor..]);

    Ok(TaggedText {
        original: text.to_string(),
        spans: spans.to_vec(),
        strategy,
        rendered: rendered.into_iter().collect(),
        inserted,
    })
}

/// Recognizes and renders in one step.
pub fn tag_with<R: EntityRecognizer + ?Sized>(text: &str, recognizer: &R, strategy: TagStrategy) -> TaggedText {
    let spans = recognizer.recognize(text);
    tag_text(text, &spans, strategy).expect("recognizer produced invalid spans")
}

/// Tags question, every answer, and knowledge. Subtitles stay as they are.
pub fn tag_sample<R: EntityRecognizer + ?Sized>(sample: &QASample, recognizer: &R, strategy: TagStrategy) -> QASample {
    let tag = |t: &str| tag_with(t, recognizer, strategy).rendered;
    QASample {
        question: tag(&sample.question),
        answers: sample.answers.iter().map(|a| tag(a)).collect(),
        knowledge: tag(&sample.knowledge),
        ..sample.clone()
    }
}

pub fn tag_dataset<R: EntityRecognizer + ?Sized>(dataset: &Dataset, recognizer: &R, strategy: TagStrategy) -> Dataset {
    Dataset {
        samples: dataset
            .samples
            .iter()
            .map(|s| tag_sample(s, recognizer, strategy))
            .collect(),
        ..dataset.clone()
    }
}
