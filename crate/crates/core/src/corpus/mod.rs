//! Dataset schema, JSONL ingestion, splitting and knowledge-base construction.

mod synthetic;
mod visual;

pub use synthetic::{
    generate_synthetic, presets, EntityName, GeneratorConfig, Template,
};
pub use visual::{load_visual_features, VisualFeatures, VisualStore};

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::text::normalize;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate sample_id {id:?} on lines {first} and {second}")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },
    #[error("sample {sample_id}: {message}")]
    InvalidSample { sample_id: String, message: String },
    #[error("dataset {0:?} has no sample with knowledge")]
    EmptyDataset(String),
    #[error("invalid split fractions {0:?}: must be positive and sum to 1")]
    InvalidFractions((f64, f64, f64)),
    #[error("generator: {0}")]
    Generator(String),
    #[error("visual features, line {line}: {message}")]
    Visual { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    #[default]
    Original,
    Augmented,
}

/// One multiple-choice row: question, candidate answers, annotated knowledge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QASample {
    pub sample_id: String,
    pub clip_id: String,
    pub question: String,
    pub answers: Vec<String>,
    pub correct_index: usize,
    pub knowledge: String,
    #[serde(default)]
    pub subtitles: String,
    #[serde(default)]
    pub origin: Origin,
}

impl QASample {
    pub fn correct_answer(&self) -> &str {
        &self.answers[self.correct_index]
    }

    /// Checks the row-level invariants against the expected answer count.
    pub fn validate(&self, expected_n_answers: usize) -> std::result::Result<(), String> {
        if self.sample_id.is_empty() {
            return Err("sample_id is empty".into());
        }
        if self.answers.len() < 2 {
            return Err(format!("need at least 2 answers, got {}", self.answers.len()));
        }
        if self.answers.len() != expected_n_answers {
            return Err(format!(
                "wrong answer count: expected {expected_n_answers}, got {}",
                self.answers.len()
            ));
        }
        if self.correct_index >= self.answers.len() {
            return Err(format!(
                "correct_index out of range: {} not in [0, {})",
                self.correct_index,
                self.answers.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub domain_tag: String,
    pub samples: Vec<QASample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, split: Split, samples: Vec<QASample>) -> Self {
        let name = name.into();
        Dataset {
            domain_tag: name.clone(),
            name,
            split,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Concatenates datasets; sample ids must stay unique.
    pub fn concat(name: impl Into<String>, split: Split, parts: &[&Dataset]) -> Result<Dataset> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        let mut samples = Vec::new();
        for part in parts {
            for s in &part.samples {
                if seen.insert(&s.sample_id, samples.len()).is_some() {
                    return Err(CorpusError::InvalidSample {
                        sample_id: s.sample_id.clone(),
                        message: "sample_id appears in more than one concatenated dataset".into(),
                    });
                }
                samples.push(s.clone());
            }
        }
        Ok(Dataset::new(name, split, samples))
    }

    pub fn to_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.samples {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let io = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        self.to_jsonl(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }
}

/// Parses a JSONL stream into a dataset, rejecting invalid rows with their line number.
pub fn read_dataset<R: BufRead>(
    reader: R,
    name: &str,
    split: Split,
    expected_n_answers: usize,
) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: QASample =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        sample
            .validate(expected_n_answers)
            .map_err(|message| CorpusError::Malformed {
                line: line_no,
                message,
            })?;
        if let Some(&first) = first_seen.get(&sample.sample_id) {
            return Err(CorpusError::DuplicateId {
                id: sample.sample_id,
                first,
                second: line_no,
            });
        }
        first_seen.insert(sample.sample_id.clone(), line_no);
        samples.push(sample);
    }
    Ok(Dataset::new(name, split, samples))
}

/// Loads a JSONL dataset file. The dataset is named after the file stem.
pub fn load_dataset(path: &Path, expected_n_answers: usize) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    read_dataset(BufReader::new(file), &name, Split::Train, expected_n_answers)
}

/// Dense id into a [`KnowledgeBase`].
pub type KbId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbEntry {
    pub kb_id: KbId,
    pub text: String,
}

/// Deduplicated knowledge texts. Entries keep their first-seen casing; lookup
/// goes through the lowercase/whitespace-collapsed form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub source_dataset: String,
    entries: Vec<KbEntry>,
    #[serde(skip)]
    index: HashMap<String, KbId>,
}

impl PartialEq for KnowledgeBase {
    fn eq(&self, other: &Self) -> bool {
        self.source_dataset == other.source_dataset && self.entries == other.entries
    }
}

impl KnowledgeBase {
    pub fn new(source_dataset: impl Into<String>) -> Self {
        KnowledgeBase {
            source_dataset: source_dataset.into(),
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Inserts the text unless an entry with the same normalized form exists.
    pub fn insert(&mut self, text: &str) -> KbId {
        let key = normalize(text);
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.entries.len();
        self.entries.push(KbEntry {
            kb_id: id,
            text: text.to_string(),
        });
        self.index.insert(key, id);
        id
    }

    pub fn lookup(&self, text: &str) -> Option<KbId> {
        self.index.get(&normalize(text)).copied()
    }

    pub fn get(&self, id: KbId) -> Option<&str> {
        self.entries.get(id).map(|e| e.text.as_str())
    }

    pub fn entries(&self) -> &[KbEntry] {
        &self.entries
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.text.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .entries
            .iter()
            .map(|e| (normalize(&e.text), e.kb_id))
            .collect();
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("knowledge base serializes")
    }

    pub fn from_json(json: &str) -> std::result::Result<Self, String> {
        let mut kb: KnowledgeBase = serde_json::from_str(json).map_err(|e| e.to_string())?;
        for (i, e) in kb.entries.iter().enumerate() {
            if e.kb_id != i {
                return Err(format!("kb_id {} at position {i}: ids must be dense", e.kb_id));
            }
        }
        kb.rebuild_index();
        if kb.index.len() != kb.entries.len() {
            return Err("duplicate normalized knowledge entries".into());
        }
        Ok(kb)
    }
}

/// A knowledge base together with the kb_id assigned to each input sample
/// (`None` for samples without knowledge).
#[derive(Debug, Clone)]
pub struct KbBuild {
    pub kb: KnowledgeBase,
    pub assignments: Vec<Option<KbId>>,
}

pub fn build_kb(dataset: &Dataset) -> Result<KbBuild> {
    build_kb_from(&dataset.name, &[dataset])
}

/// Builds one KB over several datasets (e.g. every split of a corpus).
/// Assignments follow the concatenated sample order.
pub fn build_kb_from(name: &str, datasets: &[&Dataset]) -> Result<KbBuild> {
    let mut kb = KnowledgeBase::new(name);
    let mut assignments = Vec::new();
    for s in datasets.iter().flat_map(|d| d.samples.iter()) {
        if s.knowledge.trim().is_empty() {
            assignments.push(None);
        } else {
            assignments.push(Some(kb.insert(&s.knowledge)));
        }
    }
    if kb.is_empty() {
        return Err(CorpusError::EmptyDataset(name.to_string()));
    }
    Ok(KbBuild { kb, assignments })
}

/// Largest-remainder apportionment of `n` items; ties go to the earlier part.
pub fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| (q + 1e-9).floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    // stable sort keeps ties in train/val/test order
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - sizes[a] as f64;
        let rb = quotas[b] - sizes[b] as f64;
        rb.total_cmp(&ra)
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

#[derive(Debug, Clone)]
pub struct SplitDatasets {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Seeded shuffle followed by largest-remainder sizing. Samples keep their
/// input order inside each split.
pub fn split_dataset(
    dataset: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<SplitDatasets> {
    let (a, b, c) = fractions;
    let valid = [a, b, c].iter().all(|f| f.is_finite() && *f > 0.0)
        && ((a + b + c) - 1.0).abs() <= 1e-9;
    if !valid {
        return Err(CorpusError::InvalidFractions(fractions));
    }
    let n = dataset.len();
    let sizes = apportion(n, &[a, b, c]);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts: Vec<Vec<usize>> = vec![
        idx[..sizes[0]].to_vec(),
        idx[sizes[0]..sizes[0] + sizes[1]].to_vec(),
        idx[sizes[0] + sizes[1]..].to_vec(),
    ];
    let mut out = parts.iter_mut().zip([Split::Train, Split::Val, Split::Test]).map(|(p, split)| {
        p.sort_unstable();
        let mut d = Dataset::new(
            format!("{}-{split}", dataset.name),
            split,
            p.iter().map(|&i| dataset.samples[i].clone()).collect(),
        );
        d.domain_tag = dataset.domain_tag.clone();
        d
    });
    Ok(SplitDatasets {
        train: out.next().unwrap(),
        val: out.next().unwrap(),
        test: out.next().unwrap(),
    })
}
