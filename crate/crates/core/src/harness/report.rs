use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::{DetMode, ExperimentConfig, KnowledgeMode, LearningMode};
use super::metrics::RetrievalMetrics;
use crate::augment::PassStats;
use crate::reasoning::VisionMode;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTraces {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain: Option<Vec<f64>>,
    pub retrieval: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSizes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_train: Option<usize>,
    pub target_train: usize,
    /// Target training set after augmentation.
    pub target_train_augmented: usize,
    pub target_test: usize,
    pub kb_entries: usize,
    /// Samples passed through retrieval training, summed over stages and epochs.
    pub retrieval_samples_seen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub target: String,
    pub learning: LearningMode,
    pub learning_label: String,
    pub det: DetMode,
    pub da: bool,
    pub vision: VisionMode,
    pub knowledge: KnowledgeMode,
    pub retrieval: RetrievalMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub loss: LossTraces,
    pub sizes: DatasetSizes,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub augmentation: Vec<PassStats>,
    pub config: ExperimentConfig,
    pub wall_clock_ms: u64,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The report with wall-clock time zeroed, for reproducibility checks.
    pub fn without_clock(&self) -> Report {
        Report {
            wall_clock_ms: 0,
            ..self.clone()
        }
    }

    pub fn layout(&self) -> TableLayout {
        if self.accuracy.is_some() {
            TableLayout::Reasoning
        } else {
            TableLayout::Retrieval
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableLayout {
    Retrieval,
    Reasoning,
}

impl std::str::FromStr for TableLayout {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "retrieval" => Ok(TableLayout::Retrieval),
            "reasoning" => Ok(TableLayout::Reasoning),
            _ => Err(format!("unknown layout {s:?} (retrieval|reasoning)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("no reports")]
    Empty,
    #[error("reports mix retrieval-only and reasoning runs ({0})")]
    MixedLayouts(String),
    #[error("report {0} has no reasoning accuracy")]
    MissingAccuracy(String),
}

pub const RETRIEVAL_COLUMNS: [&str; 7] = ["Source", "Target", "Learning", "R@1", "R@5", "R@10", "MR"];
pub const REASONING_COLUMNS: [&str; 6] = ["Vision", "Learning", "Knowledge", "DET", "DA", "Accuracy"];

fn metric(m: &RetrievalMetrics, k: usize) -> String {
    m.recall(k).map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

fn rows(reports: &[Report], layout: TableLayout) -> Result<(Vec<&'static str>, Vec<Vec<String>>), ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    let first = reports[0].layout();
    if let Some(other) = reports.iter().find(|r| r.layout() != first) {
        return Err(ReportError::MixedLayouts(format!("{} vs {}", reports[0].fingerprint, other.fingerprint)));
    }
    let mut sorted: Vec<&Report> = reports.iter().collect();
    sorted.sort_by(|a, b| a.fingerprint.cmp(&b.fingerprint));
    match layout {
        TableLayout::Retrieval => Ok((
            RETRIEVAL_COLUMNS.to_vec(),
            sorted
                .iter()
                .map(|r| {
                    vec![
                        r.source.clone().unwrap_or_else(|| "-".into()),
                        r.target.clone(),
                        r.learning_label.clone(),
                        metric(&r.retrieval, 1),
                        metric(&r.retrieval, 5),
                        metric(&r.retrieval, 10),
                        r.retrieval.mr.to_string(),
                    ]
                })
                .collect(),
        )),
        TableLayout::Reasoning => {
            let mut out = Vec::new();
            for r in sorted {
                let acc = r.accuracy.ok_or_else(|| ReportError::MissingAccuracy(r.fingerprint.clone()))?;
                out.push(vec![
                    r.vision.to_string(),
                    r.learning.label().to_string(),
                    r.knowledge.to_string(),
                    r.det.to_string(),
                    if r.da { "yes".into() } else { "no".into() },
                    format!("{acc:.3}"),
                ]);
            }
            Ok((REASONING_COLUMNS.to_vec(), out))
        }
    }
}

/// Pipe-delimited text table, one row per report ordered by fingerprint.
pub fn emit_report_table(reports: &[Report], layout: TableLayout) -> Result<String, ReportError> {
    let (header, body) = rows(reports, layout)?;
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        out.push('|');
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(out, " {c:<w$} |");
        }
        out.push('\n');
    };
    line(&mut out, &header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    out.push('|');
    for w in &widths {
        out.push_str(&"-".repeat(w + 2));
        out.push('|');
    }
    out.push('\n');
    for row in &body {
        line(&mut out, row);
    }
    Ok(out)
}

/// Same rows as [`emit_report_table`], comma separated; cells containing a
/// comma or quote are quoted.
pub fn emit_report_csv(reports: &[Report], layout: TableLayout) -> Result<String, ReportError> {
    let (header, body) = rows(reports, layout)?;
    let esc = |c: &str| {
        if c.contains([',', '"', '\n']) {
            format!("\"{}\"", c.replace('"', "\"\""))
        } else {
            c.to_string()
        }
    };
    let mut out = header.join(",");
    out.push('\n');
    for row in body {
        out.push_str(&row.iter().map(|c| esc(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    Ok(out)
}
