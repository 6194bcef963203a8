use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{AugmentConfig, FieldSet, LEXICAL_ALPHA};
use crate::corpus::presets;
use crate::det::TagStrategy;
use crate::reasoning::{ReasoningHyper, VisionMode, DEFAULT_K};
use crate::retrieval::RetrievalHyper;
use crate::text::fnv1a;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearningMode {
    /// Train on the target domain only.
    Direct,
    /// Train on source and target training sets concatenated.
    DirectBoth,
    /// Pre-train on the source domain, finetune on the target domain.
    Transfer,
}

impl LearningMode {
    pub fn label(self) -> &'static str {
        match self {
            LearningMode::Direct => "Direct",
            LearningMode::DirectBoth => "Direct on both",
            LearningMode::Transfer => "Transfer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetMode {
    #[default]
    Off,
    Appositive,
    MaskOut,
    Hyphen,
}

impl DetMode {
    pub fn strategy(self) -> Option<TagStrategy> {
        match self {
            DetMode::Off => None,
            DetMode::Appositive => Some(TagStrategy::Appositive),
            DetMode::MaskOut => Some(TagStrategy::MaskOut),
            DetMode::Hyphen => Some(TagStrategy::Hyphen),
        }
    }
}

impl fmt::Display for DetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.strategy() {
            None => f.write_str("off"),
            Some(s) => s.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnowledgeMode {
    #[default]
    Retrieved,
    /// The annotated knowledge of each sample.
    Gt,
    None,
}

impl fmt::Display for KnowledgeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KnowledgeMode::Retrieved => "retrieved",
            KnowledgeMode::Gt => "gt",
            KnowledgeMode::None => "none",
        })
    }
}

fn default_answers() -> usize {
    4
}

fn default_splits() -> [f64; 3] {
    [0.7, 0.1, 0.2]
}

/// A dataset read from JSONL or generated from a built-in preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Preset name: `source`, `target` or `separable`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default = "default_answers")]
    pub n_answers: usize,
    /// Train / val / test fractions.
    #[serde(default = "default_splits")]
    pub splits: [f64; 3],
    /// Visual feature file (JSONL with header).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    /// Overrides the preset's alias rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alias_rate: Option<f64>,
}

impl DatasetSpec {
    pub fn synthetic(preset: &str, n_samples: usize) -> Self {
        DatasetSpec {
            path: None,
            synthetic: Some(preset.into()),
            n_samples: Some(n_samples),
            n_answers: default_answers(),
            splits: default_splits(),
            features: None,
            alias_rate: None,
        }
    }

    pub fn file(path: impl Into<PathBuf>) -> Self {
        DatasetSpec {
            path: Some(path.into()),
            synthetic: None,
            n_samples: None,
            ..Self::synthetic("", 0)
        }
    }

    /// Short name used in report tables.
    pub fn label(&self) -> String {
        match (&self.synthetic, &self.path) {
            (Some(p), _) => p.clone(),
            (None, Some(path)) => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            (None, None) => "?".into(),
        }
    }

    fn validate(&self, which: &str) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(format!("[{which}] {m}")));
        match (&self.path, &self.synthetic) {
            (Some(_), Some(_)) => return bad("set either `path` or `synthetic`, not both".into()),
            (None, None) => return bad("one of `path` or `synthetic` is required".into()),
            (None, Some(name)) => {
                if presets::by_name(name, 1).is_none() {
                    return bad(format!("unknown synthetic preset {name:?}"));
                }
                if self.n_samples.unwrap_or(0) == 0 {
                    return bad("synthetic datasets need n_samples > 0".into());
                }
            }
            (Some(_), None) => {
                if self.alias_rate.is_some() {
                    return bad("alias_rate only applies to synthetic datasets".into());
                }
            }
        }
        if let Some(a) = self.alias_rate {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("alias_rate {a} not in [0, 1]"));
            }
        }
        let s: f64 = self.splits.iter().sum();
        if self.splits.iter().any(|f| !(f.is_finite() && *f > 0.0)) || (s - 1.0).abs() > 1e-9 {
            return bad(format!("splits {:?} must be positive and sum to 1", self.splits));
        }
        Ok(())
    }
}

/// Back-translation settings. `translator` is one of `identity`,
/// `mock:builtin`, `mock:<phrase table path>` or `http:<base url>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub alpha: f64,
    pub fields: Vec<String>,
    pub pivots: Vec<String>,
    pub translator: String,
}

impl Default for AugmentSection {
    fn default() -> Self {
        AugmentSection {
            alpha: LEXICAL_ALPHA,
            fields: vec!["question".into(), "answers".into()],
            pivots: vec!["de".into()],
            translator: "mock:builtin".into(),
        }
    }
}

impl AugmentSection {
    pub fn to_config(&self) -> Result<AugmentConfig, ConfigError> {
        let fields = FieldSet::parse(&self.fields.join(",")).map_err(ConfigError::Invalid)?;
        let cfg = AugmentConfig {
            alpha: self.alpha,
            fields,
            pivot_languages: self.pivots.clone(),
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(format!("[augment] {e}")))?;
        Ok(cfg)
    }

    pub fn translator_spec(&self) -> Result<TranslatorSpec, ConfigError> {
        self.translator.parse().map_err(ConfigError::Invalid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TranslatorSpec {
    Identity,
    BuiltinMock,
    PhraseTable(PathBuf),
    Http(String),
}

impl std::str::FromStr for TranslatorSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "identity" => Ok(TranslatorSpec::Identity),
            "mock:builtin" | "mock" => Ok(TranslatorSpec::BuiltinMock),
            _ => {
                if let Some(p) = s.strip_prefix("mock:") {
                    Ok(TranslatorSpec::PhraseTable(PathBuf::from(p)))
                } else if let Some(u) = s.strip_prefix("http:") {
                    Ok(TranslatorSpec::Http(u.to_string()))
                } else {
                    Err(format!(
                        "unknown translator {s:?} (identity | mock:builtin | mock:<path> | http:<url>)"
                    ))
                }
            }
        }
    }
}

fn default_k() -> usize {
    DEFAULT_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub learning: LearningMode,
    #[serde(default)]
    pub det: DetMode,
    #[serde(default)]
    pub da: bool,
    #[serde(default)]
    pub vision: VisionMode,
    #[serde(default)]
    pub knowledge: KnowledgeMode,
    /// Retrieved knowledge texts fed to the reasoner.
    #[serde(default = "default_k")]
    pub k: usize,
    /// `surface<TAB>label` file; synthetic presets bring their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gazetteer: Option<PathBuf>,
    #[serde(default)]
    pub case_sensitive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<DatasetSpec>,
    pub target: DatasetSpec,
    #[serde(default)]
    pub retrieval: RetrievalHyper,
    /// Absent: retrieval-only experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<ReasoningHyper>,
    #[serde(default)]
    pub augment: AugmentSection,
    /// Relative paths are resolved against this directory. Not part of the fingerprint.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.name.trim().is_empty() {
            return bad("name must not be empty");
        }
        match (self.learning, &self.source) {
            (LearningMode::Transfer | LearningMode::DirectBoth, None) => {
                return bad("transfer and direct-both learning need a [source] dataset")
            }
            (_, Some(s)) => s.validate("source")?,
            _ => {}
        }
        self.target.validate("target")?;
        if self.det != DetMode::Off && self.gazetteer.is_none() {
            let all_synthetic = self.target.synthetic.is_some()
                && self.source.as_ref().is_none_or(|s| s.synthetic.is_some());
            if !all_synthetic {
                return bad("DET on file datasets needs a `gazetteer` path");
            }
        }
        if self.vision.any() && self.target.features.is_none() {
            return bad("a vision mode other than none needs [target] features");
        }
        if self.knowledge == KnowledgeMode::Retrieved && self.k == 0 {
            return bad("k must be at least 1 with retrieved knowledge");
        }
        if self.da {
            self.augment.to_config()?;
            self.augment.translator_spec()?;
        }
        Ok(())
    }

    /// Canonical JSON: object keys sorted, no whitespace.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Independent seed for one pipeline stage.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        self.seed ^ fnv1a(stage)
    }

    pub fn learning_label(&self) -> String {
        let mut s = self.learning.label().to_string();
        match (self.det, self.da) {
            (DetMode::Off, false) => {}
            (DetMode::Off, true) => s.push_str(" w/ DA"),
            (DetMode::Appositive, da) => s.push_str(if da { " w/ DET+DA" } else { " w/ DET" }),
            (d, da) => s.push_str(&format!(" w/ DET ({d}){}", if da { "+DA" } else { "" })),
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
name = "det-transfer"
seed = 3
learning = "transfer"
det = "appositive"
da = true

[source]
synthetic = "source"
n_samples = 300

[target]
synthetic = "target"
n_samples = 200
splits = [0.6, 0.1, 0.3]

[retrieval]
epochs = 4
negatives = 15

[augment]
translator = "identity"
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let c = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        assert_eq!(c.learning, LearningMode::Transfer);
        assert_eq!(c.det, DetMode::Appositive);
        assert_eq!(c.retrieval.epochs, 4);
        assert_eq!(c.retrieval.batch_size, RetrievalHyper::default().batch_size);
        assert_eq!(c.k, DEFAULT_K);
        assert_eq!(c.target.splits, [0.6, 0.1, 0.3]);
        assert!(c.reasoning.is_none());
        assert_eq!(c.learning_label(), "Transfer w/ DET+DA");
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        let mut b = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        b.base_dir = Some("/elsewhere".into());
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
        b.seed = 4;
        assert_ne!(a.fingerprint(), b.fingerprint());
        // TOML round trip preserves the fingerprint
        let c = ExperimentConfig::from_toml_str(&a.to_toml()).unwrap();
        assert_eq!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let no_source = EXAMPLE.replace("[source]\nsynthetic = \"source\"\nn_samples = 300\n", "");
        assert!(ExperimentConfig::from_toml_str(&no_source).is_err());
        let unknown = EXAMPLE.replace("seed = 3", "seed = 3\nbogus = 1");
        assert!(ExperimentConfig::from_toml_str(&unknown).is_err());
        let seeded_hyper = EXAMPLE.replace("epochs = 4", "epochs = 4\nseed = 9");
        assert!(ExperimentConfig::from_toml_str(&seeded_hyper).is_err());
        let vision = EXAMPLE.replace("da = true", "da = true\nvision = \"image\"");
        assert!(ExperimentConfig::from_toml_str(&vision).is_err());
        let file_det = EXAMPLE.replace("synthetic = \"target\"\nn_samples = 200", "path = \"t.jsonl\"");
        assert!(ExperimentConfig::from_toml_str(&file_det).is_err());
        let bad_tr = EXAMPLE.replace("\"identity\"", "\"carrier-pigeon\"");
        assert!(ExperimentConfig::from_toml_str(&bad_tr).is_err());
    }

    #[test]
    fn translator_specs() {
        assert_eq!("identity".parse::<TranslatorSpec>().unwrap(), TranslatorSpec::Identity);
        assert_eq!(
            "mock:tables/de.tsv".parse::<TranslatorSpec>().unwrap(),
            TranslatorSpec::PhraseTable("tables/de.tsv".into())
        );
        assert_eq!(
            "http:http://localhost:8080".parse::<TranslatorSpec>().unwrap(),
            TranslatorSpec::Http("http://localhost:8080".into())
        );
    }
}
