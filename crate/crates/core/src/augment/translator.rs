//! Translation backends used for back translation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Failure of a translation backend. `index` points at the first text of the
/// batch that could not be translated, when known.
#[derive(Debug, Clone, thiserror::Error)]
#[error("translator error{}: {message}", index.map(|i| format!(" at text {i}")).unwrap_or_default())]
pub struct TranslateError {
    pub index: Option<usize>,
    pub message: String,
}

impl TranslateError {
    pub fn new(index: Option<usize>, message: impl Into<String>) -> Self {
        TranslateError {
            index,
            message: message.into(),
        }
    }
}

/// Batch translation into and out of a pivot language. Output is 1:1 and
/// order-preserving with the input.
pub trait Translator: Send + Sync {
    fn translate(&self, texts: &[String], pivot: &str) -> Result<Vec<String>, TranslateError>;
    fn back_translate(&self, texts: &[String], pivot: &str) -> Result<Vec<String>, TranslateError>;
}

/// Returns every text unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, texts: &[String], _pivot: &str) -> Result<Vec<String>, TranslateError> {
        Ok(texts.to_vec())
    }

    fn back_translate(&self, texts: &[String], _pivot: &str) -> Result<Vec<String>, TranslateError> {
        Ok(texts.to_vec())
    }
}

/// Deterministic mock backed by two phrase tables (forward and backward).
///
/// TSV format, one rule per line: `fwd<TAB>source<TAB>pivot` or
/// `back<TAB>pivot<TAB>target`. Phrases are replaced longest-first at word
/// boundaries; unknown words pass through untouched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhraseTableTranslator {
    forward: Vec<(String, String)>,
    backward: Vec<(String, String)>,
}

impl PhraseTableTranslator {
    pub fn new(forward: &[(&str, &str)], backward: &[(&str, &str)]) -> Self {
        let own = |rules: &[(&str, &str)]| {
            let mut v: Vec<(String, String)> =
                rules.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
            v.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
            v
        };
        PhraseTableTranslator {
            forward: own(forward),
            backward: own(backward),
        }
    }

    pub fn from_tsv(text: &str) -> Result<Self, String> {
        let mut fwd: BTreeMap<String, String> = BTreeMap::new();
        let mut back: BTreeMap<String, String> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [dir, from, to] = cols[..] else {
                return Err(format!("line {}: expected direction<TAB>from<TAB>to", i + 1));
            };
            if from.is_empty() {
                return Err(format!("line {}: empty phrase", i + 1));
            }
            let table = match dir {
                "fwd" => &mut fwd,
                "back" => &mut back,
                other => return Err(format!("line {}: unknown direction {other:?}", i + 1)),
            };
            table.insert(from.to_string(), to.to_string());
        }
        let f: Vec<(&str, &str)> = fwd.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let b: Vec<(&str, &str)> = back.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        Ok(Self::new(&f, &b))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_tsv(&text)
    }

    fn apply(rules: &[(String, String)], text: &str) -> String {
        let chars: Vec<char> = text.chars().collect();
        let mut out = String::with_capacity(text.len());
        let mut i = 0;
        'outer: while i < chars.len() {
            let boundary = i == 0 || !chars[i - 1].is_alphanumeric();
            if boundary {
                for (from, to) in rules {
                    let pat: Vec<char> = from.chars().collect();
                    let end = i + pat.len();
                    if end <= chars.len()
                        && chars[i..end] == pat[..]
                        && (end == chars.len() || !chars[end].is_alphanumeric())
                    {
                        out.push_str(to);
                        i = end;
                        continue 'outer;
                    }
                }
            }
            out.push(chars[i]);
            i += 1;
        }
        out
    }

    /// A small English paraphrase table covering the built-in synthetic templates.
    pub fn synthetic_default() -> Self {
        let pairs: &[(&str, &str, &str)] = &[
            ("upset", "verärgert", "annoyed"),
            ("forgot", "vergaß", "did not remember"),
            ("bring", "mitbringen", "take"),
            ("brought", "mitgebracht", "took"),
            ("meet", "treffen", "run into"),
            ("first met", "zuerst getroffen", "initially ran into"),
            ("helped", "half", "assisted"),
            ("prepare", "vorbereiten", "get ready"),
            ("call", "anrufen", "phone"),
            ("phoned", "angerufen", "called"),
            ("worried", "besorgt", "anxious"),
            ("losing", "verlieren", "misplacing"),
            ("end up", "landen", "wind up"),
            ("drove", "fuhr", "gave a ride to"),
            ("surprised", "überrascht", "astonished"),
            ("the news", "die Nachricht", "the report"),
            ("weird", "seltsam", "strange"),
        ];
        let fwd: Vec<(&str, &str)> = pairs.iter().map(|(en, de, _)| (*en, *de)).collect();
        let back: Vec<(&str, &str)> = pairs.iter().map(|(_, de, en)| (*de, *en)).collect();
        Self::new(&fwd, &back)
    }
}

impl Translator for PhraseTableTranslator {
    fn translate(&self, texts: &[String], _pivot: &str) -> Result<Vec<String>, TranslateError> {
        Ok(texts.iter().map(|t| Self::apply(&self.forward, t)).collect())
    }

    fn back_translate(&self, texts: &[String], _pivot: &str) -> Result<Vec<String>, TranslateError> {
        Ok(texts.iter().map(|t| Self::apply(&self.backward, t)).collect())
    }
}

#[derive(Debug, Serialize)]
struct TranslateRequest<'a> {
    texts: &'a [String],
    pivot: &'a str,
}

#[derive(Debug, Deserialize)]
struct TranslateResponse {
    texts: Vec<String>,
}

/// Client for a translation service exposing `POST /translate` and
/// `POST /back_translate` with body `{"texts": [...], "pivot": "de"}`.
#[derive(Debug, Clone)]
pub struct HttpTranslator {
    base_url: String,
    batch_size: usize,
    max_in_flight: usize,
    agent: ureq::Agent,
}

/// Environment variable that overrides the translator endpoint.
pub const TRANSLATOR_URL_ENV: &str = "KBQA_TRANSLATOR_URL";

impl HttpTranslator {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpTranslator {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            batch_size: 64,
            max_in_flight: 4,
            agent: ureq::Agent::new_with_defaults(),
        }
    }

    /// Uses `KBQA_TRANSLATOR_URL` when set, `fallback` otherwise.
    pub fn from_env_or(fallback: &str) -> Self {
        match std::env::var(TRANSLATOR_URL_ENV) {
            Ok(url) if !url.trim().is_empty() => Self::new(url),
            _ => Self::new(fallback),
        }
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post(&self, endpoint: &str, texts: &[String], pivot: &str, offset: usize) -> Result<Vec<String>, TranslateError> {
        let url = format!("{}/{endpoint}", self.base_url);
        let fail = |m: String| TranslateError::new(Some(offset), m);
        let resp: TranslateResponse = self
            .agent
            .post(&url)
            .send_json(TranslateRequest { texts, pivot })
            .map_err(|e| fail(format!("POST {url}: {e}")))?
            .body_mut()
            .read_json()
            .map_err(|e| fail(format!("POST {url}: bad response body: {e}")))?;
        if resp.texts.len() != texts.len() {
            return Err(fail(format!(
                "POST {url}: sent {} texts, received {}",
                texts.len(),
                resp.texts.len()
            )));
        }
        Ok(resp.texts)
    }

    fn batched(&self, endpoint: &str, texts: &[String], pivot: &str) -> Result<Vec<String>, TranslateError> {
        let chunks: Vec<(usize, &[String])> = texts
            .chunks(self.batch_size)
            .enumerate()
            .map(|(i, c)| (i * self.batch_size, c))
            .collect();
        let mut out = Vec::with_capacity(texts.len());
        for wave in chunks.chunks(self.max_in_flight) {
            let results: Vec<Result<Vec<String>, TranslateError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|&(offset, chunk)| scope.spawn(move || self.post(endpoint, chunk, pivot, offset)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(TranslateError::new(None, "request thread panicked"))))
                    .collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }
}

impl Translator for HttpTranslator {
    fn translate(&self, texts: &[String], pivot: &str) -> Result<Vec<String>, TranslateError> {
        self.batched("translate", texts, pivot)
    }

    fn back_translate(&self, texts: &[String], pivot: &str) -> Result<Vec<String>, TranslateError> {
        self.batched("back_translate", texts, pivot)
    }
}
