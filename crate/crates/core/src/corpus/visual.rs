//! Precomputed per-clip visual features.
//!
//! File layout (JSONL): the first non-empty line is a header
//! `{"header": {"d_img": 3, "d_face": 2}}`; every following line is
//! `{"clip_id": "...", "image_vec": [...], "facial_vec": [...], "caption_text": "..."}`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualFeatures {
    pub clip_id: String,
    pub image_vec: Vec<f64>,
    pub facial_vec: Vec<f64>,
    #[serde(default)]
    pub caption_text: String,
}

#[derive(Debug, Deserialize)]
struct HeaderLine {
    header: Dims,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
struct Dims {
    d_img: usize,
    d_face: usize,
}

/// Feature records keyed by clip id, all with the declared dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualStore {
    pub d_img: usize,
    pub d_face: usize,
    clips: BTreeMap<String, VisualFeatures>,
}

impl VisualStore {
    pub fn empty(d_img: usize, d_face: usize) -> Self {
        VisualStore {
            d_img,
            d_face,
            clips: BTreeMap::new(),
        }
    }

    pub fn get(&self, clip_id: &str) -> Option<&VisualFeatures> {
        self.clips.get(clip_id)
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn insert(&mut self, feats: VisualFeatures) -> std::result::Result<(), String> {
        if feats.image_vec.len() != self.d_img {
            return Err(format!(
                "image_vec has {} values, header declares {}",
                feats.image_vec.len(),
                self.d_img
            ));
        }
        if feats.facial_vec.len() != self.d_face {
            return Err(format!(
                "facial_vec has {} values, header declares {}",
                feats.facial_vec.len(),
                self.d_face
            ));
        }
        if feats.image_vec.iter().chain(&feats.facial_vec).any(|v| !v.is_finite()) {
            return Err("non-finite feature value".into());
        }
        if self.clips.contains_key(&feats.clip_id) {
            return Err(format!("duplicate clip_id {:?}", feats.clip_id));
        }
        self.clips.insert(feats.clip_id.clone(), feats);
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut store: Option<VisualStore> = None;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let bad = |message: String| CorpusError::Visual {
                line: line_no,
                message,
            };
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            match store.as_mut() {
                None => {
                    let h: HeaderLine = serde_json::from_str(&line)
                        .map_err(|e| bad(format!("expected header record: {e}")))?;
                    store = Some(VisualStore::empty(h.header.d_img, h.header.d_face));
                }
                Some(s) => {
                    let f: VisualFeatures =
                        serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
                    s.insert(f).map_err(bad)?;
                }
            }
        }
        store.ok_or(CorpusError::Visual {
            line: 0,
            message: "missing header record".into(),
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::json!({"header": Dims { d_img: self.d_img, d_face: self.d_face }})
            .to_string();
        out.push('\n');
        for f in self.clips.values() {
            out.push_str(&serde_json::to_string(f).expect("features serialize"));
            out.push('\n');
        }
        out
    }
}

pub fn load_visual_features(path: &Path) -> Result<VisualStore> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    VisualStore::read(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_header_and_records() {
        let text = r#"{"header": {"d_img": 2, "d_face": 1}}
{"clip_id": "c1", "image_vec": [0.5, 1.0], "facial_vec": [2.0], "caption_text": "a man in a hat"}
"#;
        let store = VisualStore::read(text.as_bytes()).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.get("c1").unwrap().caption_text, "a man in a hat");
        let back = VisualStore::read(store.to_jsonl().as_bytes()).unwrap();
        assert_eq!(back, store);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let text = r#"{"header": {"d_img": 2, "d_face": 1}}
{"clip_id": "c1", "image_vec": [0.5], "facial_vec": [2.0]}
"#;
        let err = VisualStore::read(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn requires_header() {
        let text = r#"{"clip_id": "c1", "image_vec": [], "facial_vec": []}"#;
        assert!(VisualStore::read(text.as_bytes()).is_err());
    }
}
