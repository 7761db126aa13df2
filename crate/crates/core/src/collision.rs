//! Recovering hashed feature names from sample pages.
//!
//! Candidates are the features extracted from a corpus of real pages and
//! URLs; each candidate is hashed and looked up in the digest manifest of a
//! hashed model. Nothing is guessed: a digest is recovered exactly when its
//! preimage occurs in the corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::classifier::Classifier;
use crate::dom::{parse_html_bytes, DomTree};
use crate::features::{digest_hex, extract_features, extract_url_features, is_digest};

#[derive(Debug, Error)]
pub enum CollisionError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Manifest {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{0:?} is not a 64-digit lowercase hex digest")]
    HashFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Phish,
    Legit,
}

#[derive(Debug, Clone)]
pub struct CorpusPage {
    pub url: String,
    pub tree: DomTree,
    pub label: Label,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub pages: Vec<CorpusPage>,
    pub url_list: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ManifestRecord {
    url: String,
    #[serde(default)]
    path: Option<PathBuf>,
    #[serde(default)]
    label: Option<Label>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CollisionError + '_ {
    move |source| CollisionError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl Corpus {
    pub fn push_page(&mut self, tree: DomTree, label: Label) {
        self.pages.push(CorpusPage {
            url: tree.source_url.clone(),
            tree,
            label,
        });
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty() && self.url_list.is_empty()
    }

    /// Loads a JSON-lines manifest of `{"url", "path", "label"}` records.
    /// Records without `path` are bare URLs. Paths are relative to the
    /// manifest's directory.
    pub fn load(manifest: impl AsRef<Path>) -> Result<Corpus, CollisionError> {
        let manifest = manifest.as_ref();
        let text = fs::read_to_string(manifest).map_err(io_err(manifest))?;
        let dir = manifest.parent().unwrap_or(Path::new("."));
        let mut corpus = Corpus::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| CollisionError::Manifest {
                path: manifest.display().to_string(),
                line: i + 1,
                reason,
            };
            let rec: ManifestRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            if url::Url::parse(&rec.url).is_err() {
                return Err(bad(format!("url {:?} is not absolute", rec.url)));
            }
            match rec.path {
                Some(p) => {
                    let full = dir.join(p);
                    let bytes = fs::read(&full).map_err(io_err(&full))?;
                    let tree = parse_html_bytes(&bytes, &rec.url).map_err(|e| bad(e.to_string()))?;
                    let label = rec.label.ok_or_else(|| bad("page record without label".into()))?;
                    corpus.pages.push(CorpusPage {
                        url: rec.url,
                        tree,
                        label,
                    });
                }
                None => corpus.url_list.push(rec.url),
            }
        }
        Ok(corpus)
    }
}

/// Every canonical feature string extractable from the corpus.
pub fn harvest_candidates(corpus: &Corpus) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = corpus
        .pages
        .par_iter()
        .map(|p| {
            extract_features(&p.tree)
                .keys()
                .map(str::to_string)
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    for url in &corpus.url_list {
        if let Ok(features) = extract_url_features(url) {
            out.extend(features.iter().map(|f| f.canonical()));
        }
    }
    out
}

fn as_millis<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u64(d.as_millis() as u64)
}

#[derive(Debug, Clone, Serialize)]
pub struct InversionReport {
    /// Digest to canonical feature string.
    pub recovered: BTreeMap<String, String>,
    pub unrecovered: BTreeSet<String>,
    #[serde(rename = "elapsed_ms", serialize_with = "as_millis")]
    pub elapsed: Duration,
    pub candidates_tried: usize,
}

impl InversionReport {
    pub fn recovery_rate(&self) -> f64 {
        let total = self.recovered.len() + self.unrecovered.len();
        if total == 0 {
            1.0
        } else {
            self.recovered.len() as f64 / total as f64
        }
    }
}

/// Hashes every candidate and keeps those whose digest is in the manifest.
/// Duplicate manifest entries collapse; the result does not depend on the
/// thread schedule.
pub fn invert_hashes<S: AsRef<str>>(
    candidates: &BTreeSet<String>,
    manifest: &[S],
) -> Result<InversionReport, CollisionError> {
    let start = Instant::now();
    let mut targets = BTreeSet::new();
    for d in manifest {
        let d = d.as_ref();
        if !is_digest(d) {
            return Err(CollisionError::HashFormat(d.to_string()));
        }
        targets.insert(d.to_string());
    }
    let ordered: Vec<&String> = candidates.iter().collect();
    let recovered: BTreeMap<String, String> = ordered
        .par_chunks(256)
        .flat_map_iter(|chunk| {
            chunk.iter().filter_map(|c| {
                let d = digest_hex(c);
                targets.contains(&d).then(|| (d, (*c).clone()))
            })
        })
        .collect();
    let unrecovered = targets
        .into_iter()
        .filter(|d| !recovered.contains_key(d))
        .collect();
    Ok(InversionReport {
        recovered,
        unrecovered,
        elapsed: start.elapsed(),
        candidates_tried: candidates.len(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RuleInference {
    /// Every feature recovered: the rule can be added or deleted.
    pub fully_inferred: Vec<String>,
    /// Some features recovered: the rule can only be broken by deletion.
    pub partially_inferred: Vec<String>,
    pub opaque: Vec<String>,
}

pub fn infer_rules(hashed: &Classifier, recovered: &BTreeMap<String, String>) -> RuleInference {
    let mut out = RuleInference::default();
    for r in &hashed.rules {
        let known = r.features.iter().filter(|d| recovered.contains_key(*d)).count();
        let bucket = if known == r.features.len() {
            &mut out.fully_inferred
        } else if known > 0 {
            &mut out.partially_inferred
        } else {
            &mut out.opaque
        };
        bucket.push(r.id.clone());
    }
    out
}

/// Plaintext view of a hashed model as far as it was recovered: recovered
/// digests become canonical strings, the rest stay digests and never match
/// an extracted feature.
pub fn decode_classifier(hashed: &Classifier, recovered: &BTreeMap<String, String>) -> Classifier {
    let mut out = hashed.clone();
    out.hashed = false;
    for r in &mut out.rules {
        r.features = r
            .features
            .iter()
            .map(|d| recovered.get(d).cloned().unwrap_or_else(|| d.clone()))
            .collect();
    }
    out
}

/// Reads a digest manifest: one 64-hex digest per line.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<String>, CollisionError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !is_digest(line) {
            return Err(CollisionError::Manifest {
                path: path.display().to_string(),
                line: i + 1,
                reason: format!("{line:?} is not a 64-digit lowercase hex digest"),
            });
        }
        out.push(line.to_string());
    }
    Ok(out)
}

pub fn write_manifest<S: AsRef<str>>(path: impl AsRef<Path>, digests: &[S]) -> Result<(), CollisionError> {
    let path = path.as_ref();
    let mut text = String::new();
    for d in digests {
        text.push_str(d.as_ref());
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}
