//! JSON model files.
//!
//! ```json
//! {"bias": -1.0, "threshold": 0.5, "freq_detect_threshold": 0.05, "hashed": false,
//!  "rules": [{"id": "r1", "weight": 2.23, "features": ["UrlPathToken=login"]}]}
//! ```
//!
//! `weight` may be omitted when the weights are withheld (rule sets); a
//! full model requires it.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ClassificationRule, Classifier, ClassifierError, DEFAULT_FREQ_DETECT_THRESHOLD, DEFAULT_THRESHOLD};

#[derive(Debug, Serialize, Deserialize)]
struct RuleRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
    features: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelRecord {
    bias: Option<f64>,
    threshold: f64,
    freq_detect_threshold: f64,
    hashed: bool,
    rules: Vec<RuleRecord>,
}

/// A rule known without its weight.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct KnownRule {
    pub id: String,
    pub features: BTreeSet<String>,
}

/// Rules without weights, the knowledge available when only the model's
/// structure has leaked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    pub hashed: bool,
    pub rules: Vec<KnownRule>,
}

impl RuleSet {
    pub fn from_classifier(c: &Classifier) -> Self {
        RuleSet {
            hashed: c.hashed,
            rules: c
                .rules
                .iter()
                .map(|r| KnownRule {
                    id: r.id.clone(),
                    features: r.features.clone(),
                })
                .collect(),
        }
    }
}

fn read(path: &Path) -> Result<Value, ClassifierError> {
    let text = fs::read_to_string(path).map_err(|source| ClassifierError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| ClassifierError::Schema(e.to_string()))?;
    Ok(value)
}

fn parse_record(value: Value, require_weights: bool) -> Result<ModelRecord, ClassifierError> {
    let obj = value
        .as_object()
        .ok_or_else(|| ClassifierError::Schema("model must be a JSON object".into()))?;
    let mut required = vec!["threshold", "rules"];
    if require_weights {
        required.push("bias");
    }
    for key in required {
        if !obj.contains_key(key) {
            return Err(ClassifierError::Schema(format!("missing key {key:?}")));
        }
    }
    let mut obj = obj.clone();
    obj.entry("freq_detect_threshold")
        .or_insert(Value::from(DEFAULT_FREQ_DETECT_THRESHOLD));
    obj.entry("hashed").or_insert(Value::Bool(false));
    let record: ModelRecord = serde_json::from_value(Value::Object(obj))
        .map_err(|e| ClassifierError::Schema(e.to_string()))?;
    Ok(record)
}

pub fn model_from_json(value: Value) -> Result<Classifier, ClassifierError> {
    let record = parse_record(value, true)?;
    let rules = record
        .rules
        .into_iter()
        .map(|r| {
            let weight = r
                .weight
                .ok_or_else(|| ClassifierError::Schema(format!("rule {:?} has no weight", r.id)))?;
            Ok(ClassificationRule {
                id: r.id,
                features: r.features.into_iter().collect(),
                weight,
            })
        })
        .collect::<Result<Vec<_>, ClassifierError>>()?;
    let c = Classifier {
        bias: record.bias.unwrap_or(0.0),
        threshold: record.threshold,
        freq_detect_threshold: record.freq_detect_threshold,
        hashed: record.hashed,
        rules,
    };
    c.validate()?;
    Ok(c)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Classifier, ClassifierError> {
    model_from_json(read(path.as_ref())?)
}

/// Loads the rule structure of a model file; weights and bias are ignored
/// when present.
pub fn load_rule_set(path: impl AsRef<Path>) -> Result<RuleSet, ClassifierError> {
    let record = parse_record(read(path.as_ref())?, false)?;
    let mut c = Classifier {
        bias: 0.0,
        threshold: record.threshold,
        freq_detect_threshold: record.freq_detect_threshold,
        hashed: record.hashed,
        rules: Vec::new(),
    };
    for r in record.rules {
        c.rules.push(ClassificationRule {
            id: r.id,
            features: r.features.into_iter().collect(),
            weight: 0.0,
        });
    }
    c.validate()?;
    Ok(RuleSet::from_classifier(&c))
}

pub fn model_to_json(c: &Classifier, strip_weights: bool) -> Value {
    let record = ModelRecord {
        bias: (!strip_weights).then_some(c.bias),
        threshold: c.threshold,
        freq_detect_threshold: c.freq_detect_threshold,
        hashed: c.hashed,
        rules: c
            .rules
            .iter()
            .map(|r| RuleRecord {
                id: r.id.clone(),
                weight: (!strip_weights).then_some(r.weight),
                features: r.features.iter().cloned().collect(),
            })
            .collect(),
    };
    let mut v = serde_json::to_value(record).expect("model record serializes");
    if strip_weights {
        v.as_object_mut().expect("object").remove("bias");
    }
    v
}

pub fn save_model_with(c: &Classifier, path: impl AsRef<Path>, strip_weights: bool) -> Result<(), ClassifierError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(&model_to_json(c, strip_weights))
        .expect("model serializes");
    text.push('\n');
    fs::write(path, text).map_err(|source| ClassifierError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_model(c: &Classifier, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
    save_model_with(c, path, false)
}

impl Default for Classifier {
    fn default() -> Self {
        Classifier {
            bias: 0.0,
            threshold: DEFAULT_THRESHOLD,
            freq_detect_threshold: DEFAULT_FREQ_DETECT_THRESHOLD,
            hashed: false,
            rules: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::parse_html;
    use crate::features::{digest_hex, extract_features};

    fn sample() -> Classifier {
        Classifier::new(
            -1.25,
            vec![
                ClassificationRule::new("r1", &["UrlPathToken=login"], 2.23),
                ClassificationRule::new("r2", &["PageTerm=login", "PageHasForms"], 0.1 + 0.2),
            ],
        )
        .unwrap()
    }

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let c = sample();
        save_model(&c, &p).unwrap();
        assert_eq!(load_model(&p).unwrap(), c);
        let h = c.hashed_twin();
        save_model(&h, &p).unwrap();
        assert_eq!(load_model(&p).unwrap(), h);
    }

    #[test]
    fn missing_threshold_is_schema_error() {
        let v = serde_json::json!({"bias": 0.0, "rules": []});
        assert!(matches!(model_from_json(v), Err(ClassifierError::Schema(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_model("/nonexistent/m.json"), Err(ClassifierError::Io { .. })));
    }

    #[test]
    fn bad_digest_is_hash_format_error() {
        let v = serde_json::json!({"bias": 0.0, "threshold": 0.5, "hashed": true,
            "rules": [{"id": "a", "weight": 1.0, "features": ["ABC"]}]});
        assert!(matches!(model_from_json(v), Err(ClassifierError::HashFormat { .. })));
    }

    #[test]
    fn stripped_model_loads_as_rule_set_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("grey.json");
        save_model_with(&sample(), &p, true).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(!text.contains("weight") && !text.contains("bias"));
        assert!(matches!(load_model(&p), Err(ClassifierError::Schema(_))));
        let rs = load_rule_set(&p).unwrap();
        assert_eq!(rs, RuleSet::from_classifier(&sample()));
    }

    #[test]
    fn hashed_model_hits_hashed_extraction() {
        let v = serde_json::json!({"bias": 0.0, "threshold": 0.5, "hashed": true,
            "rules": [{"id": "a", "weight": 1.5, "features": [digest_hex("PageTerm=login")]}]});
        let c = model_from_json(v).unwrap();
        let page = parse_html("<p>please login</p>", "https://a.com/");
        assert_eq!(c.raw_score(&extract_features(&page)), 1.5);
    }
}
