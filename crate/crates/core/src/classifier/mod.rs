//! Rule-based logistic classifier.
//!
//! A rule is a weighted conjunction of features. The raw score of a page is
//! the bias plus, for every rule whose features are all present, the rule
//! weight times the product of its feature values. The decision score is the
//! logistic of the raw score; pages at or above the threshold are phishing.

mod model;
mod oracle;

pub use model::{
    load_model, load_rule_set, model_from_json, model_to_json, save_model, save_model_with, KnownRule,
    RuleSet,
};
pub use oracle::ScoreOracle;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{digest_hex, is_digest, FeatureKind, FeatureValueMap};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_FREQ_DETECT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid model: {0}")]
    Schema(String),
    #[error("rule {rule}: {digest:?} is not a 64-digit lowercase hex digest")]
    HashFormat { rule: String, digest: String },
    #[error("unknown rule id {0:?}")]
    UnknownRule(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRule {
    pub id: String,
    pub features: BTreeSet<String>,
    pub weight: f64,
}

impl ClassificationRule {
    pub fn new<S: AsRef<str>>(id: &str, features: &[S], weight: f64) -> Self {
        ClassificationRule {
            id: id.to_string(),
            features: features.iter().map(|f| f.as_ref().to_string()).collect(),
            weight,
        }
    }

    /// Weight times the product of feature values.
    pub fn contribution(&self, fmap: &FeatureValueMap) -> f64 {
        self.weight * self.features.iter().map(|f| fmap.get(f)).product::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub bias: f64,
    pub threshold: f64,
    pub freq_detect_threshold: f64,
    /// Rule features are SHA-256 digests of canonical feature strings.
    pub hashed: bool,
    pub rules: Vec<ClassificationRule>,
}

/// True when the canonical string names a frequency feature.
fn is_frequency_key(key: &str) -> bool {
    FeatureKind::ALL
        .iter()
        .any(|k| k.is_frequency() && k.name() == key)
}

/// True iff every feature of the rule is non-zero and every frequency
/// feature reaches `freq_detect_threshold`.
pub fn rule_hit(rule: &ClassificationRule, fmap: &FeatureValueMap, freq_detect_threshold: f64) -> bool {
    rule.features.iter().all(|f| {
        let v = fmap.get(f);
        v != 0.0 && (!is_frequency_key(f) || v >= freq_detect_threshold)
    })
}

/// Numerically stable `e^x / (1 + e^x)`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Classifier {
    pub fn new(bias: f64, rules: Vec<ClassificationRule>) -> Result<Self, ClassifierError> {
        let c = Classifier {
            bias,
            threshold: DEFAULT_THRESHOLD,
            freq_detect_threshold: DEFAULT_FREQ_DETECT_THRESHOLD,
            hashed: false,
            rules,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ClassifierError::Schema(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.freq_detect_threshold) {
            return Err(ClassifierError::Schema(format!(
                "freq_detect_threshold {} outside [0, 1]",
                self.freq_detect_threshold
            )));
        }
        if !self.bias.is_finite() {
            return Err(ClassifierError::Schema("bias is not finite".into()));
        }
        let mut ids = BTreeSet::new();
        for r in &self.rules {
            if !ids.insert(r.id.as_str()) {
                return Err(ClassifierError::Schema(format!("duplicate rule id {:?}", r.id)));
            }
            if r.features.is_empty() {
                return Err(ClassifierError::Schema(format!("rule {:?} has no features", r.id)));
            }
            if !r.weight.is_finite() {
                return Err(ClassifierError::Schema(format!("rule {:?} weight is not finite", r.id)));
            }
            if self.hashed {
                if let Some(bad) = r.features.iter().find(|f| !is_digest(f)) {
                    return Err(ClassifierError::HashFormat {
                        rule: r.id.clone(),
                        digest: bad.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn rule(&self, id: &str) -> Option<&ClassificationRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Feature map as the rules see it: frequencies below the detection
    /// threshold are dropped and, for hashed models, keys become digests.
    pub fn prepare(&self, fmap: &FeatureValueMap) -> FeatureValueMap {
        fmap.iter()
            .filter(|(k, v)| !is_frequency_key(k) || *v >= self.freq_detect_threshold)
            .map(|(k, v)| {
                let key = if self.hashed { digest_hex(k) } else { k.to_string() };
                (key, v)
            })
            .collect()
    }

    /// Rules hit by an already prepared map.
    pub fn hits_prepared<'a>(&'a self, prepared: &'a FeatureValueMap) -> impl Iterator<Item = &'a ClassificationRule> + 'a {
        self.rules
            .iter()
            .filter(move |r| r.features.iter().all(|f| prepared.contains(f)))
    }

    pub fn hit_rules(&self, fmap: &FeatureValueMap) -> BTreeSet<String> {
        let prepared = self.prepare(fmap);
        self.hits_prepared(&prepared).map(|r| r.id.clone()).collect()
    }

    pub fn raw_score_prepared(&self, prepared: &FeatureValueMap) -> f64 {
        self.bias
            + self
                .hits_prepared(prepared)
                .map(|r| r.contribution(prepared))
                .sum::<f64>()
    }

    pub fn raw_score(&self, fmap: &FeatureValueMap) -> f64 {
        self.raw_score_prepared(&self.prepare(fmap))
    }

    pub fn score(&self, fmap: &FeatureValueMap) -> f64 {
        logistic(self.raw_score(fmap))
    }

    pub fn is_phishing(&self, score: f64) -> bool {
        score >= self.threshold
    }

    /// Rules with positive and negative weight; zero-weight rules are in
    /// neither.
    pub fn partition_rules(&self) -> (Vec<&ClassificationRule>, Vec<&ClassificationRule>) {
        let pos = self.rules.iter().filter(|r| r.weight > 0.0).collect();
        let neg = self.rules.iter().filter(|r| r.weight < 0.0).collect();
        (pos, neg)
    }

    /// Pairs `(r, r')` of distinct rules where the features of `r'` are a
    /// subset of those of `r`.
    pub fn find_subset_rules(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for r in &self.rules {
            for s in &self.rules {
                if r.id != s.id && s.features.is_subset(&r.features) {
                    out.push((r.id.clone(), s.id.clone()));
                }
            }
        }
        out
    }

    /// Rules whose features occur in no other rule.
    pub fn find_single_rules(&self) -> Vec<String> {
        let mut occurrences: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &self.rules {
            for f in &r.features {
                *occurrences.entry(f.as_str()).or_default() += 1;
            }
        }
        self.rules
            .iter()
            .filter(|r| r.features.iter().all(|f| occurrences[f.as_str()] == 1))
            .map(|r| r.id.clone())
            .collect()
    }

    /// Returns a copy with the named rules' weights set to zero.
    pub fn prune<S: AsRef<str>>(&self, ids: &[S]) -> Result<Classifier, ClassifierError> {
        let mut out = self.clone();
        for id in ids {
            let id = id.as_ref();
            let rule = out
                .rules
                .iter_mut()
                .find(|r| r.id == id)
                .ok_or_else(|| ClassifierError::UnknownRule(id.to_string()))?;
            rule.weight = 0.0;
        }
        Ok(out)
    }

    /// Negative sub-rules: adding the features of a superset rule hits them
    /// for free, so they are zeroed.
    pub fn subset_prune_targets(&self) -> Vec<String> {
        let ids: BTreeSet<String> = self
            .find_subset_rules()
            .into_iter()
            .map(|(_, sub)| sub)
            .filter(|sub| self.rule(sub).is_some_and(|r| r.weight < 0.0))
            .collect();
        ids.into_iter().collect()
    }

    /// Single rules an attacker can use directly: positive ones with a
    /// deletable feature, negative ones with only addable features.
    pub fn single_prune_targets(&self) -> Vec<String> {
        let kind = |f: &str| f.parse::<crate::features::Feature>().ok().map(|f| f.kind);
        self.find_single_rules()
            .into_iter()
            .filter(|id| {
                let r = self.rule(id).expect("single rule id comes from this model");
                if r.weight > 0.0 {
                    r.features.iter().any(|f| kind(f).is_some_and(FeatureKind::deletable))
                } else if r.weight < 0.0 {
                    r.features.iter().all(|f| kind(f).is_some_and(FeatureKind::addable))
                } else {
                    false
                }
            })
            .collect()
    }

    /// Same model with every feature replaced by its digest.
    pub fn hashed_twin(&self) -> Classifier {
        if self.hashed {
            return self.clone();
        }
        let mut out = self.clone();
        out.hashed = true;
        for r in &mut out.rules {
            r.features = r.features.iter().map(|f| digest_hex(f)).collect();
        }
        out
    }

    /// Digests of every feature the model relies on.
    pub fn manifest(&self) -> BTreeSet<String> {
        let twin = self.hashed_twin();
        twin.rules.into_iter().flat_map(|r| r.features).collect()
    }
}
