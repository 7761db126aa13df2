use std::collections::BTreeSet;

use crate::dom::DomTree;
use crate::features::extract_features;

use super::Classifier;

/// Query access to a classifier's decision score, counting every query.
#[derive(Debug, Clone)]
pub struct ScoreOracle {
    classifier: Classifier,
    queries: u64,
}

impl ScoreOracle {
    pub fn new(classifier: Classifier) -> Self {
        ScoreOracle {
            classifier,
            queries: 0,
        }
    }

    pub fn score(&mut self, page: &DomTree) -> f64 {
        self.queries += 1;
        self.classifier.score(&extract_features(page))
    }

    pub fn query_count(&self) -> u64 {
        self.queries
    }

    pub fn threshold(&self) -> f64 {
        self.classifier.threshold
    }

    /// Ids of the rules a page hits. Evaluation bookkeeping only: it is not
    /// a query and attacks must not base decisions on it.
    pub fn audit_hit_rules(&self, page: &DomTree) -> BTreeSet<String> {
        self.classifier.hit_rules(&extract_features(page))
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }
}
