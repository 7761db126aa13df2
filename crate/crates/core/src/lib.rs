//! Rule-based phishing page classification, mutation-based evasion attacks
//! against it, and layered DOM similarity as a defense.

pub mod dom;
pub mod features;
pub mod classifier;
pub mod collision;
pub mod mutation;
pub mod attacks;
pub mod pelican;
pub mod personalize;
pub mod fixtures;

pub use attacks::{AttackConfig, AttackError, AttackReport, AttackResult, Knowledge, Level};
pub use classifier::{ClassificationRule, Classifier, ClassifierError, RuleSet, ScoreOracle};
pub use dom::DomTree;
pub use features::{Feature, FeatureKind, FeatureValueMap};
pub use mutation::{AdditionPool, ElementSpec};
pub use pelican::{PelicanConfig, PhishStore, Verdict, VerdictLabel};
