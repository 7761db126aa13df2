//! Evasion attacks at three levels of knowledge.
//!
//! * White box: the full model. Greedy deletion of the feature with the
//!   largest influence, or addition of the negative rule with the most
//!   negative influence.
//! * Grey box: rule feature sets without weights. Tentative deletions, then
//!   tentative rule additions, each kept only if the oracle score drops.
//! * Black box: nothing but the oracle. Every modifiable node is tried, then
//!   random invisible additions from a pool, rolled back in batches that do
//!   not help.
//!
//! All levels query the decision score through a [`ScoreOracle`], which
//! counts the queries.

mod black;
mod grey;
mod influence;
mod white;

pub use black::black_box;
pub use grey::grey_box;
pub use influence::{influence_feature, influence_rule};
pub use white::white_box;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Classifier, RuleSet, ScoreOracle};
use crate::dom::DomTree;
use crate::mutation::{apply, AdditionPool, MutationPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    White,
    Grey,
    Black,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::White, Level::Grey, Level::Black];

    pub fn name(self) -> &'static str {
        match self {
            Level::White => "white",
            Level::Grey => "grey",
            Level::Black => "black",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "white" => Ok(Level::White),
            "grey" | "gray" => Ok(Level::Grey),
            "black" => Ok(Level::Black),
            _ => Err(format!("unknown attack level {s:?}")),
        }
    }
}

/// What the attacker knows besides the oracle.
#[derive(Debug, Clone)]
pub enum Knowledge {
    White(Classifier),
    Grey(RuleSet),
    Black,
}

impl Knowledge {
    pub fn level(&self) -> Level {
        match self {
            Knowledge::White(_) => Level::White,
            Knowledge::Grey(_) => Level::Grey,
            Knowledge::Black => Level::Black,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    /// Host for external references the planner has to add.
    pub external_host: String,
    /// Accepted-step cap for the white box.
    pub max_steps: usize,
    /// Delete-then-add rounds for the grey box.
    pub max_rounds: usize,
    /// Black-box addition budget.
    pub budget: usize,
    /// Black-box additions between checkpoints.
    pub batch: usize,
    pub rng_seed: u64,
    /// When set, the white box only deletes features of, and adds, these
    /// rules.
    pub restrict_rules: Option<BTreeSet<String>>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            external_host: "static-partner.net".to_string(),
            max_steps: 500,
            max_rounds: 16,
            budget: 2000,
            batch: 3,
            rng_seed: 0,
            restrict_rules: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub op: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub level: Level,
    pub success: bool,
    pub seed_page: DomTree,
    pub final_page: DomTree,
    /// Seed score first, then one entry per accepted step.
    pub steps: Vec<Step>,
    /// The accepted plans, in order; replaying them on the seed yields the
    /// final page.
    pub plans: Vec<MutationPlan>,
    /// Accepted mutation atoms: deleted features and added rules (white and
    /// grey), kept node operations (black).
    pub mutated_features: usize,
    /// Sum over accepted steps of rules whose hit status changed.
    pub mutated_rules: usize,
    pub queries: u64,
    /// Node operations applied, including rejected and rolled-back ones.
    pub operations: usize,
    /// Black-box invisible additions, including rolled-back ones.
    pub additions: usize,
    /// Black-box score once every modifiable node was tried.
    pub score_after_modification: Option<f64>,
    pub elapsed: Duration,
    pub rng_seed: Option<u64>,
}

impl AttackResult {
    pub fn initial_score(&self) -> f64 {
        self.steps[0].score
    }

    pub fn final_score(&self) -> f64 {
        self.steps.last().expect("steps start with the seed").score
    }
}

#[derive(Debug, Clone, Error)]
pub enum AttackError {
    #[error("page is not detected as phishing (score {0:.6})")]
    NotPhishing(f64),
    #[error("no applicable mutation left; score {:.6}", .0.final_score())]
    Exhausted(Box<AttackResult>),
    #[error("addition budget spent; score {:.6}", .0.final_score())]
    BudgetExhausted(Box<AttackResult>),
    #[error("feature {0} is not present")]
    FeatureAbsent(String),
    #[error("rule {0} is already hit")]
    RuleAlreadyHit(String),
    #[error("unknown rule {0}")]
    UnknownRule(String),
}

impl AttackError {
    /// The partial result of a failed attack.
    pub fn partial(&self) -> Option<&AttackResult> {
        match self {
            AttackError::Exhausted(r) | AttackError::BudgetExhausted(r) => Some(r),
            _ => None,
        }
    }
}

/// Runs the attack matching the knowledge level.
pub fn run_attack(
    knowledge: &Knowledge,
    oracle: &mut ScoreOracle,
    page: &DomTree,
    pool: &AdditionPool,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    match knowledge {
        Knowledge::White(model) => white_box(model, oracle, page, cfg),
        Knowledge::Grey(rules) => grey_box(rules, oracle, page, cfg),
        Knowledge::Black => black_box(oracle, page, pool, cfg),
    }
}

/// Mutable attack state shared by the three levels.
struct Run<'a> {
    level: Level,
    oracle: &'a mut ScoreOracle,
    seed: DomTree,
    current: DomTree,
    score: f64,
    hits: BTreeSet<String>,
    steps: Vec<Step>,
    plans: Vec<MutationPlan>,
    mutated_features: usize,
    mutated_rules: usize,
    operations: usize,
    additions: usize,
    score_after_modification: Option<f64>,
    start: Instant,
    queries_before: u64,
    rng_seed: Option<u64>,
}

impl<'a> Run<'a> {
    fn start(level: Level, oracle: &'a mut ScoreOracle, page: &DomTree) -> Result<Self, AttackError> {
        let start = Instant::now();
        let queries_before = oracle.query_count();
        let score = oracle.score(page);
        if score < oracle.threshold() {
            return Err(AttackError::NotPhishing(score));
        }
        let hits = oracle.audit_hit_rules(page);
        Ok(Run {
            level,
            oracle,
            seed: page.clone(),
            current: page.clone(),
            score,
            hits,
            steps: vec![Step {
                op: "seed".to_string(),
                score,
            }],
            plans: Vec::new(),
            mutated_features: 0,
            mutated_rules: 0,
            operations: 0,
            additions: 0,
            score_after_modification: None,
            start,
            queries_before,
            rng_seed: None,
        })
    }

    fn evaded(&self) -> bool {
        self.score < self.oracle.threshold()
    }

    /// Applies `plan` tentatively and keeps it iff the score drops.
    fn try_plan(&mut self, plan: &MutationPlan, atoms: usize, op: String) -> bool {
        let Ok(next) = apply(&self.current, plan) else {
            return false;
        };
        self.operations += plan.len();
        let score = self.oracle.score(&next);
        if score < self.score {
            self.plans.push(plan.clone());
            self.accept(next, score, atoms, op);
            true
        } else {
            false
        }
    }

    fn accept(&mut self, next: DomTree, score: f64, atoms: usize, op: String) {
        let hits = self.oracle.audit_hit_rules(&next);
        self.mutated_rules += hits.symmetric_difference(&self.hits).count();
        self.mutated_features += atoms;
        self.hits = hits;
        self.current = next;
        self.score = score;
        self.steps.push(Step { op, score });
    }

    fn result(self) -> AttackResult {
        AttackResult {
            level: self.level,
            success: self.score < self.oracle.threshold(),
            seed_page: self.seed,
            final_page: self.current,
            steps: self.steps,
            plans: self.plans,
            mutated_features: self.mutated_features,
            mutated_rules: self.mutated_rules,
            queries: self.oracle.query_count() - self.queries_before,
            operations: self.operations,
            additions: self.additions,
            score_after_modification: self.score_after_modification,
            elapsed: self.start.elapsed(),
            rng_seed: self.rng_seed,
        }
    }

    fn finish(self) -> Result<AttackResult, AttackError> {
        let r = self.result();
        if r.success {
            Ok(r)
        } else {
            Err(AttackError::Exhausted(Box::new(r)))
        }
    }
}

/// The serialized form of an attack outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub level: Level,
    pub success: bool,
    pub seed_path: String,
    pub final_path: String,
    pub initial_score: f64,
    pub final_score: f64,
    pub steps: Vec<Step>,
    pub mutated_features: usize,
    pub mutated_rules: usize,
    pub queries: u64,
    pub operations: usize,
    pub additions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_after_modification: Option<f64>,
    /// Left out unless timing is requested, so reports are reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
    pub rng_seed: Option<u64>,
}

impl AttackReport {
    pub fn new(r: &AttackResult, seed_path: &str, final_path: &str, timing: bool) -> Self {
        AttackReport {
            level: r.level,
            success: r.success,
            seed_path: seed_path.to_string(),
            final_path: final_path.to_string(),
            initial_score: r.initial_score(),
            final_score: r.final_score(),
            steps: r.steps.clone(),
            mutated_features: r.mutated_features,
            mutated_rules: r.mutated_rules,
            queries: r.queries,
            operations: r.operations,
            additions: r.additions,
            score_after_modification: r.score_after_modification,
            elapsed_ms: timing.then(|| r.elapsed.as_secs_f64() * 1000.0),
            rng_seed: r.rng_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_names_round_trip() {
        for l in Level::ALL {
            assert_eq!(l.name().parse::<Level>().unwrap(), l);
            assert_eq!(serde_json::to_string(&l).unwrap(), format!("\"{l}\""));
        }
        assert!("purple".parse::<Level>().is_err());
    }
}
