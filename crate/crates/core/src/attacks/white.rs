use std::collections::BTreeSet;

use crate::classifier::{Classifier, ScoreOracle};
use crate::dom::DomTree;
use crate::features::{extract_features, Feature, FeatureValueMap};
use crate::mutation::Planner;

use super::influence::{influence_feature, influence_rule};
use super::{AttackConfig, AttackError, AttackResult, Level, Run};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Choice {
    Delete(String, f64),
    Add(String, f64),
}

impl Choice {
    fn label(&self) -> String {
        match self {
            Choice::Delete(f, _) => format!("delete {f}"),
            Choice::Add(r, _) => format!("add {r}"),
        }
    }
}

fn allowed(cfg: &AttackConfig, id: &str) -> bool {
    cfg.restrict_rules.as_ref().map_or(true, |s| s.contains(id))
}

/// Whether every feature of the rule the page lacks can be added.
pub(crate) fn rule_addable(prepared: &FeatureValueMap, features: &BTreeSet<String>) -> bool {
    features.iter().all(|f| {
        prepared.contains(f) || f.parse::<Feature>().is_ok_and(|p| p.kind.addable())
    })
}

/// The greedy choice on feature map `fmap`, skipping rejected candidates.
/// Ties go to the smallest feature or rule id.
pub(crate) fn choose(
    c: &Classifier,
    fmap: &FeatureValueMap,
    rejected: &BTreeSet<String>,
    cfg: &AttackConfig,
) -> Option<Choice> {
    let prepared = c.prepare(fmap);
    let mut features = BTreeSet::new();
    for r in c.hits_prepared(&prepared) {
        if r.weight > 0.0 && allowed(cfg, &r.id) {
            features.extend(r.features.iter().cloned());
        }
    }
    let mut best_f: Option<(String, f64)> = None;
    for f in features {
        let Ok(parsed) = f.parse::<Feature>() else {
            continue;
        };
        if !parsed.kind.deletable() || rejected.contains(&format!("delete {f}")) {
            continue;
        }
        let d = influence_feature(c, fmap, &f).unwrap_or(0.0);
        if d > 0.0 && best_f.as_ref().map_or(true, |(_, b)| d > *b) {
            best_f = Some((f, d));
        }
    }
    let mut best_r: Option<(String, f64)> = None;
    let mut negatives: Vec<_> = c.rules.iter().filter(|r| r.weight < 0.0 && allowed(cfg, &r.id)).collect();
    negatives.sort_by(|a, b| a.id.cmp(&b.id));
    for r in negatives {
        if r.features.iter().all(|f| prepared.contains(f))
            || rejected.contains(&format!("add {}", r.id))
            || !rule_addable(&prepared, &r.features)
        {
            continue;
        }
        let d = influence_rule(c, fmap, &r.id).unwrap_or(0.0);
        if d < 0.0 && best_r.as_ref().map_or(true, |(_, b)| d < *b) {
            best_r = Some((r.id.clone(), d));
        }
    }
    match (best_f, best_r) {
        (Some((f, df)), Some((_, dr))) if df >= dr.abs() => Some(Choice::Delete(f, df)),
        (Some((f, df)), None) => Some(Choice::Delete(f, df)),
        (_, Some((r, dr))) => Some(Choice::Add(r, dr)),
        (None, None) => None,
    }
}

/// Greedy influence-driven attack with full knowledge of the model. Each
/// candidate mutation is verified with one oracle query; candidates whose
/// plan fails or does not lower the score are skipped until the next
/// accepted step.
pub fn white_box(
    model: &Classifier,
    oracle: &mut ScoreOracle,
    page: &DomTree,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    let mut run = Run::start(Level::White, oracle, page)?;
    let guard: BTreeSet<String> = model.rules.iter().flat_map(|r| r.features.iter().cloned()).collect();
    let planner = Planner {
        freq_detect_threshold: model.freq_detect_threshold,
        external_host: cfg.external_host.clone(),
        guard,
    };
    let mut rejected = BTreeSet::new();
    while !run.evaded() && run.steps.len() <= cfg.max_steps {
        let fmap = extract_features(&run.current);
        let Some(choice) = choose(model, &fmap, &rejected, cfg) else {
            break;
        };
        let planned = match &choice {
            Choice::Delete(f, _) => planner.plan_delete_feature(&run.current, f),
            Choice::Add(r, _) => {
                let rule = model.rule(r).expect("choice comes from the model");
                let fs: Vec<&String> = rule.features.iter().collect();
                planner.plan_add_rule(&run.current, &fs)
            }
        };
        let label = choice.label();
        match planned {
            Ok(plan) if run.try_plan(&plan, 1, label.clone()) => rejected.clear(),
            _ => {
                rejected.insert(label);
            }
        }
    }
    run.finish()
}
