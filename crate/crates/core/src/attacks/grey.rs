use std::collections::{BTreeMap, BTreeSet};

use crate::classifier::{RuleSet, ScoreOracle};
use crate::dom::DomTree;
use crate::features::{extract_features, Feature, FeatureValueMap};
use crate::mutation::Planner;

use super::{AttackConfig, AttackError, AttackResult, Level, Run};

fn detected(fmap: &FeatureValueMap, f: &str, thr: f64) -> bool {
    let v = fmap.get(f);
    v != 0.0 && (!f.parse::<Feature>().is_ok_and(|p| p.kind.is_frequency()) || v >= thr)
}

/// Deletable features of the known rules the page hits, most shared first.
pub(crate) fn deletion_order(rules: &RuleSet, fmap: &FeatureValueMap, thr: f64) -> Vec<String> {
    let mut reliance: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rules.rules {
        for f in &r.features {
            *reliance.entry(f).or_default() += 1;
        }
    }
    let mut candidates: BTreeSet<&str> = BTreeSet::new();
    for r in &rules.rules {
        if r.features.iter().all(|f| detected(fmap, f, thr)) {
            candidates.extend(
                r.features
                    .iter()
                    .filter(|f| f.parse::<Feature>().is_ok_and(|p| p.kind.deletable()))
                    .map(String::as_str),
            );
        }
    }
    let mut out: Vec<&str> = candidates.into_iter().collect();
    out.sort_by(|a, b| reliance[b].cmp(&reliance[a]).then(a.cmp(b)));
    out.into_iter().map(str::to_string).collect()
}

/// Attack knowing the model's rules but not their weights. Each round first
/// tries to delete every deletable feature of a hit rule, then to add every
/// rule the page lacks; a mutation is kept iff the oracle score drops.
pub fn grey_box(
    rules: &RuleSet,
    oracle: &mut ScoreOracle,
    page: &DomTree,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    let thr = oracle.classifier().freq_detect_threshold;
    let mut run = Run::start(Level::Grey, oracle, page)?;
    let guard: BTreeSet<String> = rules.rules.iter().flat_map(|r| r.features.iter().cloned()).collect();
    let planner = Planner {
        freq_detect_threshold: thr,
        external_host: cfg.external_host.clone(),
        guard,
    };
    let mut ordered = rules.rules.clone();
    ordered.sort();
    for _ in 0..cfg.max_rounds {
        let mut changed = false;
        let fmap = extract_features(&run.current);
        for f in deletion_order(rules, &fmap, thr) {
            if run.evaded() {
                return run.finish();
            }
            if !detected(&extract_features(&run.current), &f, thr) {
                continue;
            }
            if let Ok(plan) = planner.plan_delete_feature(&run.current, &f) {
                changed |= run.try_plan(&plan, 1, format!("delete {f}"));
            }
        }
        for r in &ordered {
            if run.evaded() {
                return run.finish();
            }
            let fmap = extract_features(&run.current);
            if r.features.iter().all(|f| detected(&fmap, f, thr)) {
                continue;
            }
            let fs: Vec<&String> = r.features.iter().collect();
            if let Ok(plan) = planner.plan_add_rule(&run.current, &fs) {
                changed |= run.try_plan(&plan, 1, format!("add {}", r.id));
            }
        }
        if run.evaded() || !changed {
            break;
        }
    }
    run.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ClassificationRule, Classifier};
    use crate::dom::parse_html;
    use crate::mutation::preservation_check;

    const URL: &str = "https://secure-login.example.com/signin";

    #[test]
    fn deletion_order_prefers_shared_features() {
        let c = Classifier::new(
            0.0,
            vec![
                ClassificationRule::new("a", &["PageTerm=z", "PageHasPswdInputs"], 1.0),
                ClassificationRule::new("b", &["PageHasPswdInputs"], 1.0),
                ClassificationRule::new("c", &["PageTerm=a"], 1.0),
                ClassificationRule::new("d", &["PageHasForms"], 1.0),
            ],
        )
        .unwrap();
        let fmap: FeatureValueMap = ["PageTerm=z", "PageTerm=a", "PageHasPswdInputs", "PageHasForms"]
            .into_iter()
            .map(|f| (f.to_string(), 1.0))
            .collect();
        assert_eq!(
            deletion_order(&RuleSet::from_classifier(&c), &fmap, 0.05),
            vec!["PageHasPswdInputs", "PageTerm=a", "PageTerm=z"]
        );
    }

    #[test]
    fn succeeds_by_deletion_only() {
        let c = Classifier::new(
            -2.0,
            vec![
                ClassificationRule::new("a", &["PageHasPswdInputs"], 2.0),
                ClassificationRule::new("b", &["PageTerm=verify"], 1.5),
                ClassificationRule::new("n", &["PageHasRadioInputs"], -3.0),
            ],
        )
        .unwrap();
        let page = parse_html("<html><body><p>verify</p><form><input type=\"password\"></form></body></html>", URL);
        let mut oracle = ScoreOracle::new(c.clone());
        let r = grey_box(&RuleSet::from_classifier(&c), &mut oracle, &page, &AttackConfig::default()).unwrap();
        assert!(r.steps.iter().skip(1).all(|s| s.op.starts_with("delete")));
        assert!(r.success);
        assert!(preservation_check(&page, &r.final_page).passed());
    }

    #[test]
    fn succeeds_by_addition_when_nothing_is_deletable() {
        let c = Classifier::new(
            -1.0,
            vec![
                ClassificationRule::new("a", &["PageHasForms"], 3.0),
                ClassificationRule::new("b", &["PageHasRadioInputs"], 1.0),
                ClassificationRule::new("n", &["PageTerm=contact"], -4.0),
            ],
        )
        .unwrap();
        let page = parse_html("<html><body><form></form></body></html>", URL);
        let mut oracle = ScoreOracle::new(c.clone());
        let r = grey_box(&RuleSet::from_classifier(&c), &mut oracle, &page, &AttackConfig::default()).unwrap();
        assert_eq!(r.steps.iter().map(|s| s.op.as_str()).collect::<Vec<_>>(), vec!["seed", "add n"]);
        // the attacker tried adding b before n and was told the score rose
        assert_eq!(r.queries, 3);
        assert!(r.mutated_rules >= r.mutated_features);
    }
}
