use crate::classifier::Classifier;
use crate::features::{digest_hex, FeatureValueMap};

use super::AttackError;

/// Key under which the classifier's rules refer to a canonical feature.
pub(crate) fn rule_key(c: &Classifier, feature: &str) -> String {
    if c.hashed {
        digest_hex(feature)
    } else {
        feature.to_string()
    }
}

/// Change in the raw score caused by zeroing `feature`: the summed
/// contributions of the hit rules relying on it.
pub fn influence_feature(c: &Classifier, fmap: &FeatureValueMap, feature: &str) -> Result<f64, AttackError> {
    if fmap.get(feature) == 0.0 {
        return Err(AttackError::FeatureAbsent(feature.to_string()));
    }
    let prepared = c.prepare(fmap);
    let key = rule_key(c, feature);
    Ok(c.hits_prepared(&prepared)
        .filter(|r| r.features.contains(&key))
        .map(|r| r.contribution(&prepared))
        .sum())
}

/// Change in the raw score caused by adding every feature of rule `id`.
/// Added features take value 1; features already detected keep theirs. All
/// newly hit rules count, including those that combine added features with
/// features the page already has.
pub fn influence_rule(c: &Classifier, fmap: &FeatureValueMap, id: &str) -> Result<f64, AttackError> {
    let rule = c.rule(id).ok_or_else(|| AttackError::UnknownRule(id.to_string()))?;
    let prepared = c.prepare(fmap);
    if rule.features.iter().all(|f| prepared.contains(f)) {
        return Err(AttackError::RuleAlreadyHit(id.to_string()));
    }
    let mut after = prepared.clone();
    for f in &rule.features {
        if !after.contains(f) {
            after.set(f.clone(), 1.0);
        }
    }
    Ok(c.rules
        .iter()
        .filter(|r| !r.features.iter().all(|f| prepared.contains(f)))
        .filter(|r| r.features.iter().all(|f| after.contains(f)))
        .map(|r| r.contribution(&after))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassificationRule;
    use proptest::prelude::*;

    fn map(pairs: &[(&str, f64)]) -> FeatureValueMap {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn single_rule_feature_influence() {
        let c = Classifier::new(0.0, vec![ClassificationRule::new("r", &["PageHasForms"], 1.7)]).unwrap();
        let m = map(&[("PageHasForms", 1.0), ("PageTerm=x", 1.0)]);
        assert_eq!(influence_feature(&c, &m, "PageHasForms").unwrap(), 1.7);
        assert_eq!(influence_feature(&c, &m, "PageTerm=x").unwrap(), 0.0);
        assert!(matches!(influence_feature(&c, &m, "PageTerm=y"), Err(AttackError::FeatureAbsent(_))));
    }

    #[test]
    fn rule_influence_includes_subsets() {
        let c = Classifier::new(
            0.0,
            vec![
                ClassificationRule::new("iso", &["PageTerm=help"], -2.0),
                ClassificationRule::new("sup", &["PageTerm=a", "PageTerm=b"], -1.5),
                ClassificationRule::new("sub", &["PageTerm=a"], -1.0),
            ],
        )
        .unwrap();
        let m = map(&[("PageHasForms", 1.0)]);
        assert_eq!(influence_rule(&c, &m, "iso").unwrap(), -2.0);
        assert_eq!(influence_rule(&c, &m, "sup").unwrap(), -2.5);
        let hit = map(&[("PageTerm=help", 1.0)]);
        assert!(matches!(influence_rule(&c, &hit, "iso"), Err(AttackError::RuleAlreadyHit(_))));
    }

    #[test]
    fn hashed_model_agrees_with_plaintext() {
        let c = Classifier::new(
            0.3,
            vec![
                ClassificationRule::new("a", &["PageSecureLinksFreq", "PageHasForms"], 2.0),
                ClassificationRule::new("b", &["PageTerm=ok", "PageHasForms"], -3.0),
            ],
        )
        .unwrap();
        let h = c.hashed_twin();
        let m = map(&[("PageSecureLinksFreq", 0.4), ("PageHasForms", 1.0)]);
        assert_eq!(influence_feature(&c, &m, "PageHasForms").unwrap(), 0.8);
        assert_eq!(influence_feature(&h, &m, "PageHasForms").unwrap(), 0.8);
        assert_eq!(influence_rule(&c, &m, "b").unwrap(), -3.0);
        assert_eq!(influence_rule(&h, &m, "b").unwrap(), -3.0);
    }

    fn feature_pool() -> Vec<&'static str> {
        vec![
            "PageHasForms",
            "PageHasPswdInputs",
            "PageExternalLinksFreq",
            "PageSecureLinksFreq",
            "PageTerm=a",
            "PageTerm=b",
            "PageTerm=c",
            "UrlTld=com",
        ]
    }

    prop_compose! {
        fn arb_case()(
            rules in prop::collection::vec((prop::collection::btree_set(0usize..8, 1..4), -3.0f64..3.0), 1..10),
            values in prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..1.0], 8),
        ) -> (Classifier, FeatureValueMap) {
            let pool = feature_pool();
            let rules = rules
                .into_iter()
                .enumerate()
                .map(|(i, (fs, w))| {
                    let names: Vec<&str> = fs.into_iter().map(|j| pool[j]).collect();
                    ClassificationRule::new(&format!("r{i:02}"), &names, w)
                })
                .collect();
            let fmap = pool
                .iter()
                .zip(values)
                .map(|(f, v)| {
                    let v = if f.starts_with("Page") && f.ends_with("Freq") { v } else { v.ceil() };
                    (f.to_string(), v)
                })
                .collect();
            (Classifier::new(-0.2, rules).unwrap(), fmap)
        }
    }

    proptest! {
        #[test]
        fn influences_match_rescoring(case in arb_case()) {
            let (c, fmap) = case;
            let base = c.raw_score(&fmap);
            for f in fmap.keys() {
                let mut zeroed = fmap.clone();
                zeroed.remove(f);
                let d = influence_feature(&c, &fmap, f).unwrap();
                prop_assert!((d - (base - c.raw_score(&zeroed))).abs() < 1e-12);
            }
            let hit = c.hit_rules(&fmap);
            for r in &c.rules {
                if hit.contains(&r.id) {
                    continue;
                }
                let mut added = fmap.clone();
                let prepared = c.prepare(&fmap);
                for f in &r.features {
                    if !prepared.contains(f) {
                        added.set(f.clone(), 1.0);
                    }
                }
                let d = influence_rule(&c, &fmap, &r.id).unwrap();
                prop_assert!((d - (c.raw_score(&added) - base)).abs() < 1e-12);
            }
        }
    }
}
