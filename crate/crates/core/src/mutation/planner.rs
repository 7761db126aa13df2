use std::collections::BTreeSet;

use url::Url;

use crate::dom::{DomNode, DomTree, NodePath};
use crate::features::{
    external_domain_of, extract_features, page_counts, Feature, FeatureKind, FeatureValueMap,
};

use super::{
    add_invisible_element, apply, apply_op, is_modifiable, modify_attribute, modify_text, tokens,
    ElementSpec, MutationError, MutationPlan, NodeOp,
};

/// Rounds of re-planning when additions interfere with each other (an
/// added link dilutes another link ratio).
const ADD_ROUNDS: usize = 4;

/// Turns feature-level goals into node operations.
#[derive(Debug, Clone)]
pub struct Planner {
    pub freq_detect_threshold: f64,
    /// Host used when an external reference must be added.
    pub external_host: String,
    /// Canonical features a zero-width split must not create.
    pub guard: BTreeSet<String>,
}

impl Default for Planner {
    fn default() -> Self {
        Planner {
            freq_detect_threshold: crate::classifier::DEFAULT_FREQ_DETECT_THRESHOLD,
            external_host: "static-partner.net".to_string(),
            guard: BTreeSet::new(),
        }
    }
}

/// Smallest `n` with `e / (t + n) < thr`.
pub(crate) fn dilution_count(e: usize, t: usize, thr: f64) -> usize {
    if e == 0 {
        return 0;
    }
    let (ef, tf) = (e as f64, t as f64);
    let mut n = ((ef / thr - tf).floor() + 1.0).max(0.0) as usize;
    while ef / (tf + n as f64) >= thr {
        n += 1;
    }
    while n > 0 && ef / (tf + (n - 1) as f64) < thr {
        n -= 1;
    }
    n
}

/// Smallest `n >= 1` with `(e + n) / (t + n) >= thr`.
pub(crate) fn concentration_count(e: usize, t: usize, thr: f64) -> usize {
    let (ef, tf) = (e as f64, t as f64);
    let mut n = (((thr * tf - ef) / (1.0 - thr)).ceil().max(1.0)) as usize;
    while (ef + n as f64) / (tf + n as f64) < thr {
        n += 1;
    }
    while n > 1 && (ef + (n - 1) as f64) / (tf + (n - 1) as f64) >= thr {
        n -= 1;
    }
    n
}

fn detected(fmap: &FeatureValueMap, feature: &Feature, thr: f64) -> bool {
    let v = fmap.get(&feature.canonical());
    v != 0.0 && (!feature.kind.is_frequency() || v >= thr)
}

fn page_host(tree: &DomTree) -> Result<(String, String), MutationError> {
    let url = Url::parse(&tree.source_url)
        .map_err(|_| MutationError::NotAchieved(format!("page url {:?} is not absolute", tree.source_url)))?;
    let host = url
        .host_str()
        .ok_or_else(|| MutationError::NotAchieved("page url has no host".into()))?;
    Ok((url.scheme().to_string(), host.to_string()))
}

/// Ops that split every occurrence of `term` in rendered text nodes.
fn term_ops(tree: &DomTree, term: &str, guard: &BTreeSet<String>) -> Result<Vec<NodeOp>, MutationError> {
    let mut ops = Vec::new();
    for (path, text, parent) in tree.text_nodes() {
        if parent == "script" || parent == "style" {
            continue;
        }
        let count = tokens(text).iter().filter(|(_, t)| *t == term).count();
        if count > 0 {
            let op = modify_text(tree, &path, term, guard)?;
            ops.extend(std::iter::repeat(op).take(count));
        }
    }
    if ops.is_empty() {
        return Err(MutationError::TermNotFound(term.to_string()));
    }
    Ok(ops)
}

fn attribute_ops<F>(tree: &DomTree, tag: &str, attr: &str, select: F) -> Result<Vec<NodeOp>, MutationError>
where
    F: Fn(&str) -> bool,
{
    tree.elements()
        .into_iter()
        .filter(|(_, e)| e.tag == tag && e.attr(attr).is_some_and(&select))
        .map(|(p, _)| modify_attribute(tree, &p, attr))
        .collect()
}

fn parse_feature(feature: &str) -> Result<Feature, MutationError> {
    feature
        .parse()
        .map_err(|_| MutationError::UnknownFeature(feature.to_string()))
}

impl Planner {
    pub fn with_guard(mut self, guard: BTreeSet<String>) -> Self {
        self.guard = guard;
        self
    }

    /// Plans removing a feature from the page. Frequencies are diluted below
    /// the detection threshold rather than zeroed.
    pub fn plan_delete_feature(&self, tree: &DomTree, feature: &str) -> Result<MutationPlan, MutationError> {
        let f = parse_feature(feature)?;
        let thr = self.freq_detect_threshold;
        if !detected(&extract_features(tree), &f, thr) {
            return Err(MutationError::FeatureAbsent(feature.to_string()));
        }
        if !f.kind.deletable() {
            return Err(MutationError::Undeletable(feature.to_string()));
        }
        let payload = f.payload.as_deref().unwrap_or("");
        let url = tree.source_url.as_str();
        let ops = match f.kind {
            FeatureKind::PageHasTextInputs => {
                attribute_ops(tree, "input", "type", |v| v.trim().eq_ignore_ascii_case("text"))?
            }
            FeatureKind::PageHasPswdInputs => {
                attribute_ops(tree, "input", "type", |v| v.trim().eq_ignore_ascii_case("password"))?
            }
            FeatureKind::PageActionUrl => attribute_ops(tree, "form", "action", |v| v.trim() == payload)?,
            FeatureKind::PageLinkDomain => attribute_ops(tree, "a", "href", |v| {
                external_domain_of(url, v).as_deref() == Some(payload)
            })?,
            FeatureKind::PageTerm => term_ops(tree, payload, &self.guard)?,
            kind if kind.is_frequency() => self.dilute(tree, kind)?,
            _ => return Err(MutationError::Undeletable(feature.to_string())),
        };
        let plan = MutationPlan {
            ops,
            provenance: format!("delete {feature}"),
        };
        let after = apply(tree, &plan)?;
        if detected(&extract_features(&after), &f, thr) {
            return Err(MutationError::NotAchieved(format!("{feature} still detected")));
        }
        Ok(plan)
    }

    fn dilute(&self, tree: &DomTree, kind: FeatureKind) -> Result<Vec<NodeOp>, MutationError> {
        let c = page_counts(tree);
        let (scheme, host) = page_host(tree)?;
        let (e, t, spec) = match kind {
            FeatureKind::PageExternalLinksFreq => (
                c.external_links,
                c.total_links,
                ElementSpec::new("a").attr("href", &format!("{scheme}://{host}/")),
            ),
            FeatureKind::PageSecureLinksFreq => (
                c.secure_links,
                c.total_links,
                ElementSpec::new("a").attr("href", &format!("http://{host}/")),
            ),
            FeatureKind::PageActionOtherDomainFreq => (
                c.external_actions,
                c.total_actions,
                ElementSpec::new("form").attr("action", ""),
            ),
            FeatureKind::PageImgOtherDomainFreq => (
                c.external_imgs,
                c.total_imgs,
                ElementSpec::new("img").attr("src", "/favicon.ico"),
            ),
            _ => unreachable!("only frequency kinds are diluted"),
        };
        let n = dilution_count(e, t, self.freq_detect_threshold);
        Ok(vec![add_invisible_element(tree, &spec); n])
    }

    /// Specs whose invisible addition makes `f` detectable on `tree`.
    fn additions_for(&self, tree: &DomTree, f: &Feature) -> Result<Vec<ElementSpec>, MutationError> {
        let c = page_counts(tree);
        let thr = self.freq_detect_threshold;
        let ext = &self.external_host;
        let payload = f.payload.as_deref().unwrap_or("");
        let input = |t: &str| vec![ElementSpec::new("input").attr("type", t)];
        Ok(match f.kind {
            FeatureKind::PageHasForms => vec![ElementSpec::new("form")],
            FeatureKind::PageHasTextInputs => input("text"),
            FeatureKind::PageHasPswdInputs => input("password"),
            FeatureKind::PageHasRadioInputs => input("radio"),
            FeatureKind::PageHasCheckInputs => input("checkbox"),
            FeatureKind::PageNumScriptTagsGt1 => vec![ElementSpec::new("script"); 2usize.saturating_sub(c.scripts)],
            FeatureKind::PageNumScriptTagsGt6 => vec![ElementSpec::new("script"); 7usize.saturating_sub(c.scripts)],
            FeatureKind::PageExternalLinksFreq => vec![
                ElementSpec::new("a").attr("href", &format!("http://{ext}/"));
                concentration_count(c.external_links, c.total_links, thr)
            ],
            FeatureKind::PageSecureLinksFreq => {
                let (_, host) = page_host(tree)?;
                vec![
                    ElementSpec::new("a").attr("href", &format!("https://{host}/"));
                    concentration_count(c.secure_links, c.total_links, thr)
                ]
            }
            FeatureKind::PageActionOtherDomainFreq => vec![
                ElementSpec::new("form").attr("action", &format!("http://{ext}/submit"));
                concentration_count(c.external_actions, c.total_actions, thr)
            ],
            FeatureKind::PageImgOtherDomainFreq => vec![
                ElementSpec::new("img").attr("src", &format!("http://{ext}/pixel.png"));
                concentration_count(c.external_imgs, c.total_imgs, thr)
            ],
            FeatureKind::PageActionUrl => vec![ElementSpec::new("form").attr("action", payload)],
            FeatureKind::PageLinkDomain => vec![ElementSpec::new("a").attr("href", &format!("http://{payload}/"))],
            FeatureKind::PageTerm => vec![ElementSpec::new("div").text(payload)],
            _ => return Err(MutationError::UrlFeatureUnaddable(f.canonical())),
        })
    }

    /// Plans making every feature of a rule detectable.
    pub fn plan_add_rule<S: AsRef<str>>(&self, tree: &DomTree, features: &[S]) -> Result<MutationPlan, MutationError> {
        let thr = self.freq_detect_threshold;
        let mut wanted = Vec::new();
        for s in features {
            wanted.push(parse_feature(s.as_ref())?);
        }
        let present = extract_features(tree);
        if let Some(f) = wanted.iter().find(|f| f.kind.is_url() && !detected(&present, f, thr)) {
            return Err(MutationError::UrlFeatureUnaddable(f.canonical()));
        }
        let mut plan = MutationPlan::new(format!(
            "add {{{}}}",
            wanted.iter().map(Feature::canonical).collect::<Vec<_>>().join(", ")
        ));
        let mut scratch = tree.clone();
        for _ in 0..ADD_ROUNDS {
            let fmap = extract_features(&scratch);
            let missing: Vec<&Feature> = wanted.iter().filter(|f| !detected(&fmap, f, thr)).collect();
            if missing.is_empty() {
                return Ok(plan);
            }
            for f in missing {
                for spec in self.additions_for(&scratch, f)? {
                    let op = add_invisible_element(&scratch, &spec);
                    apply_op(&mut scratch, &op)?;
                    plan.ops.push(op);
                }
            }
        }
        let fmap = extract_features(&scratch);
        match wanted.iter().find(|f| !detected(&fmap, f, thr)) {
            Some(f) => Err(MutationError::NotAchieved(format!("{} not detected after additions", f.canonical()))),
            None => Ok(plan),
        }
    }
}

/// A place a blind attacker can modify.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Site {
    /// A modifiable attribute of one element.
    Attribute { path: NodePath, attr: String },
    /// Every rendered occurrence of a text token.
    Term(String),
}

/// All modification sites in document order: each element's modifiable
/// attributes, then the new tokens of its direct text.
pub fn modification_sites(tree: &DomTree) -> Vec<Site> {
    let mut out = Vec::new();
    let mut seen_terms = BTreeSet::new();
    for (path, e) in tree.elements() {
        for a in e.attrs() {
            if is_modifiable(&e.tag, &a.name, &a.value) {
                out.push(Site::Attribute {
                    path: path.clone(),
                    attr: a.name.clone(),
                });
            }
        }
        if e.tag == "script" || e.tag == "style" {
            continue;
        }
        for c in &e.children {
            if let DomNode::Text(t) = c {
                for (_, tok) in tokens(t) {
                    if seen_terms.insert(tok.to_string()) {
                        out.push(Site::Term(tok.to_string()));
                    }
                }
            }
        }
    }
    out
}

/// Plans modifying one site on the current tree.
pub fn plan_site(tree: &DomTree, site: &Site, guard: &BTreeSet<String>) -> Result<MutationPlan, MutationError> {
    match site {
        Site::Attribute { path, attr } => Ok(MutationPlan {
            ops: vec![modify_attribute(tree, path, attr)?],
            provenance: "blind".into(),
        }),
        Site::Term(t) => Ok(MutationPlan {
            ops: term_ops(tree, t, guard)?,
            provenance: "blind".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::parse_html;
    use crate::features::extract_page_features;
    use crate::mutation::preservation_check;

    const URL: &str = "https://shop.example.com/login";

    #[test]
    fn dilution_arithmetic() {
        // 2 of 4 external at 0.05: 2/40 sits on the boundary, 2/41 is below
        assert_eq!(dilution_count(2, 4, 0.05), 37);
        assert_eq!(dilution_count(0, 4, 0.05), 0);
        assert_eq!(dilution_count(1, 100, 0.05), 0);
        assert_eq!(dilution_count(10, 10, 0.05), 191);
        for e in 1..20 {
            for t in e..40 {
                let n = dilution_count(e, t, 0.05);
                assert!((e as f64) / ((t + n) as f64) < 0.05);
                assert!(n == 0 || (e as f64) / ((t + n - 1) as f64) >= 0.05);
            }
        }
    }

    #[test]
    fn concentration_arithmetic() {
        assert_eq!(concentration_count(0, 0, 0.05), 1);
        assert_eq!(concentration_count(0, 19, 0.05), 1);
        assert_eq!(concentration_count(0, 20, 0.05), 2);
        for e in 0..10 {
            for t in e..60 {
                let n = concentration_count(e, t, 0.05);
                assert!(((e + n) as f64) / ((t + n) as f64) >= 0.05);
            }
        }
    }

    #[test]
    fn forms_cannot_be_deleted() {
        let t = parse_html("<form></form>", URL);
        let p = Planner::default();
        assert!(matches!(p.plan_delete_feature(&t, "PageHasForms"), Err(MutationError::Undeletable(_))));
        assert!(matches!(p.plan_delete_feature(&t, "PageHasPswdInputs"), Err(MutationError::FeatureAbsent(_))));
    }

    #[test]
    fn password_input_deletion() {
        let t = parse_html(
            "<style type=\"text/css\">input[type=password]{width:8px;}</style><form><input type=\"password\"></form>",
            URL,
        );
        let plan = Planner::default().plan_delete_feature(&t, "PageHasPswdInputs").unwrap();
        let m = apply(&t, &plan).unwrap();
        assert!(m.to_html().contains("onfocus=\"this.type='password';\""));
        assert!(preservation_check(&t, &m).passed());
    }

    #[test]
    fn external_link_dilution() {
        let t = parse_html(
            "<html><body><a href=\"http://a.org/\">1</a><a href=\"http://b.org/\">2</a>\
             <a href=\"/x\">3</a><a href=\"/y\">4</a></body></html>",
            URL,
        );
        assert_eq!(extract_page_features(&t).get("PageExternalLinksFreq"), 0.5);
        let plan = Planner::default().plan_delete_feature(&t, "PageExternalLinksFreq").unwrap();
        assert_eq!(plan.additions(), 37);
        let m = apply(&t, &plan).unwrap();
        assert!((extract_page_features(&m).get("PageExternalLinksFreq") - 2.0 / 41.0).abs() < 1e-15);
        assert!(preservation_check(&t, &m).passed());
    }

    #[test]
    fn term_deletion_covers_every_occurrence() {
        let t = parse_html("<p>verify your account</p><div>verify verify</div>", URL);
        let plan = Planner::default().plan_delete_feature(&t, "PageTerm=verify").unwrap();
        assert_eq!(plan.len(), 3);
        let m = apply(&t, &plan).unwrap();
        assert!(!extract_page_features(&m).contains("PageTerm=verify"));
        assert!(preservation_check(&t, &m).passed());
    }

    #[test]
    fn link_domain_and_action_deletion() {
        let t = parse_html(
            "<a href=\"http://evil.ru/a\">a</a><a href=\"https://www.evil.ru/b\">b</a><form action=\"http://evil.ru/p\"></form>",
            URL,
        );
        let p = Planner::default();
        let m = apply(&t, &p.plan_delete_feature(&t, "PageLinkDomain=evil.ru").unwrap()).unwrap();
        assert!(!extract_page_features(&m).contains("PageLinkDomain=evil.ru"));
        let m2 = apply(&t, &p.plan_delete_feature(&t, "PageActionURL=http://evil.ru/p").unwrap()).unwrap();
        let f = extract_page_features(&m2);
        assert!(!f.contains("PageActionURL=http://evil.ru/p"));
        assert!(f.contains("PageHasForms"));
    }

    #[test]
    fn add_rule_examples() {
        let t = parse_html("<html><body><p>hi</p></body></html>", URL);
        let p = Planner::default();
        let plan = p.plan_add_rule(&t, &["PageTerm=secure"]).unwrap();
        assert_eq!(plan.len(), 1);
        assert!(extract_page_features(&apply(&t, &plan).unwrap()).contains("PageTerm=secure"));
        assert!(matches!(p.plan_add_rule(&t, &["UrlTld=org"]), Err(MutationError::UrlFeatureUnaddable(_))));
        let plan = p.plan_add_rule(&t, &["PageHasRadioInputs", "PageTerm=bank", "UrlTld=com"]).unwrap();
        let f = extract_page_features(&apply(&t, &plan).unwrap());
        assert!(f.contains("PageHasRadioInputs") && f.contains("PageTerm=bank"));
    }

    #[test]
    fn add_competing_link_frequencies() {
        let mut body = String::new();
        for _ in 0..30 {
            body.push_str("<a href=\"/x\">x</a>");
        }
        let t = parse_html(&format!("<html><body>{body}</body></html>"), "http://shop.example.com/");
        let p = Planner::default();
        let plan = p
            .plan_add_rule(&t, &["PageExternalLinksFreq", "PageSecureLinksFreq", "PageImgOtherDomainFreq", "PageNumScriptTags>6"])
            .unwrap();
        let m = apply(&t, &plan).unwrap();
        let f = extract_page_features(&m);
        assert!(f.get("PageExternalLinksFreq") >= 0.05);
        assert!(f.get("PageSecureLinksFreq") >= 0.05);
        assert_eq!(f.get("PageImgOtherDomainFreq"), 1.0);
        assert!(f.contains("PageNumScriptTags>6"));
        assert!(preservation_check(&t, &m).passed());
    }

    #[test]
    fn sites_in_document_order() {
        let t = parse_html(
            "<form action=\"/a\" class=\"c\"><input type=\"radio\" name=\"r\"><p>Hello hello Hello</p></form><a href=\"/b\">Hello</a>",
            URL,
        );
        let sites = modification_sites(&t);
        let form = t.elements().into_iter().find(|(_, e)| e.tag == "form").unwrap().0;
        assert_eq!(sites[0], Site::Attribute { path: form.clone(), attr: "action".into() });
        assert!(matches!(&sites[1], Site::Attribute { attr, .. } if attr == "name"));
        assert_eq!(sites[2], Site::Term("Hello".into()));
        assert_eq!(sites[3], Site::Term("hello".into()));
        assert!(matches!(&sites[4], Site::Attribute { attr, .. } if attr == "href"));
        assert_eq!(sites.len(), 5);
        let plan = plan_site(&t, &sites[2], &BTreeSet::new()).unwrap();
        assert_eq!(plan.len(), 3);
    }
}
