//! Page and URL features, their canonical strings and SHA-256 digests.
//!
//! A feature is either a flag (`PageHasForms`), a frequency in `[0, 1]`
//! (`PageSecureLinksFreq`) or a wildcard carrying a payload
//! (`PageTerm=login`, `UrlTld=com`). Feature maps are keyed by canonical
//! strings; absent features are zero.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use url::Url;

use crate::dom::DomTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    PageHasForms,
    PageHasTextInputs,
    PageHasPswdInputs,
    PageHasRadioInputs,
    PageHasCheckInputs,
    PageExternalLinksFreq,
    PageActionOtherDomainFreq,
    PageSecureLinksFreq,
    PageImgOtherDomainFreq,
    PageNumScriptTagsGt1,
    PageNumScriptTagsGt6,
    PageActionUrl,
    PageLinkDomain,
    PageTerm,
    UrlTld,
    UrlDomain,
    UrlOtherHostToken,
    UrlPathToken,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 18] = [
        FeatureKind::PageHasForms,
        FeatureKind::PageHasTextInputs,
        FeatureKind::PageHasPswdInputs,
        FeatureKind::PageHasRadioInputs,
        FeatureKind::PageHasCheckInputs,
        FeatureKind::PageExternalLinksFreq,
        FeatureKind::PageActionOtherDomainFreq,
        FeatureKind::PageSecureLinksFreq,
        FeatureKind::PageImgOtherDomainFreq,
        FeatureKind::PageNumScriptTagsGt1,
        FeatureKind::PageNumScriptTagsGt6,
        FeatureKind::PageActionUrl,
        FeatureKind::PageLinkDomain,
        FeatureKind::PageTerm,
        FeatureKind::UrlTld,
        FeatureKind::UrlDomain,
        FeatureKind::UrlOtherHostToken,
        FeatureKind::UrlPathToken,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::PageHasForms => "PageHasForms",
            FeatureKind::PageHasTextInputs => "PageHasTextInputs",
            FeatureKind::PageHasPswdInputs => "PageHasPswdInputs",
            FeatureKind::PageHasRadioInputs => "PageHasRadioInputs",
            FeatureKind::PageHasCheckInputs => "PageHasCheckInputs",
            FeatureKind::PageExternalLinksFreq => "PageExternalLinksFreq",
            FeatureKind::PageActionOtherDomainFreq => "PageActionOtherDomainFreq",
            FeatureKind::PageSecureLinksFreq => "PageSecureLinksFreq",
            FeatureKind::PageImgOtherDomainFreq => "PageImgOtherDomainFreq",
            FeatureKind::PageNumScriptTagsGt1 => "PageNumScriptTags>1",
            FeatureKind::PageNumScriptTagsGt6 => "PageNumScriptTags>6",
            FeatureKind::PageActionUrl => "PageActionURL",
            FeatureKind::PageLinkDomain => "PageLinkDomain",
            FeatureKind::PageTerm => "PageTerm",
            FeatureKind::UrlTld => "UrlTld",
            FeatureKind::UrlDomain => "UrlDomain",
            FeatureKind::UrlOtherHostToken => "UrlOtherHostToken",
            FeatureKind::UrlPathToken => "UrlPathToken",
        }
    }

    pub fn is_wildcard(self) -> bool {
        matches!(
            self,
            FeatureKind::PageActionUrl
                | FeatureKind::PageLinkDomain
                | FeatureKind::PageTerm
                | FeatureKind::UrlTld
                | FeatureKind::UrlDomain
                | FeatureKind::UrlOtherHostToken
                | FeatureKind::UrlPathToken
        )
    }

    pub fn is_frequency(self) -> bool {
        matches!(
            self,
            FeatureKind::PageExternalLinksFreq
                | FeatureKind::PageActionOtherDomainFreq
                | FeatureKind::PageSecureLinksFreq
                | FeatureKind::PageImgOtherDomainFreq
        )
    }

    pub fn is_url(self) -> bool {
        matches!(
            self,
            FeatureKind::UrlTld
                | FeatureKind::UrlDomain
                | FeatureKind::UrlOtherHostToken
                | FeatureKind::UrlPathToken
        )
    }

    /// Whether a page can be rewritten so the feature disappears without
    /// changing how the page looks or behaves.
    pub fn deletable(self) -> bool {
        !self.is_url()
            && !matches!(
                self,
                FeatureKind::PageHasForms
                    | FeatureKind::PageHasRadioInputs
                    | FeatureKind::PageHasCheckInputs
                    | FeatureKind::PageNumScriptTagsGt1
                    | FeatureKind::PageNumScriptTagsGt6
            )
    }

    /// Every page feature can be added with invisible elements; URL
    /// features cannot since the URL is never changed.
    pub fn addable(self) -> bool {
        !self.is_url()
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("unknown feature kind in {0:?}")]
    UnknownKind(String),
    #[error("feature {0} requires a non-empty payload")]
    MissingPayload(FeatureKind),
    #[error("feature {0} takes no payload")]
    UnexpectedPayload(FeatureKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot tokenize url {url:?}: {reason}")]
pub struct UrlError {
    pub url: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Feature {
    pub kind: FeatureKind,
    pub payload: Option<String>,
}

impl Feature {
    pub fn flag(kind: FeatureKind) -> Result<Self, FeatureError> {
        if kind.is_wildcard() {
            return Err(FeatureError::MissingPayload(kind));
        }
        Ok(Feature { kind, payload: None })
    }

    pub fn with_payload(kind: FeatureKind, payload: &str) -> Result<Self, FeatureError> {
        if !kind.is_wildcard() {
            return Err(FeatureError::UnexpectedPayload(kind));
        }
        let payload = payload.trim();
        if payload.is_empty() {
            return Err(FeatureError::MissingPayload(kind));
        }
        Ok(Feature {
            kind,
            payload: Some(payload.to_string()),
        })
    }

    pub fn term(t: &str) -> Self {
        Feature::with_payload(FeatureKind::PageTerm, t).expect("term must be non-empty")
    }

    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.payload {
            Some(p) => write!(f, "{}={}", self.kind.name(), p),
            None => f.write_str(self.kind.name()),
        }
    }
}

impl FromStr for Feature {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // `PageNumScriptTags>1` contains no `=`, so the first `=` always
        // separates a wildcard kind from its payload.
        if let Some(kind) = FeatureKind::ALL.iter().find(|k| k.name() == s) {
            return Feature::flag(*kind);
        }
        let (name, payload) = s
            .split_once('=')
            .ok_or_else(|| FeatureError::UnknownKind(s.to_string()))?;
        let kind = FeatureKind::ALL
            .iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| FeatureError::UnknownKind(s.to_string()))?;
        Feature::with_payload(*kind, payload)
    }
}

/// Canonical feature string to value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureValueMap(BTreeMap<String, f64>);

impl FeatureValueMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Value of a feature; absent features are zero.
    pub fn get(&self, feature: &str) -> f64 {
        self.0.get(feature).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, feature: &str) -> bool {
        self.get(feature) != 0.0
    }

    /// Inserts a value; zero removes the entry.
    pub fn set(&mut self, feature: impl Into<String>, value: f64) {
        let feature = feature.into();
        if value == 0.0 {
            self.0.remove(&feature);
        } else {
            self.0.insert(feature, value);
        }
    }

    pub fn remove(&mut self, feature: &str) -> Option<f64> {
        self.0.remove(feature)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn extend(&mut self, other: FeatureValueMap) {
        for (k, v) in other.0 {
            self.set(k, v);
        }
    }
}

impl FromIterator<(String, f64)> for FeatureValueMap {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        let mut m = FeatureValueMap::new();
        for (k, v) in iter {
            m.set(k, v);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureDigest {
    pub canonical: String,
    pub digest: String,
}

/// SHA-256 of the canonical string's UTF-8 bytes as 64 lowercase hex digits.
pub fn digest_hex(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn hash_feature(canonical: &str) -> FeatureDigest {
    debug_assert!(!canonical.is_empty(), "canonical feature string must be non-empty");
    FeatureDigest {
        canonical: canonical.to_string(),
        digest: digest_hex(canonical),
    }
}

pub fn is_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Registrable domain of a host (`login.example.co.uk` -> `example.co.uk`).
/// Hosts without a registrable part (IP literals, `localhost`) map to
/// themselves.
pub fn registrable_domain(host: &str) -> String {
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    match psl::domain_str(&host) {
        Some(d) => d.to_string(),
        None => host,
    }
}

/// Link, action and image tallies behind the frequency features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PageCounts {
    pub total_links: usize,
    pub external_links: usize,
    pub secure_links: usize,
    pub total_actions: usize,
    pub external_actions: usize,
    pub total_imgs: usize,
    pub external_imgs: usize,
    pub scripts: usize,
}

/// Resolved host of a reference when it points to another registrable
/// domain than `base`.
fn external_domain(base: Option<&Url>, base_domain: Option<&str>, reference: &str) -> Option<String> {
    let resolved = match base {
        Some(b) => b.join(reference.trim()).ok()?,
        None => Url::parse(reference.trim()).ok()?,
    };
    let host = resolved.host_str()?;
    let domain = registrable_domain(host);
    (Some(domain.as_str()) != base_domain).then_some(domain)
}

fn is_secure(base: Option<&Url>, reference: &str) -> bool {
    let resolved = match base {
        Some(b) => b.join(reference.trim()),
        None => Url::parse(reference.trim()),
    };
    resolved.is_ok_and(|u| u.scheme() == "https")
}

struct PageScan {
    counts: PageCounts,
    forms: bool,
    input_types: BTreeSet<String>,
    actions: BTreeSet<String>,
    link_domains: BTreeSet<String>,
    terms: BTreeSet<String>,
}

fn scan(tree: &DomTree) -> PageScan {
    let base = Url::parse(&tree.source_url).ok();
    let base_domain = base
        .as_ref()
        .and_then(|u| u.host_str())
        .map(registrable_domain);
    let base_domain = base_domain.as_deref();
    let mut s = PageScan {
        counts: PageCounts::default(),
        forms: false,
        input_types: BTreeSet::new(),
        actions: BTreeSet::new(),
        link_domains: BTreeSet::new(),
        terms: BTreeSet::new(),
    };
    for (_, e) in tree.elements() {
        match e.tag.as_str() {
            "form" => {
                s.forms = true;
                if let Some(action) = e.attr("action") {
                    s.counts.total_actions += 1;
                    if external_domain(base.as_ref(), base_domain, action).is_some() {
                        s.counts.external_actions += 1;
                    }
                    let action = action.trim();
                    if !action.is_empty() {
                        s.actions.insert(action.to_string());
                    }
                }
            }
            "input" => {
                if let Some(t) = e.attr("type") {
                    s.input_types.insert(t.trim().to_ascii_lowercase());
                }
            }
            "a" => {
                if let Some(href) = e.attr("href") {
                    s.counts.total_links += 1;
                    if is_secure(base.as_ref(), href) {
                        s.counts.secure_links += 1;
                    }
                    if let Some(d) = external_domain(base.as_ref(), base_domain, href) {
                        s.counts.external_links += 1;
                        s.link_domains.insert(d);
                    }
                }
            }
            "img" => {
                s.counts.total_imgs += 1;
                if let Some(src) = e.attr("src") {
                    if external_domain(base.as_ref(), base_domain, src).is_some() {
                        s.counts.external_imgs += 1;
                    }
                }
            }
            "script" => s.counts.scripts += 1,
            _ => {}
        }
    }
    for (_, text, parent) in tree.text_nodes() {
        if parent == "script" || parent == "style" {
            continue;
        }
        for token in text.split_whitespace() {
            s.terms.insert(token.to_string());
        }
    }
    s
}

/// Registrable domain `reference` points to, resolved against `page_url`,
/// when it differs from the page's own.
pub fn external_domain_of(page_url: &str, reference: &str) -> Option<String> {
    let base = Url::parse(page_url).ok();
    let base_domain = base.as_ref().and_then(|u| u.host_str()).map(registrable_domain);
    external_domain(base.as_ref(), base_domain.as_deref(), reference)
}

pub fn page_counts(tree: &DomTree) -> PageCounts {
    scan(tree).counts
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0 && num > 0).then(|| num as f64 / den as f64)
}

/// Page-level features. Frequencies are raw ratios; thresholding belongs to
/// the classifier.
pub fn extract_page_features(tree: &DomTree) -> FeatureValueMap {
    let s = scan(tree);
    let c = s.counts;
    let mut m = FeatureValueMap::new();
    let flag = |m: &mut FeatureValueMap, kind: FeatureKind, on: bool| {
        if on {
            m.set(kind.name(), 1.0);
        }
    };
    flag(&mut m, FeatureKind::PageHasForms, s.forms);
    flag(&mut m, FeatureKind::PageHasTextInputs, s.input_types.contains("text"));
    flag(&mut m, FeatureKind::PageHasPswdInputs, s.input_types.contains("password"));
    flag(&mut m, FeatureKind::PageHasRadioInputs, s.input_types.contains("radio"));
    flag(&mut m, FeatureKind::PageHasCheckInputs, s.input_types.contains("checkbox"));
    flag(&mut m, FeatureKind::PageNumScriptTagsGt1, c.scripts > 1);
    flag(&mut m, FeatureKind::PageNumScriptTagsGt6, c.scripts > 6);
    let freqs = [
        (FeatureKind::PageExternalLinksFreq, c.external_links, c.total_links),
        (FeatureKind::PageActionOtherDomainFreq, c.external_actions, c.total_actions),
        (FeatureKind::PageSecureLinksFreq, c.secure_links, c.total_links),
        (FeatureKind::PageImgOtherDomainFreq, c.external_imgs, c.total_imgs),
    ];
    for (kind, num, den) in freqs {
        if let Some(v) = ratio(num, den) {
            m.set(kind.name(), v);
        }
    }
    let wild = [
        (FeatureKind::PageActionUrl, &s.actions),
        (FeatureKind::PageLinkDomain, &s.link_domains),
        (FeatureKind::PageTerm, &s.terms),
    ];
    for (kind, payloads) in wild {
        for p in payloads {
            m.set(format!("{}={}", kind.name(), p), 1.0);
        }
    }
    m
}

/// URL token features: suffix, registrable domain, remaining host labels
/// and path segments.
pub fn extract_url_features(url: &str) -> Result<BTreeSet<Feature>, UrlError> {
    let err = |reason: &str| UrlError {
        url: url.to_string(),
        reason: reason.to_string(),
    };
    let parsed = Url::parse(url.trim()).map_err(|e| err(&e.to_string()))?;
    let host = parsed.host_str().ok_or_else(|| err("no host"))?;
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    let mut out = BTreeSet::new();
    let push = |out: &mut BTreeSet<Feature>, kind: FeatureKind, p: &str| {
        if let Ok(f) = Feature::with_payload(kind, p) {
            out.insert(f);
        }
    };
    let domain = registrable_domain(&host);
    let is_ip = parsed.host().is_some_and(|h| !matches!(h, url::Host::Domain(_)));
    if !is_ip {
        if let Some(suffix) = psl::suffix_str(&host) {
            push(&mut out, FeatureKind::UrlTld, suffix);
        }
    }
    push(&mut out, FeatureKind::UrlDomain, &domain);
    if let Some(rest) = host.strip_suffix(domain.as_str()) {
        for label in rest.split('.') {
            push(&mut out, FeatureKind::UrlOtherHostToken, label);
        }
    }
    for seg in parsed.path().split('/') {
        push(&mut out, FeatureKind::UrlPathToken, seg);
    }
    Ok(out)
}

/// Page features plus URL features of `tree.source_url`. An unparseable
/// source URL contributes no URL features.
pub fn extract_features(tree: &DomTree) -> FeatureValueMap {
    let mut m = extract_page_features(tree);
    if let Ok(url_features) = extract_url_features(&tree.source_url) {
        for f in url_features {
            m.set(f.canonical(), 1.0);
        }
    }
    m
}
