//! Layer-wise DOM similarity against recently detected phishing pages.
//!
//! Pages are reduced to [`TreeSignature`]s: per breadth-first layer, each
//! element's tag plus hash sets of its `name=value` attributes and of its
//! direct text. The baseline similarity is symmetric (Jaccard ratios over
//! unions); the personalized one divides by the stored page's own nodes, so
//! extra nodes in the unknown page cost nothing, and it skips inserted
//! wrapper layers.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use url::Url;

use crate::classifier::ScoreOracle;
use crate::dom::{bfs_layers, strip_zero_width, DomTree, Element};

/// First eight bytes of the SHA-256 digest, big-endian.
pub fn hash64(s: &str) -> u64 {
    let d = Sha256::digest(s.as_bytes());
    u64::from_be_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ElementSignature {
    pub tag: String,
    pub attrs: BTreeSet<u64>,
    /// Direct text children, zero-width characters removed and trimmed;
    /// blank text is ignored.
    pub texts: BTreeSet<u64>,
}

impl ElementSignature {
    pub fn of(e: &Element) -> Self {
        ElementSignature {
            tag: e.tag.clone(),
            attrs: e.attrs().iter().map(|a| hash64(&format!("{}={}", a.name, a.value))).collect(),
            texts: e
                .text_children()
                .map(strip_zero_width)
                .filter(|t| !t.trim().is_empty())
                .map(|t| hash64(t.trim()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TreeSignature {
    pub layers: Vec<Vec<ElementSignature>>,
}

impl TreeSignature {
    pub fn of(tree: &DomTree) -> Self {
        TreeSignature {
            layers: bfs_layers(tree)
                .into_iter()
                .map(|layer| layer.into_iter().map(ElementSignature::of).collect())
                .collect(),
        }
    }
}

/// `|a ∩ b| / d`, with `0 / 0 = 1`.
fn ratio(inter: usize, d: usize) -> f64 {
    if d == 0 {
        1.0
    } else {
        inter as f64 / d as f64
    }
}

pub fn element_similarity_baseline(e: &ElementSignature, f: &ElementSignature) -> f64 {
    if e.tag != f.tag {
        return 0.0;
    }
    let ai = e.attrs.intersection(&f.attrs).count();
    let ti = e.texts.intersection(&f.texts).count();
    (ratio(ai, e.attrs.union(&f.attrs).count()) + ratio(ti, e.texts.union(&f.texts).count())) / 2.0
}

/// Asymmetric similarity: `stored` is the known phishing element.
pub fn element_similarity_pelican(stored: &ElementSignature, unknown: &ElementSignature) -> f64 {
    if stored.tag != unknown.tag {
        return 0.0;
    }
    let ai = stored.attrs.intersection(&unknown.attrs).count();
    let ti = stored.texts.intersection(&unknown.texts).count();
    (ratio(ai, stored.attrs.len()) + ratio(ti, stored.texts.len())) / 2.0
}

/// Greedy best-first matching of same-tag elements; ties go to document
/// order. Returns the summed similarity and the number of matched pairs.
fn match_layer(
    a: &[ElementSignature],
    b: &[ElementSignature],
    sim: fn(&ElementSignature, &ElementSignature) -> f64,
) -> (f64, usize) {
    let mut by_tag: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, e) in a.iter().enumerate() {
        by_tag.entry(&e.tag).or_default().0.push(i);
    }
    for (j, e) in b.iter().enumerate() {
        by_tag.entry(&e.tag).or_default().1.push(j);
    }
    let mut comm = 0.0;
    let mut matched = 0;
    for (xs, ys) in by_tag.values() {
        if xs.is_empty() || ys.is_empty() {
            continue;
        }
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(xs.len() * ys.len());
        for &i in xs {
            for &j in ys {
                pairs.push((sim(&a[i], &b[j]), i, j));
            }
        }
        pairs.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
        let mut used_a = HashSet::new();
        let mut used_b = HashSet::new();
        let limit = xs.len().min(ys.len());
        for (s, i, j) in pairs {
            if used_a.contains(&i) || used_b.contains(&j) {
                continue;
            }
            used_a.insert(i);
            used_b.insert(j);
            comm += s;
            if used_a.len() == limit {
                break;
            }
        }
        matched += limit;
    }
    (comm, matched)
}

fn baseline_layer(a: &[ElementSignature], b: &[ElementSignature]) -> f64 {
    let (comm, matched) = match_layer(a, b, element_similarity_baseline);
    let union = a.len() + b.len() - matched;
    if union == 0 {
        1.0
    } else {
        comm / union as f64
    }
}

fn pelican_layer(stored: &[ElementSignature], unknown: &[ElementSignature]) -> f64 {
    let (comm, _) = match_layer(stored, unknown, element_similarity_pelican);
    if stored.is_empty() {
        1.0
    } else {
        comm / stored.len() as f64
    }
}

/// Average per-layer similarity over the deeper tree's layers; matched
/// same-tag pairs count once in a layer's union. Symmetric.
pub fn signature_similarity_baseline(t: &TreeSignature, u: &TreeSignature) -> f64 {
    let (t, u) = if t <= u { (t, u) } else { (u, t) };
    let m = t.layers.len().max(u.layers.len());
    if m == 0 {
        return 1.0;
    }
    let total: f64 = (0..m)
        .map(|i| match (t.layers.get(i), u.layers.get(i)) {
            (Some(a), Some(b)) => baseline_layer(a, b),
            _ => 0.0,
        })
        .sum();
    total / m as f64
}

pub fn tree_similarity_baseline(t: &DomTree, u: &DomTree) -> f64 {
    signature_similarity_baseline(&TreeSignature::of(t), &TreeSignature::of(u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PelicanConfig {
    /// Store capacity.
    pub k: usize,
    /// Store horizon in hours.
    pub h_hours: f64,
    pub detect_threshold: f64,
    /// Layer similarity at which a probed layer is accepted as the match.
    pub layer_accept: f64,
    /// How many layers past the cursor may be probed.
    pub lookahead: usize,
}

impl Default for PelicanConfig {
    fn default() -> Self {
        PelicanConfig {
            k: 1000,
            h_hours: 24.0,
            detect_threshold: 0.9,
            layer_accept: 0.5,
            lookahead: 3,
        }
    }
}

/// Personalized similarity of an unknown page to a stored phishing page,
/// averaged over the stored page's layers. Each stored layer is compared
/// with the unknown layers from a cursor onwards; the first within
/// `lookahead` whose similarity reaches `layer_accept` is taken and the
/// cursor moves past it. When none qualifies the same-index layer is used.
pub fn signature_similarity_pelican(stored: &TreeSignature, unknown: &TreeSignature, cfg: &PelicanConfig) -> f64 {
    let m = stored.layers.len();
    if m == 0 {
        return 1.0;
    }
    let mut cursor = 0;
    let mut total = 0.0;
    for (i, layer) in stored.layers.iter().enumerate() {
        let end = (cursor + cfg.lookahead + 1).min(unknown.layers.len());
        let probed = (cursor..end)
            .map(|j| (j, pelican_layer(layer, &unknown.layers[j])))
            .find(|(_, s)| *s >= cfg.layer_accept);
        match probed {
            Some((j, s)) => {
                total += s;
                cursor = j + 1;
            }
            None => {
                total += unknown.layers.get(i).map_or(0.0, |u| pelican_layer(layer, u));
                cursor = cursor.max(i + 1);
            }
        }
    }
    total / m as f64
}

pub fn tree_similarity_pelican(stored: &DomTree, unknown: &DomTree, cfg: &PelicanConfig) -> f64 {
    signature_similarity_pelican(&TreeSignature::of(stored), &TreeSignature::of(unknown), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub signature: TreeSignature,
    /// Detection time, seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Recently detected phishing pages, bounded by count and age.
#[derive(Debug, Clone, PartialEq)]
pub struct PhishStore {
    pub entries: Vec<StoreEntry>,
    pub k: usize,
    pub horizon_secs: u64,
}

impl PhishStore {
    pub fn new(k: usize, h_hours: f64) -> Self {
        PhishStore {
            entries: Vec::new(),
            k,
            horizon_secs: (h_hours * 3600.0).round() as u64,
        }
    }

    pub fn from_config(cfg: &PelicanConfig) -> Self {
        PhishStore::new(cfg.k, cfg.h_hours)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, tree: &DomTree, now: u64) {
        self.entries.push(StoreEntry {
            signature: TreeSignature::of(tree),
            timestamp: now,
        });
        self.evict(now);
    }

    /// Drops entries older than the horizon, then the oldest ones beyond
    /// capacity.
    pub fn evict(&mut self, now: u64) {
        let h = self.horizon_secs;
        self.entries.retain(|e| now.saturating_sub(e.timestamp) <= h);
        self.entries.sort_by_key(|e| e.timestamp);
        if self.entries.len() > self.k {
            let excess = self.entries.len() - self.k;
            self.entries.drain(..excess);
        }
    }

    /// Best personalized similarity of `tree` against the store, with the
    /// index of the entry achieving it (lowest index on ties).
    pub fn best_match(&self, tree: &DomTree, cfg: &PelicanConfig) -> Option<(usize, f64)> {
        let sig = TreeSignature::of(tree);
        self.entries
            .par_iter()
            .enumerate()
            .map(|(i, e)| (i, signature_similarity_pelican(&e.signature, &sig, cfg)))
            .reduce_with(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a })
    }

    /// Reads a JSON array of entries; a missing file is an empty store.
    pub fn load(path: impl AsRef<Path>, cfg: &PelicanConfig) -> io::Result<Self> {
        let mut store = PhishStore::from_config(cfg);
        match fs::read_to_string(path) {
            Ok(text) => {
                store.entries = serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                Ok(store)
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(store),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, serde_json::to_string(&self.entries).expect("entries serialize"))
    }
}

/// A set of URLs read one per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UrlList {
    urls: BTreeSet<String>,
}

fn normalize(url: &str) -> String {
    Url::parse(url.trim()).map_or_else(|_| url.trim().to_string(), |u| u.to_string())
}

impl UrlList {
    pub fn parse(text: &str) -> Self {
        UrlList {
            urls: text.lines().map(str::trim).filter(|l| !l.is_empty()).map(normalize).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(UrlList::parse(&fs::read_to_string(path)?))
    }

    pub fn contains(&self, url: &str) -> bool {
        self.urls.contains(&normalize(url))
    }

    pub fn len(&self) -> usize {
        self.urls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.urls.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<S> for UrlList {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        UrlList {
            urls: iter.into_iter().map(|u| normalize(u.as_ref())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictLabel {
    Whitelisted,
    Blacklisted,
    EvasionDetected,
    PhishingByClassifier,
    Benign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: VerdictLabel,
    pub similarity: Option<f64>,
    pub matched_entry: Option<usize>,
    /// Classifier score, when the classifier was consulted.
    pub score: Option<f64>,
}

impl Verdict {
    fn plain(label: VerdictLabel) -> Self {
        Verdict {
            label,
            similarity: None,
            matched_entry: None,
            score: None,
        }
    }

    pub fn is_phishing(&self) -> bool {
        !matches!(self.label, VerdictLabel::Whitelisted | VerdictLabel::Benign)
    }
}

/// Whitelist, blacklist, similarity to stored phishing pages, then the
/// classifier. Pages the classifier flags are added to the store.
pub fn pipeline(
    url: &str,
    page: &DomTree,
    whitelist: &UrlList,
    blacklist: &UrlList,
    store: &mut PhishStore,
    oracle: &mut ScoreOracle,
    cfg: &PelicanConfig,
    now: u64,
) -> Verdict {
    if whitelist.contains(url) {
        return Verdict::plain(VerdictLabel::Whitelisted);
    }
    if blacklist.contains(url) {
        return Verdict::plain(VerdictLabel::Blacklisted);
    }
    store.evict(now);
    let best = store.best_match(page, cfg);
    if let Some((i, s)) = best {
        if s >= cfg.detect_threshold {
            return Verdict {
                label: VerdictLabel::EvasionDetected,
                similarity: Some(s),
                matched_entry: Some(i),
                score: None,
            };
        }
    }
    let score = oracle.score(page);
    let label = if score >= oracle.threshold() {
        store.insert(page, now);
        VerdictLabel::PhishingByClassifier
    } else {
        VerdictLabel::Benign
    };
    Verdict {
        label,
        similarity: best.map(|b| b.1),
        matched_entry: None,
        score: Some(score),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ClassificationRule, Classifier};
    use crate::dom::parse_html;
    use crate::mutation::{add_invisible_element, apply_op, ElementSpec};
    use proptest::prelude::*;

    const URL: &str = "https://login.example.com/";

    fn sig(tag: &str, attrs: &[&str], texts: &[&str]) -> ElementSignature {
        ElementSignature {
            tag: tag.into(),
            attrs: attrs.iter().map(|a| hash64(a)).collect(),
            texts: texts.iter().map(|t| hash64(t)).collect(),
        }
    }

    fn page() -> DomTree {
        parse_html(
            "<html><head><title>Sign in</title></head><body class=\"main\">\
             <div class=\"box\"><form action=\"/login\"><input type=\"text\" name=\"u\">\
             <input type=\"password\" name=\"p\"><button type=\"submit\">Go</button></form></div>\
             <p class=\"foot\">Help</p><a href=\"https://login.example.com/reset\">Reset</a></body></html>",
            URL,
        )
    }

    #[test]
    fn element_similarity_examples() {
        let e = sig("a", &["href=/x", "class=c"], &["Home"]);
        assert_eq!(element_similarity_baseline(&e, &e), 1.0);
        assert_eq!(element_similarity_baseline(&sig("p", &["a=1"], &[]), &sig("p", &["b=2"], &[])), 0.5);
        assert_eq!(element_similarity_baseline(&e, &sig("p", &["href=/x", "class=c"], &["Home"])), 0.0);
        let sup = sig("a", &["href=/x", "class=c", "style=display:none"], &["Home", "More"]);
        assert_eq!(element_similarity_pelican(&e, &sup), 1.0);
        assert_eq!(element_similarity_pelican(&e, &sig("a", &["href=/x"], &["Home"])), 0.75);
        assert_eq!(element_similarity_pelican(&e, &sig("b", &[], &[])), 0.0);
    }

    #[test]
    fn reflexive_and_disjoint() {
        let t = page();
        let cfg = PelicanConfig::default();
        assert_eq!(tree_similarity_baseline(&t, &t), 1.0);
        assert_eq!(tree_similarity_pelican(&t, &t, &cfg), 1.0);
        let u = parse_html("<svg><g></g></svg>", URL);
        let v = parse_html("<math><mi></mi></math>", URL);
        // both roots are html, nothing below it matches
        assert!(tree_similarity_baseline(&u, &v) <= 1.0 / 3.0);
        let x = TreeSignature {
            layers: vec![vec![sig("x", &[], &[])]],
        };
        let y = TreeSignature {
            layers: vec![vec![sig("y", &[], &[])]],
        };
        assert_eq!(signature_similarity_baseline(&x, &y), 0.0);
        assert_eq!(signature_similarity_pelican(&x, &y, &cfg), 0.0);
    }

    #[test]
    fn invisible_additions_do_not_fool_pelican() {
        let t = page();
        let mut m = t.clone();
        for i in 0..300 {
            let spec = ElementSpec::new("a").attr("href", &format!("http://login.example.com/{i}"));
            let op = add_invisible_element(&m, &spec);
            apply_op(&mut m, &op).unwrap();
        }
        assert_eq!(tree_similarity_pelican(&t, &m, &PelicanConfig::default()), 1.0);
        assert!(tree_similarity_baseline(&t, &m) < 0.85);
    }

    #[test]
    fn inserted_wrapper_layer_is_skipped() {
        let inner = "<div class=\"box\"><form action=\"/login\"><input type=\"text\" name=\"u\">\
                     <input type=\"password\" name=\"p\"></form></div><p class=\"foot\">Help</p>";
        let t = parse_html(&format!("<html><body class=\"main\">{inner}</body></html>"), URL);
        let wrapped = parse_html(
            &format!("<html><body class=\"main\"><section id=\"w\">{inner}</section></body></html>"),
            URL,
        );
        assert_eq!(bfs_layers(&wrapped).len(), bfs_layers(&t).len() + 1);
        assert_eq!(tree_similarity_pelican(&t, &wrapped, &PelicanConfig::default()), 1.0);
        let no_skip = PelicanConfig {
            lookahead: 0,
            ..PelicanConfig::default()
        };
        assert!(tree_similarity_pelican(&t, &wrapped, &no_skip) < 0.9);
    }

    #[test]
    fn zero_width_text_is_normalized() {
        let t = parse_html("<p>Hello world</p>", URL);
        let u = parse_html("<p>Hel\u{200B}lo world</p>", URL);
        assert_eq!(tree_similarity_pelican(&t, &u, &PelicanConfig::default()), 1.0);
    }

    #[test]
    fn store_capacity_and_horizon() {
        let t = page();
        let mut s = PhishStore::new(2, 1.0);
        s.insert(&t, 10);
        s.insert(&parse_html("<p>a</p>", URL), 20);
        s.insert(&parse_html("<p>b</p>", URL), 30);
        assert_eq!(s.entries.iter().map(|e| e.timestamp).collect::<Vec<_>>(), vec![20, 30]);
        s.evict(30 + 3600);
        assert_eq!(s.len(), 1);
        s.evict(20 + 2 * 3600);
        assert!(s.is_empty());
    }

    proptest! {
        #[test]
        fn store_matches_history_filter(gaps in prop::collection::vec(0u64..20_000, 1..40)) {
            let mut s = PhishStore::new(5, 24.0);
            let mut now = 0;
            let mut history = Vec::new();
            for (i, g) in gaps.iter().enumerate() {
                now += g;
                s.insert(&parse_html(&format!("<p>{i}</p>"), URL), now);
                history.push(now);
            }
            let alive: Vec<u64> = history.iter().copied().filter(|t| now - t <= 24 * 3600).collect();
            let expect = alive[alive.len().saturating_sub(5)..].to_vec();
            prop_assert_eq!(s.entries.iter().map(|e| e.timestamp).collect::<Vec<_>>(), expect);
        }

        #[test]
        fn similarities_in_range_and_baseline_symmetric(
            a in "[a-c ]{0,12}", b in "[a-c ]{0,12}", n in 0usize..4, m in 0usize..4
        ) {
            let mk = |text: &str, k: usize| {
                let mut html = String::from("<body>");
                for i in 0..k {
                    html.push_str(&format!("<div class=\"c{i}\"><span>{text}</span></div>"));
                }
                html.push_str(&format!("<p>{text}</p></body>"));
                parse_html(&html, URL)
            };
            let (t, u) = (mk(&a, n), mk(&b, m));
            let cfg = PelicanConfig::default();
            let base = tree_similarity_baseline(&t, &u);
            prop_assert_eq!(base, tree_similarity_baseline(&u, &t));
            prop_assert!((0.0..=1.0).contains(&base));
            let p = tree_similarity_pelican(&t, &u, &cfg);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert_eq!(tree_similarity_pelican(&t, &t, &cfg), 1.0);
        }
    }

    fn classifier() -> Classifier {
        Classifier::new(-1.0, vec![ClassificationRule::new("p", &["PageHasPswdInputs"], 3.0)]).unwrap()
    }

    #[test]
    fn pipeline_order() {
        let cfg = PelicanConfig::default();
        let mut store = PhishStore::from_config(&cfg);
        let mut oracle = ScoreOracle::new(classifier());
        let white: UrlList = ["https://login.example.com"].into_iter().collect();
        let black: UrlList = ["https://bad.example.net/"].into_iter().collect();
        let t = page();
        let v = pipeline(URL, &t, &white, &black, &mut store, &mut oracle, &cfg, 0);
        assert_eq!(v.label, VerdictLabel::Whitelisted);
        let v = pipeline("https://bad.example.net/", &t, &white, &black, &mut store, &mut oracle, &cfg, 0);
        assert_eq!(v.label, VerdictLabel::Blacklisted);
        assert_eq!(oracle.query_count(), 0);

        let benign = parse_html("<p>news</p>", "https://news.example.org/");
        let v = pipeline("https://news.example.org/", &benign, &white, &black, &mut store, &mut oracle, &cfg, 0);
        assert_eq!(v.label, VerdictLabel::Benign);
        assert_eq!(oracle.query_count(), 1);

        let v = pipeline("https://x.example.net/", &t, &white, &black, &mut store, &mut oracle, &cfg, 5);
        assert_eq!(v.label, VerdictLabel::PhishingByClassifier);
        assert_eq!(store.len(), 1);
        let mut crafted = t.clone();
        let op = add_invisible_element(&crafted, &ElementSpec::new("p").text("Privacy"));
        apply_op(&mut crafted, &op).unwrap();
        let v = pipeline("https://y.example.net/", &crafted, &white, &black, &mut store, &mut oracle, &cfg, 6);
        assert_eq!(v.label, VerdictLabel::EvasionDetected);
        assert_eq!(v.matched_entry, Some(0));
        assert!(v.similarity.unwrap() >= 0.9);
        assert_eq!(oracle.query_count(), 2);
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("store.json");
        let cfg = PelicanConfig::default();
        assert!(PhishStore::load(&p, &cfg).unwrap().is_empty());
        let mut s = PhishStore::from_config(&cfg);
        s.insert(&page(), 100);
        s.save(&p).unwrap();
        assert_eq!(PhishStore::load(&p, &cfg).unwrap(), s);
    }
}
