//! Deterministic synthetic models, pages, addition pools and corpora for
//! tests, benchmarks and the experiment harness. Everything here is a pure
//! function of its arguments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{ClassificationRule, Classifier};
use crate::collision::{harvest_candidates, invert_hashes, decode_classifier, Corpus, Label};
use crate::dom::{parse_html, DomTree};
use crate::features::{extract_features, FeatureValueMap};
use crate::mutation::AdditionPool;
use crate::personalize::{gen_fixtures, PersonalizeConfig};

/// Score ranges of the report buckets below 1.
pub const BUCKETS: [(f64, f64); 5] = [(0.5, 0.6), (0.6, 0.7), (0.7, 0.8), (0.8, 0.9), (0.9, 1.0)];

/// Neutral vocabulary: none of these are model terms.
const WORDS: &[&str] = &[
    "garden", "river", "market", "coffee", "travel", "winter", "summer", "museum", "bridge", "harbor",
    "forest", "recipe", "planet", "camera", "violin", "bakery", "cinema", "ticket", "island", "valley",
    "lantern", "meadow", "orchard", "pepper", "quartz", "saddle", "timber", "velvet", "walnut", "yogurt",
    "anchor", "basket", "candle", "dinner", "engine", "falcon", "ginger", "hammer", "indigo", "jacket",
    "kettle", "ladder", "marble", "needle", "oyster", "pillow", "rabbit", "silver", "tunnel", "umpire",
    "vessel", "wander", "zipper", "almond", "breeze", "cactus", "dragon", "ember", "fabric", "glacier",
    "hazel", "igloo", "jungle", "kiosk", "lemon", "mango", "nectar", "olive", "parade", "quiver",
    "radish", "sparrow", "tomato", "unicorn", "vintage", "willow", "yarn", "zebra", "atlas", "beacon",
    "canyon", "delta", "echo", "fjord", "gazebo", "horizon", "iris", "jasmine", "koala", "lagoon",
    "mosaic", "nomad", "opal", "prairie", "quill", "reef", "safari", "tundra", "utopia", "vortex",
    "wharf", "yodel", "zenith", "amber", "bistro", "cobalt", "dune", "easel", "fern", "grove",
];

fn rule(id: &str, features: &[&str], weight: f64) -> ClassificationRule {
    ClassificationRule::new(id, features, weight)
}

fn words(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| *WORDS.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_ascii_uppercase().to_string() + c.as_str()).unwrap_or_default()
}

pub fn score_of(model: &Classifier, page: &DomTree) -> f64 {
    model.score(&extract_features(page))
}

/// The 20-rule model the attack suite is built against.
pub fn attack_model() -> Classifier {
    Classifier::new(
        -2.2,
        vec![
            rule("a01", &["PageHasPswdInputs"], 1.1),
            rule("a02", &["PageTerm=verify"], 0.9),
            rule("a03", &["PageTerm=account", "PageHasForms"], 0.8),
            rule("a04", &["PageExternalLinksFreq"], 1.0),
            rule("a05", &["PageActionOtherDomainFreq", "PageHasPswdInputs"], 1.4),
            rule("a06", &["PageLinkDomain=bit.ly"], 0.7),
            rule("a07", &["PageTerm=suspended"], 1.2),
            rule("a08", &["PageHasTextInputs", "PageHasPswdInputs"], 0.5),
            rule("a09", &["PageHasForms"], 0.6),
            rule("a10", &["PageNumScriptTags>1"], 0.3),
            rule("a11", &["UrlPathToken=login"], 0.4),
            rule("a12", &["PageHasCheckInputs", "PageHasForms"], 0.2),
            rule("a13", &["PageTerm=Privacy"], -0.9),
            rule("a14", &["PageTerm=Copyright", "PageHasRadioInputs"], -1.1),
            rule("a15", &["PageTerm=Copyright"], -0.4),
            rule("a16", &["PageTerm=Careers"], -0.7),
            rule("a17", &["PageSecureLinksFreq"], -0.5),
            rule("a18", &["UrlTld=org"], -1.5),
            rule("a19", &["PageImgOtherDomainFreq", "PageTerm=verify"], 0.6),
            rule("a20", &["PageTerm=help"], -0.3),
        ],
    )
    .expect("fixture model is valid")
}

/// Knobs of a synthetic phishing page.
#[derive(Debug, Clone, PartialEq)]
pub struct PhishSpec {
    pub brand: String,
    pub text_input: bool,
    pub password: bool,
    pub checkbox: bool,
    pub verify: bool,
    pub account: bool,
    pub suspended: bool,
    pub external_links: usize,
    pub secure_links: usize,
    pub bitly: bool,
    pub external_action: bool,
    pub external_logo: bool,
    pub scripts: usize,
    pub privacy: bool,
    pub copyright: bool,
    pub login_path: bool,
}

const BRANDS: &[&str] = &["paypal", "apple", "netflix", "chase", "dropbox", "office", "amazon", "wellsfargo"];

impl PhishSpec {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        PhishSpec {
            brand: BRANDS.choose(rng).expect("non-empty").to_string(),
            text_input: rng.gen_bool(0.7),
            password: rng.gen_bool(0.6),
            checkbox: rng.gen_bool(0.3),
            verify: rng.gen_bool(0.5),
            account: rng.gen_bool(0.5),
            suspended: rng.gen_bool(0.3),
            external_links: rng.gen_range(0..4),
            secure_links: rng.gen_range(0..3),
            bitly: rng.gen_bool(0.3),
            external_action: rng.gen_bool(0.5),
            external_logo: rng.gen_bool(0.4),
            scripts: rng.gen_range(0..4),
            privacy: rng.gen_bool(0.3),
            copyright: rng.gen_bool(0.3),
            login_path: rng.gen_bool(0.5),
        }
    }
}

pub fn phish_page(s: &PhishSpec) -> DomTree {
    let brand = &s.brand;
    let title = capitalize(brand);
    let path = if s.login_path { "login" } else { "session" };
    let url = format!("http://{brand}.account-notice.com/{path}/index.php");
    let mut html = format!("<html><head><title>{title} sign in</title>");
    for i in 0..s.scripts {
        html.push_str(&format!("<script src=\"/js/app{i}.js\"></script>"));
    }
    html.push_str("</head><body class=\"page\"><div class=\"top\">");
    let logo = if s.external_logo {
        format!("http://img.{brand}-assets.net/logo.png")
    } else {
        "/img/logo.png".to_string()
    };
    html.push_str(&format!("<img src=\"{logo}\" alt=\"{title}\">"));
    html.push_str("<a href=\"/\">Home</a> <a href=\"/support\">Support</a> <a href=\"/contact\">Contact</a>");
    for i in 0..s.external_links {
        html.push_str(&format!(" <a href=\"http://cdn{i}.mirror-files.net/{brand}\">Mirror {i}</a>"));
    }
    for i in 0..s.secure_links {
        html.push_str(&format!(" <a href=\"https://{brand}.account-notice.com/s{i}\">Safety {i}</a>"));
    }
    if s.bitly {
        html.push_str(" <a href=\"https://bit.ly/3xQ9z\">Updates</a>");
    }
    html.push_str("</div><div class=\"main\">");
    let whose = if s.account { "account" } else { "profile" };
    html.push_str(&format!("<h1>Sign in to your {title} {whose}</h1>"));
    let act = if s.verify { "verify" } else { "confirm" };
    html.push_str(&format!("<p>Please {act} your details to continue</p>"));
    if s.suspended {
        html.push_str("<p>Access is suspended until you sign in</p>");
    }
    let action = if s.external_action {
        "http://collect.drop-mail.net/post.php"
    } else {
        "/session"
    };
    html.push_str(&format!("<form action=\"{action}\" method=\"post\">"));
    if s.text_input {
        html.push_str("<input type=\"text\" name=\"email\">");
    }
    if s.password {
        html.push_str("<input type=\"password\" name=\"pass\">");
    }
    if s.checkbox {
        html.push_str("<input type=\"checkbox\" name=\"remember\">");
    }
    html.push_str("<button type=\"submit\">Continue</button></form></div><div class=\"foot\"><p>");
    let mut foot = vec!["All", "rights", "reserved"];
    if s.privacy {
        foot.push("Privacy");
    }
    if s.copyright {
        foot.push("Copyright");
    }
    html.push_str(&foot.join(" "));
    html.push_str("</p></div></body></html>");
    parse_html(&html, &url)
}

/// `per_bucket` random phishing pages in each of `BUCKETS` under `model`.
pub fn bucketed_suite(model: &Classifier, per_bucket: usize, seed: u64) -> Vec<DomTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets: Vec<Vec<DomTree>> = vec![Vec::new(); BUCKETS.len()];
    for _ in 0..200_000 {
        if buckets.iter().all(|b| b.len() == per_bucket) {
            break;
        }
        let page = phish_page(&PhishSpec::random(&mut rng));
        let s = score_of(model, &page);
        if let Some(i) = BUCKETS.iter().position(|&(lo, hi)| s >= lo && s < hi) {
            if buckets[i].len() < per_bucket {
                buckets[i].push(page);
            }
        }
    }
    buckets.into_iter().flatten().collect()
}

/// Thirty phishing pages, six per bucket, against `attack_model`.
pub fn attack_suite() -> Vec<DomTree> {
    bucketed_suite(&attack_model(), 6, 1)
}

/// A legitimate page. `extra` terms go into the footer, one element each.
pub fn legit_page(i: usize, extra: &[&str]) -> DomTree {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e9 + i as u64);
    let name = format!("{}{}", WORDS[i % WORDS.len()], i);
    let url = format!("https://www.{name}.com/{}", WORDS[(i * 7 + 3) % WORDS.len()]);
    let mut html = format!(
        "<html><head><title>{} {}</title><script src=\"/static/main.js\"></script></head><body>",
        capitalize(&name),
        words(&mut rng, 1)
    );
    html.push_str("<div class=\"nav\"><a href=\"/\">Home</a> <a href=\"/about\">About</a>");
    for _ in 0..2 {
        let w = words(&mut rng, 1);
        html.push_str(&format!(" <a href=\"/{w}\">{}</a>", capitalize(&w)));
    }
    html.push_str("</div><div class=\"content\">");
    html.push_str(&format!("<h2>{}</h2><p>{}</p><ul>", words(&mut rng, 3), words(&mut rng, 8)));
    for _ in 0..3 {
        html.push_str(&format!("<li>{}</li>", words(&mut rng, 2)));
    }
    html.push_str("</ul>");
    match i % 4 {
        0 => html.push_str(
            "<form action=\"/search\" method=\"get\"><input type=\"text\" name=\"q\"><button type=\"submit\">Search</button></form>",
        ),
        1 => html.push_str(
            "<form action=\"/subscribe\" method=\"post\"><input type=\"text\" name=\"email\"><input type=\"checkbox\" name=\"weekly\"><button type=\"submit\">Subscribe</button></form>",
        ),
        2 => html.push_str(
            "<form action=\"/poll\" method=\"post\"><input type=\"radio\" name=\"vote\" value=\"yes\"><input type=\"radio\" name=\"vote\" value=\"no\"><button type=\"submit\">Vote</button></form>",
        ),
        _ => {}
    }
    html.push_str(&format!(
        "</div><div class=\"footer\"><a href=\"/privacy\">Privacy</a> <a href=\"/careers\">Careers</a> <span>Copyright {}</span>",
        2000 + i
    ));
    for t in extra {
        html.push_str(&format!(" <span>{t}</span>"));
    }
    html.push_str("</div></body></html>");
    parse_html(&html, &url)
}

pub fn legit_corpus(n: usize) -> Vec<DomTree> {
    (0..n).map(|i| legit_page(i, &[])).collect()
}

/// Pool harvested from forty legitimate pages.
pub fn attack_pool() -> AdditionPool {
    AdditionPool::harvest(&legit_corpus(40))
}

/// A hashed model whose only positive rules rely on undeletable features
/// and whose negative rules need rare terms.
#[derive(Debug, Clone)]
pub struct UndeletableFixture {
    /// The plaintext model; the oracle runs its hashed twin.
    pub model: Classifier,
    pub seed: DomTree,
    /// What a white-box attacker recovers by inverting the hashed model with
    /// the seed page as corpus.
    pub attacker_model: Classifier,
    pub pool: AdditionPool,
}

pub const RARE_TERMS: [&str; 3] = ["Accessibility", "Sitemap", "Cookies"];

pub fn undeletable_fixture() -> UndeletableFixture {
    let model = Classifier::new(
        -1.0,
        vec![
            rule("t1", &["PageHasForms"], 1.2),
            rule("t2", &["PageNumScriptTags>1"], 0.6),
            rule("t3", &["UrlPathToken=signin"], 0.86),
            rule("t4", &["PageNumScriptTags>6"], 0.9),
            rule("t5", &["PageTerm=Accessibility"], -0.7),
            rule("t6", &["PageTerm=Sitemap"], -0.7),
            rule("t7", &["PageTerm=Cookies"], -0.7),
            rule("t8", &["UrlTld=org"], -3.0),
        ],
    )
    .expect("fixture model is valid");
    let seed = parse_html(
        "<html><head><title>Member area</title><script src=\"/a.js\"></script><script src=\"/b.js\"></script></head>\
         <body><div class=\"box\"><h1>Member area</h1><form action=\"/signin\" method=\"post\">\
         <input type=\"email\" name=\"mail\"><button type=\"submit\">Next</button></form></div></body></html>",
        "http://members.portal-update.com/signin",
    );
    let hashed = model.hashed_twin();
    let mut corpus = Corpus::default();
    corpus.push_page(seed.clone(), Label::Phish);
    corpus.url_list.push(seed.source_url.clone());
    let manifest: Vec<String> = hashed.manifest().into_iter().collect();
    let report = invert_hashes(&harvest_candidates(&corpus), &manifest).expect("manifest holds digests");
    let attacker_model = decode_classifier(&hashed, &report.recovered);
    let pages: Vec<DomTree> = (0..32)
        .map(|i| match i {
            5 => legit_page(i, &RARE_TERMS[0..1]),
            13 => legit_page(i, &RARE_TERMS[1..2]),
            22 => legit_page(i, &RARE_TERMS[2..3]),
            _ => legit_page(i, &[]),
        })
        .collect();
    UndeletableFixture {
        model,
        seed,
        attacker_model,
        pool: AdditionPool::harvest(&pages),
    }
}

/// Two rules on link ratios over a flat page of secure links, so the grey
/// box breaks them by diluting the secure-link ratio.
pub fn dilution_fixture() -> (Classifier, DomTree) {
    let model = Classifier::new(
        -1.5,
        vec![
            rule("d1", &["PageSecureLinksFreq"], 2.0),
            rule("d2", &["PageSecureLinksFreq", "PageHasPswdInputs"], 2.0),
        ],
    )
    .expect("fixture model is valid");
    let mut html = String::new();
    for i in 0..20 {
        html.push_str(&format!("<a href=\"/p{i}\">Page {i}</a> "));
    }
    html.push_str("<input type=\"password\" name=\"pin\">");
    (model, parse_html(&html, "https://secure.bank-check.com/"))
}

/// Terms of the subset-pruning fixture: `X_i` rules have `{X_i, Y_i}`
/// supersets; `Z_j` rules are single.
pub const SUBSET_X: [&str; 4] = ["Newsroom", "Investors", "Partners", "Locations"];
pub const SUBSET_Y: [&str; 4] = ["Archive", "Reports", "Programs", "Directions"];
pub const SINGLE_Z: [&str; 8] = ["Blog", "Events", "Gallery", "Press", "Stories", "Team", "Forum", "Jobs"];

/// Model for the pruning experiments: negative subset rules, negative
/// single rules, and undeletable positives for personalization.
pub fn defense_model() -> Classifier {
    let mut rules = vec![
        rule("b01", &["PageHasForms"], 0.5),
        rule("b02", &["PageActionOtherDomainFreq", "PageHasForms"], 0.8),
        rule("b03", &["PageHasRadioInputs"], 0.4),
        rule("b04", &["PageHasCheckInputs"], 0.6),
        rule("b05", &["PageNumScriptTags>1"], 0.5),
        rule("b06", &["PageNumScriptTags>6"], 0.9),
        rule("b07", &["PageHasPswdInputs", "PageHasForms"], 1.0),
        rule("b08", &["PageTerm=login"], 0.3),
        rule("b09", &["PageTerm=Privacy", "PageTerm=Careers"], -0.8),
        rule("b10", &["PageTerm=Careers", "PageTerm=Copyright"], -0.8),
    ];
    for (i, (x, y)) in SUBSET_X.iter().zip(SUBSET_Y).enumerate() {
        rules.push(ClassificationRule::new(&format!("s{}", i + 1), &[format!("PageTerm={x}")], -0.6));
        rules.push(ClassificationRule::new(
            &format!("p{}", i + 1),
            &[format!("PageTerm={x}"), format!("PageTerm={y}")],
            -0.6,
        ));
    }
    for (j, z) in SINGLE_Z.iter().enumerate() {
        rules.push(ClassificationRule::new(&format!("z{}", j + 1), &[format!("PageTerm={z}")], -0.35));
    }
    Classifier::new(0.3, rules).expect("fixture model is valid")
}

/// Legitimate pages for the pruning experiments. Pages without forms carry
/// the subset and single terms, one term each, so pools harvested from the
/// corpus hold each of them exactly once.
pub fn defense_corpus(n: usize) -> Vec<DomTree> {
    let rare: Vec<&str> = SUBSET_X.iter().chain(&SUBSET_Y).chain(&SINGLE_Z).copied().collect();
    let mut next = 0;
    (0..n)
        .map(|i| {
            if i % 4 == 3 && next < rare.len() {
                next += 1;
                legit_page(i, &rare[next - 1..next])
            } else {
                legit_page(i, &[])
            }
        })
        .collect()
}

/// Personalized phishing pages: `per_bucket` in each of `BUCKETS`.
pub fn personalized_suite(per_bucket: usize) -> Vec<DomTree> {
    let model = defense_model();
    let corpus = defense_corpus(100);
    let cfg = PersonalizeConfig::default();
    let mut out = Vec::new();
    for (k, &(lo, hi)) in BUCKETS.iter().enumerate() {
        let rotated: Vec<&DomTree> = corpus.iter().cycle().skip(k * 7).take(corpus.len()).collect();
        out.extend(gen_fixtures(rotated, &model, lo, hi, per_bucket, &cfg).expect("every bucket is reachable"));
    }
    out
}

/// A model where single rules alone can flip every seed of
/// `single_rule_seeds`.
pub fn single_rule_model() -> Classifier {
    Classifier::new(
        -1.0,
        vec![
            rule("c01", &["PageTerm=suspended"], 1.5),
            rule("c02", &["PageLinkDomain=bit.ly"], 1.2),
            rule("c03", &["PageExternalLinksFreq"], 1.0),
            rule("c04", &["PageImgOtherDomainFreq"], 0.8),
            rule("c05", &["PageTerm=Privacy"], -1.0),
            rule("c06", &["PageTerm=Careers"], -0.9),
            rule("c07", &["PageHasRadioInputs"], -0.8),
            rule("c08", &["PageSecureLinksFreq"], -0.6),
            rule("c09", &["PageHasPswdInputs", "PageHasForms"], 1.0),
            rule("c10", &["PageHasForms"], 0.4),
            rule("c11", &["PageHasPswdInputs", "PageHasTextInputs"], 0.6),
            rule("c12", &["PageTerm=verify", "PageHasForms"], 0.5),
        ],
    )
    .expect("fixture model is valid")
}

pub fn single_rule_seeds() -> Vec<DomTree> {
    bucketed_suite(&single_rule_model(), 2, 3)
}

/// Twenty legitimate pages, each also listed by URL.
pub fn collision_corpus() -> Corpus {
    let mut c = Corpus::default();
    for t in legit_corpus(20) {
        c.url_list.push(t.source_url.clone());
        c.push_page(t, Label::Legit);
    }
    c
}

/// Features drawn by the random fixture classifiers.
const RANDOM_FEATURES: [&str; 15] = [
    "PageHasForms",
    "PageHasTextInputs",
    "PageHasPswdInputs",
    "PageHasRadioInputs",
    "PageHasCheckInputs",
    "PageExternalLinksFreq",
    "PageActionOtherDomainFreq",
    "PageSecureLinksFreq",
    "PageImgOtherDomainFreq",
    "PageNumScriptTags>1",
    "PageTerm=verify",
    "PageTerm=account",
    "PageLinkDomain=bit.ly",
    "UrlTld=com",
    "UrlPathToken=login",
];

/// A classifier with up to `max_rules` rules of one to three features from a
/// fifteen-feature universe.
pub fn random_classifier(rng: &mut ChaCha8Rng, max_rules: usize) -> Classifier {
    let n = rng.gen_range(1..=max_rules);
    let rules = (0..n)
        .map(|i| {
            let k = rng.gen_range(1..=3);
            let fs: Vec<&str> = RANDOM_FEATURES.choose_multiple(rng, k).copied().collect();
            rule(&format!("r{i:02}"), &fs, rng.gen_range(-3.0..3.0))
        })
        .collect();
    Classifier::new(rng.gen_range(-2.0..2.0), rules).expect("random rules are valid")
}

/// A feature map over the random-classifier universe; frequencies sometimes
/// fall below the detection threshold.
pub fn random_feature_map(rng: &mut ChaCha8Rng) -> FeatureValueMap {
    let mut m = FeatureValueMap::new();
    for f in RANDOM_FEATURES {
        if rng.gen_bool(0.5) {
            let v = if f.ends_with("Freq") { rng.gen_range(0.01..1.0) } else { 1.0 };
            m.set(f, v);
        }
    }
    m
}
