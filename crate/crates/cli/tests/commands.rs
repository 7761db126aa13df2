use std::fs;
use std::path::Path;
use std::process::Command;

use phishlab_cli::{run, save_page, CliError};
use phishlab_core::classifier::{load_model, save_model, ClassificationRule, Classifier};
use phishlab_core::collision::harvest_candidates;
use phishlab_core::dom::parse_html_bytes;
use phishlab_core::features::{digest_hex, extract_features};
use phishlab_core::fixtures;
use phishlab_core::personalize::has_external_action;
use serde_json::Value;
use tempfile::TempDir;

/// Runs the command in-process; `@name` arguments resolve against `dir`.
fn cli(dir: &Path, args: &[&str]) -> (Result<(), CliError>, String) {
    let mut full = vec!["phishlab".to_string()];
    full.extend(args.iter().map(|a| match a.strip_prefix('@') {
        Some(rel) => dir.join(rel).display().to_string(),
        None => a.to_string(),
    }));
    let mut out = Vec::new();
    let r = run(full, &mut out);
    (r, String::from_utf8(out).unwrap())
}

fn code(r: &Result<(), CliError>) -> i32 {
    r.as_ref().map_or_else(CliError::exit_code, |_| 0)
}

fn json(out: &str) -> Value {
    serde_json::from_str(out).unwrap()
}

fn seeded() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    save_model(&fixtures::attack_model(), dir.path().join("model.json")).unwrap();
    save_page(&fixtures::attack_suite()[0], &dir.path().join("phish.html")).unwrap();
    save_page(&fixtures::legit_page(0, &[]), &dir.path().join("legit.html")).unwrap();
    dir
}

fn write_corpus(dir: &Path, pages: &[phishlab_core::dom::DomTree]) {
    let mut manifest = String::new();
    for (i, p) in pages.iter().enumerate() {
        let name = format!("page{i}.html");
        fs::write(dir.join(&name), p.to_html()).unwrap();
        manifest.push_str(&format!("{{\"url\":\"{}\",\"path\":\"{name}\",\"label\":\"legit\"}}\n", p.source_url));
    }
    fs::write(dir.join("corpus.jsonl"), manifest).unwrap();
}

#[test]
fn score_of_empty_model_sits_on_threshold() {
    let dir = seeded();
    fs::write(dir.path().join("zero.json"), r#"{"bias":0,"threshold":0.5,"rules":[]}"#).unwrap();
    let (r, out) = cli(dir.path(), &["score", "@legit.html", "--model", "@zero.json"]);
    assert!(r.is_ok());
    assert_eq!(out.trim(), "0.500000 PHISH");
}

#[test]
fn score_of_missing_page_exits_2() {
    let dir = seeded();
    let (r, _) = cli(dir.path(), &["score", "@absent.html", "--model", "@model.json"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn hashed_model_scores_like_its_plain_twin() {
    let dir = seeded();
    save_model(&fixtures::attack_model().hashed_twin(), dir.path().join("hashed.json")).unwrap();
    let (_, plain) = cli(dir.path(), &["score", "@phish.html", "--model", "@model.json"]);
    let (_, hashed) = cli(dir.path(), &["score", "@phish.html", "--model", "@hashed.json"]);
    assert!(plain.ends_with("PHISH\n"), "{plain}");
    assert_eq!(plain, hashed);
}

#[test]
fn score_reads_url_sidecar() {
    let dir = seeded();
    let (_, with_sidecar) = cli(dir.path(), &["score", "@phish.html", "--model", "@model.json"]);
    fs::remove_file(dir.path().join("phish.url")).unwrap();
    let (_, without) = cli(dir.path(), &["score", "@phish.html", "--model", "@model.json"]);
    assert_ne!(with_sidecar, without);
}

#[test]
fn white_box_attack_writes_page_and_report() {
    let dir = seeded();
    let (r, out) = cli(dir.path(), &["attack", "@phish.html", "--model", "@model.json", "--level", "white", "--out", "@out"]);
    assert!(r.is_ok(), "{r:?}");
    let report = json(&out);
    assert_eq!(report["final_path"], "phish.white.html");
    assert!(report.get("elapsed_ms").is_none());
    let on_disk: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/phish.white.report.json")).unwrap()).unwrap();
    assert_eq!(on_disk, report);
    let (_, score) = cli(dir.path(), &["score", "@out/phish.white.html", "--model", "@model.json"]);
    assert!(score.ends_with("BENIGN\n"), "{score}");
}

#[test]
fn attacking_a_benign_page_exits_3() {
    let dir = seeded();
    let (r, _) = cli(dir.path(), &["attack", "@legit.html", "--model", "@model.json", "--out", "@out"]);
    assert_eq!(code(&r), 3);
    assert!(!dir.path().join("out/legit.white.html").exists());
}

#[test]
fn tiny_budget_exhausts_black_box() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures::undeletable_fixture();
    save_model(&fx.model, dir.path().join("model.json")).unwrap();
    save_page(&fx.seed, &dir.path().join("seed.html")).unwrap();
    fx.pool.save(dir.path().join("pool.jsonl")).unwrap();
    let args = ["attack", "@seed.html", "--model", "@model.json", "--level", "black", "--pool", "@pool.jsonl", "--out", "@out"];
    let (r, out) = cli(dir.path(), &[&args[..], &["--budget", "1"]].concat());
    assert_eq!(code(&r), 4);
    let report = json(&out);
    assert_eq!(report["success"], false);
    assert_eq!(report["additions"], 1);
    assert!(dir.path().join("out/seed.black.report.json").exists());
    let (r, out) = cli(dir.path(), &args);
    assert!(r.is_ok(), "{r:?}");
    assert_eq!(json(&out)["success"], true);
}

#[test]
fn defend_flags_a_resubmitted_page() {
    let dir = seeded();
    let args = ["defend", "@phish.html", "--model", "@model.json", "--store", "@store.json", "--now", "1000"];
    let (_, first) = cli(dir.path(), &args);
    assert_eq!(json(&first)["label"], "phishing_by_classifier");
    let (_, attacked) = cli(dir.path(), &["attack", "@phish.html", "--model", "@model.json", "--out", "@out"]);
    assert_eq!(json(&attacked)["success"], true);
    let (_, second) = cli(
        dir.path(),
        &["defend", "@out/phish.white.html", "--model", "@model.json", "--store", "@store.json", "--now", "1001"],
    );
    let v = json(&second);
    assert_eq!(v["label"], "evasion_detected");
    assert!(v["similarity"].as_f64().unwrap() >= 0.9);
}

#[test]
fn defend_honours_lists_and_benign_pages() {
    let dir = seeded();
    let url = fs::read_to_string(dir.path().join("phish.url")).unwrap();
    fs::write(dir.path().join("white.txt"), &url).unwrap();
    let (_, w) = cli(
        dir.path(),
        &["defend", "@phish.html", "--model", "@model.json", "--store", "@store.json", "--whitelist", "@white.txt"],
    );
    assert_eq!(json(&w)["label"], "whitelisted");
    let (_, b) = cli(
        dir.path(),
        &["defend", "@phish.html", "--model", "@model.json", "--store", "@store.json", "--blacklist", "@white.txt"],
    );
    assert_eq!(json(&b)["label"], "blacklisted");
    let (_, l) = cli(dir.path(), &["defend", "@legit.html", "--model", "@model.json", "--store", "@store.json"]);
    assert_eq!(json(&l)["label"], "benign");
    assert!(!dir.path().join("store.json").exists());
}

#[test]
fn infer_recovers_corpus_features() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixtures::collision_corpus();
    let pages: Vec<_> = corpus.pages.iter().map(|p| p.tree.clone()).collect();
    write_corpus(dir.path(), &pages);
    let names: Vec<String> = harvest_candidates(&corpus).into_iter().filter(|c| c.starts_with("Page")).take(40).collect();
    let digests: String = names.iter().map(|n| digest_hex(n) + "\n").collect();
    fs::write(dir.path().join("digests.txt"), digests).unwrap();
    let (r, out) = cli(dir.path(), &["infer", "--corpus", "@corpus.jsonl", "--manifest", "@digests.txt"]);
    assert!(r.is_ok(), "{r:?}");
    let v = json(&out);
    assert_eq!(v["recovery_rate"], 1.0);
    assert!(v.get("elapsed_ms").is_none());
    let (_, timed) = cli(dir.path(), &["infer", "--corpus", "@corpus.jsonl", "--manifest", "@digests.txt", "--timing"]);
    assert!(json(&timed).get("elapsed_ms").is_some());
}

#[test]
fn infer_handles_empty_and_malformed_manifests() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &fixtures::legit_corpus(2));
    fs::write(dir.path().join("empty.txt"), "").unwrap();
    let (r, _) = cli(dir.path(), &["infer", "--corpus", "@corpus.jsonl", "--manifest", "@empty.txt"]);
    assert!(r.is_ok(), "{r:?}");
    fs::write(dir.path().join("bad.txt"), "not-hex\n").unwrap();
    let (r, _) = cli(dir.path(), &["infer", "--corpus", "@corpus.jsonl", "--manifest", "@bad.txt"]);
    assert_eq!(code(&r), 2);
}

fn subset_model() -> Classifier {
    let rule = |id: &str, f: &[&str], w| ClassificationRule::new(id, f, w);
    Classifier::new(
        0.0,
        vec![
            rule("n1", &["PageTerm=about"], -1.0),
            rule("p1", &["PageTerm=about", "PageHasForms"], 1.0),
            rule("n2", &["PageTerm=help"], -1.0),
            rule("p2", &["PageTerm=help", "PageHasTextInputs"], 1.0),
            rule("n3", &["PageTerm=news"], -1.0),
            rule("p3", &["PageTerm=news", "PageHasPswdInputs"], 1.0),
        ],
    )
    .unwrap()
}

#[test]
fn subset_pruning_zeroes_negative_subrules() {
    let dir = tempfile::tempdir().unwrap();
    save_model(&subset_model(), dir.path().join("m.json")).unwrap();
    let (r, out) = cli(dir.path(), &["prune", "--model", "@m.json", "--strategy", "subset", "--out", "@p.json"]);
    assert!(r.is_ok(), "{r:?}");
    assert_eq!(json(&out)["zeroed"], serde_json::json!(["n1", "n2", "n3"]));
    let pruned = load_model(dir.path().join("p.json")).unwrap();
    let zero: Vec<_> = pruned.rules.iter().filter(|r| r.weight == 0.0).map(|r| r.id.as_str()).collect();
    assert_eq!(zero, ["n1", "n2", "n3"]);

    let (_, again) = cli(dir.path(), &["prune", "--model", "@p.json", "--strategy", "subset", "--out", "@q.json"]);
    assert_eq!(json(&again)["zeroed"], serde_json::json!([]));
    assert_eq!(fs::read(dir.path().join("p.json")).unwrap(), fs::read(dir.path().join("q.json")).unwrap());
}

#[test]
fn single_pruning_leaves_shared_rules_alone() {
    let dir = tempfile::tempdir().unwrap();
    save_model(&subset_model(), dir.path().join("m.json")).unwrap();
    let (_, out) = cli(dir.path(), &["prune", "--model", "@m.json", "--strategy", "single", "--out", "@p.json"]);
    assert_eq!(json(&out)["zeroed"], serde_json::json!([]));
    assert_eq!(load_model(dir.path().join("p.json")).unwrap(), subset_model());
}

fn fixture_model() -> Classifier {
    let rule = |id: &str, f: &[&str], w| ClassificationRule::new(id, f, w);
    Classifier::new(
        0.0,
        vec![
            rule("forms", &["PageHasForms"], 0.5),
            rule("action", &["PageActionOtherDomainFreq"], 1.0),
            rule("radio", &["PageHasRadioInputs"], 0.5),
            rule("s1", &["PageNumScriptTags>1"], 0.5),
            rule("s6", &["PageNumScriptTags>6"], 1.0),
        ],
    )
    .unwrap()
}

#[test]
fn gen_fixtures_lands_in_range() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &fixtures::legit_corpus(16));
    save_model(&fixture_model(), dir.path().join("m.json")).unwrap();
    let (r, out) = cli(
        dir.path(),
        &["gen-fixtures", "--corpus", "@corpus.jsonl", "--model", "@m.json", "--range", "0.9,1.0", "--out", "@fx"],
    );
    assert!(r.is_ok(), "{r:?}");
    let listing = json(&out);
    assert_eq!(listing.as_array().unwrap().len(), 10);
    for entry in listing.as_array().unwrap() {
        let path = dir.path().join("fx").join(entry["page"].as_str().unwrap());
        let url = fs::read_to_string(path.with_extension("url")).unwrap();
        let tree = parse_html_bytes(&fs::read(&path).unwrap(), url.trim()).unwrap();
        let s = fixture_model().score(&extract_features(&tree));
        assert!((0.9..1.0).contains(&s), "{s}");
        assert!(has_external_action(&tree));
    }
}

#[test]
fn unreachable_fixture_range_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &fixtures::legit_corpus(4));
    save_model(&fixture_model(), dir.path().join("m.json")).unwrap();
    let (r, _) = cli(
        dir.path(),
        &["gen-fixtures", "--corpus", "@corpus.jsonl", "--model", "@m.json", "--range", "0,0.1", "--out", "@fx"],
    );
    assert_eq!(code(&r), 3);
}

#[test]
fn report_of_empty_directory_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let (r, _) = cli(dir.path(), &["report", "@."]);
    assert!(r.is_ok(), "{r:?}");
}

#[test]
fn report_pairs_variants() {
    let dir = seeded();
    save_model(&fixtures::defense_model(), dir.path().join("defense.json")).unwrap();
    let pruned = fixtures::defense_model().prune(&fixtures::defense_model().subset_prune_targets()).unwrap();
    save_model(&pruned, dir.path().join("pruned.json")).unwrap();
    for (i, page) in fixtures::personalized_suite(1).iter().enumerate() {
        let name = format!("p{i}.html");
        save_page(page, &dir.path().join(&name)).unwrap();
        for (variant, model) in [("base", "defense.json"), ("pruned", "pruned.json")] {
            let out = format!("@results/{variant}");
            let (r, _) = cli(dir.path(), &["attack", &format!("@{name}"), "--model", &format!("@{model}"), "--out", &out]);
            assert!(matches!(code(&r), 0 | 4), "{r:?}");
        }
    }
    let (r, text) = cli(dir.path(), &["report", "@results", "--csv", "@csv"]);
    assert!(r.is_ok(), "{r:?}");
    assert!(text.contains("base") && text.contains("pruned"), "{text}");
    assert!(dir.path().join("csv/seeds.csv").exists());
    assert!(dir.path().join("csv/buckets.csv").exists());
}

#[test]
fn binary_maps_errors_to_exit_codes() {
    let dir = seeded();
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_phishlab")).args(args).current_dir(dir.path()).output().unwrap()
    };
    let ok = run(&["score", "phish.html", "--model", "model.json"]);
    assert_eq!(ok.status.code(), Some(0));
    let missing = run(&["score", "absent.html", "--model", "model.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("phishlab: "));
    let benign = run(&["attack", "legit.html", "--model", "model.json"]);
    assert_eq!(benign.status.code(), Some(3));
    let bad_flag = run(&["score", "--frobnicate"]);
    assert_eq!(bad_flag.status.code(), Some(2));
}
