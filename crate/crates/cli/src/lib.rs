//! The `phishlab` command line: scoring, attacks, the similarity defense,
//! hash inversion, rule pruning, fixture generation and experiment reports.
//!
//! Exit codes: 0 success, 2 I/O or schema error, 3 precondition failed (the
//! page is not detected, or a fixture range cannot be reached), 4 attack
//! exhausted.

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use phishlab_core::attacks::{run_attack, AttackConfig, AttackError, AttackReport, AttackResult, Knowledge, Level};
use phishlab_core::classifier::{load_model, load_rule_set, save_model, Classifier, RuleSet, ScoreOracle};
use phishlab_core::collision::{invert_hashes, read_manifest, Corpus, Label};
use phishlab_core::dom::{parse_html_bytes, DomTree};
use phishlab_core::features::extract_features;
use phishlab_core::mutation::AdditionPool;
use phishlab_core::pelican::{pipeline, PhishStore, UrlList, VerdictLabel};
use phishlab_core::personalize::{gen_fixtures, PersonalizeConfig, PersonalizeError};
use serde_json::{json, Value};
use thiserror::Error;

use config::Config;
use report::{ExperimentReport, REPORT_SUFFIX};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Precondition(String),
    #[error("{0}")]
    Exhausted(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::Exhausted(_) => 4,
        }
    }
}

fn io<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Io(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "phishlab", version, about = "Phishing classifier evasion and defense toolkit")]
pub struct Cli {
    /// Flat key = value configuration file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    Subset,
    Single,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the decision score and label of a page.
    Score {
        page: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// URL the page was served from; defaults to the `.url` file next
        /// to the page.
        #[arg(long)]
        url: Option<String>,
    },
    /// Mutate a phishing page until the classifier calls it benign.
    Attack {
        page: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "white")]
        level: Level,
        /// Seed of the black-box sampler.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        /// Addition pool (JSON lines of element specs) for the black box.
        #[arg(long)]
        pool: Option<PathBuf>,
        /// The attacker's model (white) or rule set (grey); defaults to the
        /// scored model.
        #[arg(long)]
        knowledge: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Record wall-clock time in the report.
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        url: Option<String>,
    },
    /// Run a page through the whitelist, blacklist, store and classifier.
    Defend {
        page: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Store of known phishing pages; created when missing.
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        whitelist: Option<PathBuf>,
        #[arg(long)]
        blacklist: Option<PathBuf>,
        /// Current time in seconds since the epoch.
        #[arg(long)]
        now: Option<u64>,
        #[arg(long)]
        url: Option<String>,
    },
    /// Recover hashed feature names from a corpus.
    Infer {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// One hex digest per line.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        timing: bool,
    },
    /// Zero the weights of subset or single rules.
    Prune {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn legitimate pages into phishing fixtures scoring in a range.
    GenFixtures {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// `LO,HI`: scores land in [LO, HI).
        #[arg(long, value_parser = parse_range)]
        range: (f64, f64),
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate attack reports by initial-score bucket.
    Report {
        results: PathBuf,
        /// Also write seeds.csv and buckets.csv here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad bound {lo:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad bound {hi:?}"))?;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(format!("range {lo},{hi} must satisfy 0 <= LO < HI <= 1"));
    }
    Ok((lo, hi))
}

/// Sidecar holding a page's URL: `page.html` has `page.url`.
pub fn url_sidecar(page: &Path) -> PathBuf {
    page.with_extension("url")
}

fn page_url(page: &Path, flag: Option<&str>) -> String {
    if let Some(u) = flag {
        return u.to_string();
    }
    if let Ok(u) = fs::read_to_string(url_sidecar(page)) {
        return u.trim().to_string();
    }
    let abs = fs::canonicalize(page).unwrap_or_else(|_| page.to_path_buf());
    format!("file://{}", abs.display())
}

pub fn load_page(page: &Path, url: Option<&str>) -> Result<DomTree, CliError> {
    let bytes = fs::read(page).map_err(|e| CliError::Io(format!("cannot read {}: {e}", page.display())))?;
    parse_html_bytes(&bytes, &page_url(page, url)).map_err(|e| CliError::Io(format!("{}: {e}", page.display())))
}

/// Writes the page and its URL sidecar.
pub fn save_page(tree: &DomTree, path: &Path) -> Result<(), CliError> {
    fs::write(path, tree.to_html()).map_err(io)?;
    fs::write(url_sidecar(path), format!("{}\n", tree.source_url)).map_err(io)
}

fn required<'a>(flag: &'a Option<PathBuf>, fallback: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, CliError> {
    flag.as_deref()
        .or(fallback.as_deref())
        .ok_or_else(|| CliError::Io(format!("no {name} given (flag or config key)")))
}

fn model_from(flag: &Option<PathBuf>, cfg: &Config) -> Result<Classifier, CliError> {
    let mut m = load_model(required(flag, &cfg.model, "model")?).map_err(io)?;
    if let Some(t) = cfg.threshold {
        m.threshold = t;
    }
    if let Some(t) = cfg.freq_detect_threshold {
        m.freq_detect_threshold = t;
    }
    Ok(m)
}

fn to_json(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "page".into())
}

/// Parses `args` (program name first) and runs the command, writing results
/// to `out`.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            CliError::Precondition(e.to_string())
        }
        _ => CliError::Io(e.to_string()),
    });
    let cli = match cli {
        Ok(c) => c,
        Err(CliError::Precondition(help)) => {
            write!(out, "{help}").map_err(io)?;
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    let cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(io)?,
        None => Config::default(),
    };
    let mut emit = |s: String| writeln!(out, "{s}").map_err(io);
    match cli.command {
        Command::Score { page, model, url } => {
            let m = model_from(&model, &cfg)?;
            let tree = load_page(&page, url.as_deref())?;
            let s = m.score(&extract_features(&tree));
            let label = if m.is_phishing(s) { "PHISH" } else { "BENIGN" };
            emit(format!("{s:.6} {label}"))
        }
        Command::Attack {
            page,
            model,
            level,
            seed,
            budget,
            batch,
            pool,
            knowledge,
            out: dir,
            timing,
            url,
        } => {
            let m = model_from(&model, &cfg)?;
            let tree = load_page(&page, url.as_deref())?;
            let know = match (level, &knowledge) {
                (Level::White, Some(k)) => Knowledge::White(load_model(k).map_err(io)?),
                (Level::White, None) => Knowledge::White(m.clone()),
                (Level::Grey, Some(k)) => Knowledge::Grey(load_rule_set(k).map_err(io)?),
                (Level::Grey, None) => Knowledge::Grey(RuleSet::from_classifier(&m)),
                (Level::Black, _) => Knowledge::Black,
            };
            let pool = match pool.as_ref().or(cfg.pool.as_ref()) {
                Some(p) => AdditionPool::load(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
                None => AdditionPool::default(),
            };
            let acfg = AttackConfig {
                rng_seed: seed.unwrap_or(cfg.rng_seed),
                budget: budget.unwrap_or(cfg.budget),
                batch: batch.unwrap_or(cfg.batch),
                ..AttackConfig::default()
            };
            let mut oracle = ScoreOracle::new(m);
            let outcome = run_attack(&know, &mut oracle, &tree, &pool, &acfg);
            let (result, failure): (AttackResult, Option<String>) = match outcome {
                Ok(r) => (r, None),
                Err(AttackError::NotPhishing(s)) => {
                    return Err(CliError::Precondition(format!("not detected as phishing (score {s:.6})")))
                }
                Err(e @ (AttackError::Exhausted(_) | AttackError::BudgetExhausted(_))) => {
                    let msg = e.to_string();
                    (e.partial().expect("failed attacks carry a result").clone(), Some(msg))
                }
                Err(e) => return Err(CliError::Io(e.to_string())),
            };
            fs::create_dir_all(&dir).map_err(io)?;
            let base = format!("{}.{}", file_stem(&page), level.name());
            let final_name = format!("{base}.html");
            save_page(&result.final_page, &dir.join(&final_name))?;
            let report = AttackReport::new(&result, &page.display().to_string(), &final_name, timing);
            let text = to_json(&report);
            fs::write(dir.join(format!("{base}{REPORT_SUFFIX}")), format!("{text}\n")).map_err(io)?;
            emit(text)?;
            match failure {
                None => Ok(()),
                Some(msg) => Err(CliError::Exhausted(msg)),
            }
        }
        Command::Defend {
            page,
            model,
            store,
            whitelist,
            blacklist,
            now,
            url,
        } => {
            let m = model_from(&model, &cfg)?;
            let tree = load_page(&page, url.as_deref())?;
            let list = |p: &Option<PathBuf>| -> Result<UrlList, CliError> {
                match p {
                    Some(p) => UrlList::load(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
                    None => Ok(UrlList::default()),
                }
            };
            let (white, black) = (list(&whitelist)?, list(&blacklist)?);
            let mut st = PhishStore::load(&store, &cfg.pelican).map_err(|e| CliError::Io(format!("{}: {e}", store.display())))?;
            let now = now.unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()));
            let mut oracle = ScoreOracle::new(m);
            let v = pipeline(&tree.source_url, &tree, &white, &black, &mut st, &mut oracle, &cfg.pelican, now);
            if v.label == VerdictLabel::PhishingByClassifier {
                st.save(&store).map_err(|e| CliError::Io(format!("{}: {e}", store.display())))?;
            }
            emit(to_json(&v))
        }
        Command::Infer { corpus, manifest, timing } => {
            let corpus = Corpus::load(required(&corpus, &cfg.corpus, "corpus")?).map_err(io)?;
            let digests = read_manifest(&manifest).map_err(io)?;
            let candidates = phishlab_core::collision::harvest_candidates(&corpus);
            let report = invert_hashes(&candidates, &digests).map_err(io)?;
            let mut v = serde_json::to_value(&report).expect("report serializes");
            if let Value::Object(o) = &mut v {
                if !timing {
                    o.remove("elapsed_ms");
                }
                o.insert("recovery_rate".into(), json!(report.recovery_rate()));
            }
            emit(to_json(&v))
        }
        Command::Prune { model, strategy, out: path } => {
            let m = model_from(&model, &cfg)?;
            let targets = match strategy {
                Strategy::Subset => m.subset_prune_targets(),
                Strategy::Single => m.single_prune_targets(),
            };
            let pruned = m.prune(&targets).map_err(io)?;
            save_model(&pruned, &path).map_err(io)?;
            let name = match strategy {
                Strategy::Subset => "subset",
                Strategy::Single => "single",
            };
            emit(to_json(&json!({ "strategy": name, "zeroed": targets })))
        }
        Command::GenFixtures {
            corpus,
            model,
            range: (lo, hi),
            count,
            out: dir,
        } => {
            let m = model_from(&model, &cfg)?;
            let corpus = Corpus::load(required(&corpus, &cfg.corpus, "corpus")?).map_err(io)?;
            let legit = corpus.pages.iter().filter(|p| p.label == Label::Legit).map(|p| &p.tree);
            let pages = gen_fixtures(legit, &m, lo, hi, count, &PersonalizeConfig::default()).map_err(|e| match e {
                PersonalizeError::Unreachable { .. } => CliError::Precondition(e.to_string()),
                PersonalizeError::HashedModel => CliError::Io(e.to_string()),
            })?;
            fs::create_dir_all(&dir).map_err(io)?;
            let mut listing = Vec::new();
            for (i, p) in pages.iter().enumerate() {
                let name = format!("fixture-{i:03}.html");
                save_page(p, &dir.join(&name))?;
                listing.push(json!({ "page": name, "url": p.source_url, "score": m.score(&extract_features(p)) }));
            }
            emit(to_json(&listing))
        }
        Command::Report { results, csv } => {
            let r = ExperimentReport::collect(&results).map_err(|e| CliError::Io(format!("{}: {e}", results.display())))?;
            if let Some(dir) = csv {
                r.write_csv(&dir).map_err(io)?;
            }
            emit(r.render_text())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("0.9,1.0"), Ok((0.9, 1.0)));
        assert_eq!(parse_range(" 0.5 , 0.6 "), Ok((0.5, 0.6)));
        assert!(parse_range("0.6,0.5").is_err());
        assert!(parse_range("0.5").is_err());
        assert!(parse_range("0,2").is_err());
    }

    #[test]
    fn sidecar_sits_next_to_page() {
        assert_eq!(url_sidecar(Path::new("a/b.html")), PathBuf::from("a/b.url"));
    }

    #[test]
    fn missing_model_is_an_io_error() {
        let mut out = Vec::new();
        let err = run(["phishlab", "score", "nope.html"], &mut out).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
