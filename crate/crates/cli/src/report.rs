//! Aggregation of attack reports into per-seed and per-bucket tables.
//!
//! Reports are the `*.report.json` files under a results directory. The
//! directory a report sits in, relative to the results root, names its
//! variant, so paired runs (say `full/` and `pruned/`) can be compared side
//! by side.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use phishlab_core::attacks::{AttackReport, Level};
use serde::Serialize;

/// Initial-score buckets, in table order.
pub const BUCKET_LABELS: [&str; 6] = ["[0.5,0.6)", "[0.6,0.7)", "[0.7,0.8)", "[0.8,0.9)", "[0.9,1.0)", "1"];

pub const REPORT_SUFFIX: &str = ".report.json";

/// Bucket of an initial score; scores below 0.5 have none.
pub fn bucket_label(score: f64) -> Option<&'static str> {
    const LOWER: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];
    if score >= 1.0 {
        return Some(BUCKET_LABELS[5]);
    }
    LOWER.iter().rposition(|&lo| score >= lo).map(|i| BUCKET_LABELS[i])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRow {
    pub variant: String,
    pub seed: String,
    pub level: Level,
    pub initial_score: f64,
    pub bucket: String,
    pub success: bool,
    pub mutated_features: usize,
    pub mutated_rules: usize,
    pub queries: u64,
    pub operations: usize,
    pub additions: usize,
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketRow {
    pub variant: String,
    pub level: Level,
    pub bucket: String,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_mutated_features: f64,
    pub mean_mutated_rules: f64,
    pub mean_queries: f64,
    pub mean_operations: f64,
    /// Present only when every run in the bucket was timed.
    pub mean_elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub seeds: Vec<SeedRow>,
    pub buckets: Vec<BucketRow>,
}

fn report_files(dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            report_files(&p, out)?;
        } else if p.to_string_lossy().ends_with(REPORT_SUFFIX) {
            out.push(p);
        }
    }
    Ok(())
}

fn stem(path: &str) -> String {
    let name = Path::new(path).file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".html").unwrap_or(&name).to_string()
}

fn mean<I: Iterator<Item = f64>>(it: I) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl ExperimentReport {
    /// Reads every report under `dir`.
    pub fn collect(dir: &Path) -> io::Result<ExperimentReport> {
        let mut files = Vec::new();
        report_files(dir, &mut files)?;
        let mut rows = Vec::new();
        for f in files {
            let text = fs::read_to_string(&f)?;
            let r: AttackReport = serde_json::from_str(&text)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", f.display())))?;
            let variant = f
                .parent()
                .and_then(|p| p.strip_prefix(dir).ok())
                .map(|p| p.to_string_lossy().into_owned())
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| "-".to_string());
            rows.push(SeedRow {
                variant,
                seed: stem(&r.seed_path),
                level: r.level,
                initial_score: r.initial_score,
                bucket: bucket_label(r.initial_score).unwrap_or("<0.5").to_string(),
                success: r.success,
                mutated_features: r.mutated_features,
                mutated_rules: r.mutated_rules,
                queries: r.queries,
                operations: r.operations,
                additions: r.additions,
                elapsed_ms: r.elapsed_ms,
            });
        }
        Ok(ExperimentReport::from_rows(rows))
    }

    pub fn from_rows(seeds: Vec<SeedRow>) -> ExperimentReport {
        let mut groups: BTreeMap<(String, Level, usize), Vec<&SeedRow>> = BTreeMap::new();
        for row in &seeds {
            if let Some(i) = BUCKET_LABELS.iter().position(|b| *b == row.bucket) {
                groups.entry((row.variant.clone(), row.level, i)).or_default().push(row);
            }
        }
        let buckets = groups
            .into_iter()
            .map(|((variant, level, i), rows)| {
                let runs = rows.len();
                let successes = rows.iter().filter(|r| r.success).count();
                let mean_elapsed_ms = rows
                    .iter()
                    .map(|r| r.elapsed_ms)
                    .collect::<Option<Vec<f64>>>()
                    .map(|v| mean(v.into_iter()));
                BucketRow {
                    variant,
                    level,
                    bucket: BUCKET_LABELS[i].to_string(),
                    runs,
                    successes,
                    success_rate: successes as f64 / runs as f64,
                    mean_mutated_features: mean(rows.iter().map(|r| r.mutated_features as f64)),
                    mean_mutated_rules: mean(rows.iter().map(|r| r.mutated_rules as f64)),
                    mean_queries: mean(rows.iter().map(|r| r.queries as f64)),
                    mean_operations: mean(rows.iter().map(|r| r.operations as f64)),
                    mean_elapsed_ms,
                }
            })
            .collect();
        ExperimentReport { seeds, buckets }
    }

    pub fn variants(&self) -> Vec<String> {
        let mut v: Vec<String> = self.seeds.iter().map(|r| r.variant.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:<6} {:<10} {:>5} {:>8} {:>9} {:>9} {:>10} {:>11} {:>11}",
            "variant", "level", "bucket", "runs", "success", "features", "rules", "queries", "operations", "elapsed_ms"
        );
        for b in &self.buckets {
            let elapsed = b.mean_elapsed_ms.map_or("-".to_string(), |e| format!("{e:.3}"));
            let _ = writeln!(
                s,
                "{:<10} {:<6} {:<10} {:>5} {:>7.1}% {:>9.2} {:>9.2} {:>10.2} {:>11.2} {:>11}",
                b.variant,
                b.level.name(),
                b.bucket,
                b.runs,
                100.0 * b.success_rate,
                b.mean_mutated_features,
                b.mean_mutated_rules,
                b.mean_queries,
                b.mean_operations,
                elapsed
            );
        }
        if let Some(paired) = self.paired_table() {
            s.push('\n');
            s.push_str(&paired);
        }
        s
    }

    /// Mean operation counts per bucket with one column per variant, when
    /// there is more than one variant.
    pub fn paired_table(&self) -> Option<String> {
        let variants = self.variants();
        if variants.len() < 2 {
            return None;
        }
        let mut cells: BTreeMap<(Level, usize), BTreeMap<&str, f64>> = BTreeMap::new();
        for b in &self.buckets {
            let i = BUCKET_LABELS.iter().position(|l| *l == b.bucket).expect("aggregated buckets are labelled");
            cells.entry((b.level, i)).or_default().insert(&b.variant, b.mean_operations);
        }
        let mut s = String::new();
        let _ = write!(s, "{:<6} {:<10}", "level", "bucket");
        for v in &variants {
            let _ = write!(s, " {v:>12}");
        }
        s.push('\n');
        for ((level, i), row) in cells {
            let _ = write!(s, "{:<6} {:<10}", level.name(), BUCKET_LABELS[i]);
            for v in &variants {
                match row.get(v.as_str()) {
                    Some(x) => {
                        let _ = write!(s, " {x:>12.1}");
                    }
                    None => {
                        let _ = write!(s, " {:>12}", "-");
                    }
                }
            }
            s.push('\n');
        }
        Some(s)
    }

    /// Writes `seeds.csv` and `buckets.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let to_io = |e: csv::Error| io::Error::new(io::ErrorKind::Other, e);
        let mut w = csv::Writer::from_path(dir.join("seeds.csv")).map_err(to_io)?;
        if self.seeds.is_empty() {
            w.write_record([
                "variant", "seed", "level", "initial_score", "bucket", "success", "mutated_features",
                "mutated_rules", "queries", "operations", "additions", "elapsed_ms",
            ])
            .map_err(to_io)?;
        }
        for r in &self.seeds {
            w.serialize(r).map_err(to_io)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("buckets.csv")).map_err(to_io)?;
        if self.buckets.is_empty() {
            w.write_record([
                "variant", "level", "bucket", "runs", "successes", "success_rate", "mean_mutated_features",
                "mean_mutated_rules", "mean_queries", "mean_operations", "mean_elapsed_ms",
            ])
            .map_err(to_io)?;
        }
        for b in &self.buckets {
            w.serialize(b).map_err(to_io)?;
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(variant: &str, level: Level, score: f64, success: bool, ops: usize) -> SeedRow {
        SeedRow {
            variant: variant.to_string(),
            seed: "s".to_string(),
            level,
            initial_score: score,
            bucket: bucket_label(score).unwrap_or("<0.5").to_string(),
            success,
            mutated_features: 2,
            mutated_rules: 3,
            queries: 10,
            operations: ops,
            additions: 0,
            elapsed_ms: None,
        }
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(bucket_label(0.4999), None);
        assert_eq!(bucket_label(0.5), Some("[0.5,0.6)"));
        assert_eq!(bucket_label(0.6), Some("[0.6,0.7)"));
        assert_eq!(bucket_label(0.7), Some("[0.7,0.8)"));
        assert_eq!(bucket_label(0.8999999), Some("[0.8,0.9)"));
        assert_eq!(bucket_label(0.9), Some("[0.9,1.0)"));
        assert_eq!(bucket_label(0.9999999), Some("[0.9,1.0)"));
        assert_eq!(bucket_label(1.0), Some("1"));
    }

    #[test]
    fn aggregates_per_bucket() {
        let r = ExperimentReport::from_rows(vec![
            row("-", Level::White, 0.55, true, 4),
            row("-", Level::White, 0.58, false, 8),
            row("-", Level::White, 0.95, true, 1),
        ]);
        assert_eq!(r.buckets.len(), 2);
        let b = &r.buckets[0];
        assert_eq!((b.runs, b.successes), (2, 1));
        assert_eq!(b.mean_operations, 6.0);
        assert_eq!(b.success_rate, 0.5);
        assert!(r.paired_table().is_none());
    }

    #[test]
    fn paired_view_has_a_column_per_variant() {
        let r = ExperimentReport::from_rows(vec![
            row("full", Level::Black, 0.95, true, 100),
            row("pruned", Level::Black, 0.95, true, 300),
        ]);
        let t = r.paired_table().unwrap();
        assert!(t.contains("full") && t.contains("pruned"));
        assert!(t.contains("100.0") && t.contains("300.0"));
    }

    #[test]
    fn empty_dir_gives_empty_tables() {
        let dir = tempfile::tempdir().unwrap();
        let r = ExperimentReport::collect(dir.path()).unwrap();
        assert!(r.seeds.is_empty() && r.buckets.is_empty());
        r.write_csv(dir.path()).unwrap();
        assert!(fs::read_to_string(dir.path().join("buckets.csv")).unwrap().starts_with("variant,"));
    }
}
