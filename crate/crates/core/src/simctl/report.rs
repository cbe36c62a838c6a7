//! Artifact export.
//!
//! A run directory holds:
//! `transactions.jsonl`, `trades.jsonl`, `listings.jsonl`, `events.jsonl`,
//! `metrics.csv`, `summary.csv`, `summary.json`, `world_snapshots.jsonl`,
//! `private_bids.jsonl`, `privacy_report.json`, `invariants.json` and the
//! resolved `config.json`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::privacy::{verify_privacy, PrivacyReport};
use super::run::{PrivateBid, RunArtifacts, Summary, WorldSnapshot};
use crate::metrics::{csv_header, csv_row};

pub const SUMMARY_COLUMNS: [&str; 8] = ["mechanism", "trades", "avg_usd_per_mhz", "surplus", "shapley", "efficiency", "gini", "hhi"];

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> std::io::Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut items = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line)?);
    }
    Ok(items)
}

pub fn summary_row(s: &Summary) -> Vec<String> {
    vec![
        s.mechanism.code().to_string(),
        s.trades.to_string(),
        format!("{:.4}", s.avg_usd_per_mhz),
        format!("{:.2}", s.surplus),
        format!("{:.2}", s.shapley),
        format!("{:.4}", s.efficiency),
        format!("{:.4}", s.gini),
        format!("{:.4}", s.hhi),
    ]
}

/// Writes one summary row per entry under the fixed column set.
pub fn write_summary_csv(path: &Path, summaries: &[Summary]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    for s in summaries {
        w.write_record(summary_row(s))?;
    }
    w.flush()
}

pub fn emit_reports(artifacts: &RunArtifacts, out_dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    let mut file = |name: &str| {
        let p = out_dir.join(name);
        paths.push(p.clone());
        p
    };

    write_jsonl(&file("transactions.jsonl"), &artifacts.transactions)?;
    write_jsonl(&file("trades.jsonl"), &artifacts.trades)?;
    write_jsonl(&file("listings.jsonl"), &artifacts.listings)?;
    write_jsonl(&file("events.jsonl"), &artifacts.events)?;
    write_jsonl(&file("world_snapshots.jsonl"), &artifacts.world_snapshots)?;
    write_jsonl(&file("private_bids.jsonl"), &artifacts.private_bids)?;

    let mut w = csv::Writer::from_path(file("metrics.csv"))?;
    w.write_record(csv_header(&artifacts.config.agent_ids()))?;
    for m in &artifacts.metrics {
        w.write_record(csv_row(m))?;
    }
    w.flush()?;

    write_summary_csv(&file("summary.csv"), std::slice::from_ref(&artifacts.summary))?;
    write_json(&file("summary.json"), &artifacts.summary)?;
    write_json(&file("privacy_report.json"), &verify_privacy(&artifacts.world_snapshots, &artifacts.private_bids))?;
    write_json(&file("invariants.json"), &artifacts.invariant_violations)?;
    write_json(&file("config.json"), &artifacts.config)?;
    Ok(paths)
}

/// Re-runs the privacy scan over the snapshots stored in a run directory.
pub fn verify_run_dir(dir: &Path) -> std::io::Result<PrivacyReport> {
    let snapshots: Vec<WorldSnapshot> = read_jsonl(&dir.join("world_snapshots.jsonl"))?;
    let bids: Vec<PrivateBid> = read_jsonl(&dir.join("private_bids.jsonl"))?;
    let report = verify_privacy(&snapshots, &bids);
    write_json(&dir.join("privacy_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub stddev: f64,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> Stat {
    if xs.is_empty() {
        return Stat { mean: 0.0, stddev: 0.0 };
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let stddev = if xs.len() < 2 { 0.0 } else { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
    Stat { mean, stddev }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub runs: Vec<Summary>,
    pub trades: Stat,
    pub avg_usd_per_mhz: Stat,
    pub surplus: Stat,
    pub efficiency: Stat,
    pub gini: Stat,
    pub hhi: Stat,
    pub buyer_profit: Stat,
}

pub fn batch_summary(runs: &[Summary]) -> BatchSummary {
    let col = |f: fn(&Summary) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
    BatchSummary {
        runs: runs.to_vec(),
        trades: col(|s| s.trades as f64),
        avg_usd_per_mhz: col(|s| s.avg_usd_per_mhz),
        surplus: col(|s| s.surplus),
        efficiency: col(|s| s.efficiency),
        gini: col(|s| s.gini),
        hhi: col(|s| s.hhi),
        buyer_profit: col(|s| s.buyer_profit),
    }
}

/// Writes `batch_summary.csv` (one row per seed, then mean and stddev rows)
/// and `batch_summary.json`.
pub fn write_batch(out_dir: &Path, runs: &[Summary]) -> std::io::Result<BatchSummary> {
    fs::create_dir_all(out_dir)?;
    let batch = batch_summary(runs);
    let mut w = csv::Writer::from_path(out_dir.join("batch_summary.csv"))?;
    let mut header = vec!["seed"];
    header.extend(SUMMARY_COLUMNS);
    w.write_record(&header)?;
    for s in runs {
        let mut row = vec![s.seed.to_string()];
        row.extend(summary_row(s));
        w.write_record(row)?;
    }
    let code = runs.first().map_or("", |s| s.mechanism.code());
    let stats = [&batch.trades, &batch.avg_usd_per_mhz, &batch.surplus, &batch.efficiency, &batch.gini, &batch.hhi];
    let shapley = mean_std(&runs.iter().map(|s| s.shapley).collect::<Vec<_>>());
    for (label, pick) in [("mean", (|s: &Stat| s.mean) as fn(&Stat) -> f64), ("stddev", |s: &Stat| s.stddev)] {
        let [t, a, su, e, g, h] = stats.map(pick);
        w.write_record([
            label.to_string(),
            code.to_string(),
            format!("{t:.2}"),
            format!("{a:.4}"),
            format!("{su:.2}"),
            format!("{:.2}", pick(&shapley)),
            format!("{e:.4}"),
            format!("{g:.4}"),
            format!("{h:.4}"),
        ])?;
    }
    w.flush()?;
    write_json(&out_dir.join("batch_summary.json"), &batch)?;
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simctl::config::{scenario1, Role};
    use crate::simctl::run::run;

    #[test]
    fn summary_has_seven_metric_columns() {
        assert_eq!(SUMMARY_COLUMNS.len() - 1, 7);
    }

    #[test]
    fn empty_run_writes_headers_only() {
        let mut cfg = scenario1();
        cfg.agents.retain(|a| a.role == Role::Seller);
        cfg.num_ticks = 2;
        let out = run(&cfg, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_reports(&out, dir.path()).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("trades.jsonl")).unwrap(), "");
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(summary.starts_with("mechanism,trades,avg_usd_per_mhz,surplus,shapley,efficiency,gini,hhi\n"));
        let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(metrics.starts_with("tick,hhi,gini,cumulative_surplus,efficiency,residual_gap,seller-0_balance,seller-0_capacity_mhz\n"));
        assert!(verify_run_dir(dir.path()).unwrap().is_clean());
    }

    #[test]
    fn mean_std_sample() {
        let s = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(s.mean, 5.0);
        assert!((s.stddev - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }
}
