use std::fmt::Write as _;

use super::ablation::{AblationRow, RunRecord};
use super::metrics::Metrics;
use super::weights::WeightDump;

pub const METRICS_CSV_HEADER: &str = "method,seed,rank1,rank5,rank20,map";
pub const WEIGHTS_CSV_HEADER: &str = "frame,s,w,quality";

/// Aligned table of seed-averaged rows.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<10} {:>7} {:>7} {:>7} {:>7} {:>5} {:>6}",
        "method", "rank1", "rank5", "rank20", "mAP", "runs", "failed"
    )
    .unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<10} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>5} {:>6}",
            r.method.name(),
            r.rank1,
            r.rank5,
            r.rank20,
            r.map,
            r.runs,
            r.failed
        )
        .unwrap();
    }
    out
}

pub fn metrics_table(label: &str, m: &Metrics) -> String {
    format!(
        "{:<10} {:>7} {:>7} {:>7} {:>7}\n{:<10} {:>7.4} {:>7.4} {:>7.4} {:>7.4}\n",
        "method", "rank1", "rank5", "rank20", "mAP", label, m.rank1, m.rank5, m.rank20, m.map
    )
}

fn metrics_line(method: &str, seed: u64, m: &Metrics) -> String {
    format!("{method},{seed},{},{},{},{}\n", m.rank1, m.rank5, m.rank20, m.map)
}

/// Per-seed rows; failed runs are written with `nan` metrics.
pub fn runs_csv(runs: &[RunRecord]) -> String {
    let mut out = format!("{METRICS_CSV_HEADER}\n");
    for r in runs {
        match &r.outcome {
            Ok(m) => out.push_str(&metrics_line(r.method.name(), r.seed, m)),
            Err(_) => writeln!(out, "{},{},nan,nan,nan,nan", r.method.name(), r.seed).unwrap(),
        }
    }
    out
}

pub fn metrics_csv(method: &str, seed: u64, m: &Metrics) -> String {
    format!("{METRICS_CSV_HEADER}\n{}", metrics_line(method, seed, m))
}

/// `frame,s,w,quality` rows; `s` is empty for methods without scores.
pub fn weights_csv(dump: &WeightDump) -> String {
    let mut out = format!("{WEIGHTS_CSV_HEADER}\n");
    for r in &dump.rows {
        let s = r.s.map(|s| s.to_string()).unwrap_or_default();
        writeln!(out, "{},{s},{},{}", r.frame, r.w, r.quality).unwrap();
    }
    out
}
