use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::protocol::parse_step_csv;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.4}"),
        None => "-".into(),
    }
}

/// Text summary of a run directory: final metrics, the chosen-k histogram
/// (recomputed from `metrics.csv`) and retention endpoints.
pub fn report(dir: &Path) -> Result<String> {
    let summary_path = dir.join("summary.json");
    let csv_path = dir.join("metrics.csv");
    let summary: Value = serde_json::from_str(&read(&summary_path)?).map_err(|source| Error::Json {
        path: summary_path.clone(),
        source,
    })?;
    let steps = parse_step_csv(&read(&csv_path)?).map_err(|e| match e {
        Error::Input(m) => Error::Input(format!("{}: {m}", csv_path.display())),
        other => other,
    })?;

    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for k in steps.iter().filter_map(|s| s.chosen_k) {
        *hist.entry(k).or_insert(0) += 1;
    }
    let updates: usize = hist.values().sum();

    let mut out = String::new();
    let s = |k: &str| summary[k].as_str().unwrap_or("?").to_string();
    let _ = writeln!(out, "run        {}", dir.display());
    let _ = writeln!(out, "status     {}", s("status"));
    if let Some(e) = summary["error"].as_str() {
        let _ = writeln!(out, "error      {e}");
    }
    let _ = writeln!(
        out,
        "setup      {} / {} / {} (mode {}), seed {}",
        s("stream"),
        s("optimizer"),
        s("learner"),
        s("model_mode"),
        summary["seed"]
    );
    let _ = writeln!(out, "steps      {} ({} updates)", steps.len(), updates);
    let online = &summary["online"];
    let _ = writeln!(
        out,
        "online     loss {}  perplexity {}  accuracy {}",
        num(&online["mean_loss"]),
        num(&online["perplexity"]),
        num(&online["accuracy"])
    );
    let test = &summary["final_test"];
    if test.is_object() {
        let _ = writeln!(
            out,
            "test       loss {}  perplexity {}  accuracy {}  mean task accuracy {}",
            num(&test["mean_loss"]),
            num(&test["perplexity"]),
            num(&test["accuracy"]),
            num(&test["mean_task_accuracy"])
        );
    }
    let cross = &summary["cross_user"];
    if cross.is_object() {
        let _ = writeln!(
            out,
            "cross-user own perplexity {}  cross perplexity {}",
            num(&cross["own_perplexity"]),
            num(&cross["cross_perplexity"])
        );
    }
    let _ = writeln!(out, "chosen k");
    for (k, n) in &hist {
        let _ = writeln!(out, "  k={k:<3} {n}");
    }
    if let Some(curve) = summary["retention"]["running_mean"].as_array() {
        if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
            let _ = writeln!(
                out,
                "retention  age 0: {}  age {}: {}",
                num(first),
                curve.len() - 1,
                num(last)
            );
        }
    }
    Ok(out)
}
