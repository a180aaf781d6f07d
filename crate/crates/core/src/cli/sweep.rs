use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::config::{sweep_spec, RunConfig, Settings};
use crate::error::{Error, Result};

struct Row {
    value: String,
    optimizer: String,
    seed: u64,
    metric: Option<f64>,
    status: String,
    dir: Option<PathBuf>,
}

fn final_metric(dir: &Path) -> Result<(String, f64)> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    let name = v["final_metric"]["name"].as_str().unwrap_or("online_loss").to_string();
    let value = v["final_metric"]["value"]
        .as_f64()
        .or_else(|| v["online"]["mean_loss"].as_f64())
        .unwrap_or(f64::NAN);
    Ok((name, value))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Runs every (value, optimizer, seed) cell of the configured sweep.
///
/// Writes `runs.csv` (one row per run; failed runs are marked and skipped)
/// and `table.csv` (one row per axis value, mean and sample standard
/// deviation per optimizer) into a new sweep directory, which is returned.
pub fn sweep(settings: &Settings) -> Result<PathBuf> {
    let spec = sweep_spec(settings)?;
    let base = RunConfig::from_settings(settings)?;
    let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
    let dir = base
        .output
        .root
        .join(format!("{}-sweep-{}-{stamp}", base.output.name, spec.axis));
    let runs_root = dir.join("runs");
    std::fs::create_dir_all(&runs_root).map_err(|e| Error::io(&runs_root, e))?;

    // Check every cell's configuration before spending time on any run.
    let mut cells = Vec::new();
    for value in &spec.values {
        for opt in &spec.optimizers {
            for &seed in &spec.seeds {
                let mut s = settings.clone();
                s.set_value(spec.axis.key(), value)?;
                s.set_value("optim.optimizer", &opt.to_string())?;
                s.set_value("seed", &seed.to_string())?;
                s.set_value("output.dir", &runs_root.to_string_lossy())?;
                s.set_value("output.name", &format!("{}-{value}-{opt}-s{seed}", spec.axis))?;
                RunConfig::from_settings(&s)?;
                cells.push((value.clone(), opt.to_string(), seed, s));
            }
        }
    }

    let mut rows = Vec::new();
    let mut metric_name = String::from("metric");
    for (value, optimizer, seed, s) in cells {
        let row = match super::run(&s).and_then(|d| final_metric(&d).map(|m| (d, m))) {
            Ok((d, (name, m))) => {
                metric_name = name;
                Row {
                    value,
                    optimizer,
                    seed,
                    metric: Some(m),
                    status: "ok".into(),
                    dir: Some(d),
                }
            }
            Err(e) => Row {
                value,
                optimizer,
                seed,
                metric: None,
                status: format!("failed: {}", e.to_string().replace([',', '\n'], ";")),
                dir: None,
            },
        };
        rows.push(row);
    }

    let mut runs = format!("{},optimizer,seed,status,{metric_name},run_dir\n", spec.axis);
    for r in &rows {
        let _ = writeln!(
            runs,
            "{},{},{},{},{},{}",
            r.value,
            r.optimizer,
            r.seed,
            r.status,
            r.metric.map(|m| m.to_string()).unwrap_or_default(),
            r.dir.as_ref().map(|d| d.display().to_string()).unwrap_or_default()
        );
    }
    std::fs::write(dir.join("runs.csv"), runs).map_err(|e| Error::io(dir.join("runs.csv"), e))?;

    let optimizers: Vec<String> = spec.optimizers.iter().map(|o| o.to_string()).collect();
    let mut table = spec.axis.to_string();
    for o in &optimizers {
        let _ = write!(table, ",{o}_mean,{o}_std,{o}_n");
    }
    table.push('\n');
    for value in &spec.values {
        table.push_str(value);
        for o in &optimizers {
            let ms: Vec<f64> = rows
                .iter()
                .filter(|r| &r.value == value && &r.optimizer == o)
                .filter_map(|r| r.metric)
                .collect();
            if ms.is_empty() {
                table.push_str(",,,0");
            } else {
                let (m, sd) = mean_std(&ms);
                let _ = write!(table, ",{m},{sd},{}", ms.len());
            }
        }
        table.push('\n');
    }
    std::fs::write(dir.join("table.csv"), table).map_err(|e| Error::io(dir.join("table.csv"), e))?;
    let failed: BTreeMap<&str, usize> = rows
        .iter()
        .filter(|r| r.metric.is_none())
        .fold(BTreeMap::new(), |mut m, r| {
            *m.entry(r.optimizer.as_str()).or_insert(0) += 1;
            m
        });
    if !failed.is_empty() {
        eprintln!("sweep: {} run(s) failed, see runs.csv", failed.values().sum::<usize>());
    }
    Ok(dir)
}
