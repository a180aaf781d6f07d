//! The `run`, `sweep` and `report` subcommands.
//!
//! A run directory holds:
//!
//! * `config.cfg`: every setting, defaults included; re-running it reproduces the run;
//! * `metrics.csv`: one row per step;
//! * `summary.json`: final metrics, retention curve, config echo and seed;
//! * optionally `buffers.json` (final buffer contents) and `stream.jsonl`.

mod report;
mod sweep;

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::buffers::dump_state;
use crate::config::{RunConfig, Settings, StreamSpec};
use crate::error::{Error, Result};
use crate::models::{perplexity, Model};
use crate::protocol::{cross_user_eval, online_accuracy_curve, online_fit_curve, Game, GameResult, MetricsLog};
use crate::rng;
use crate::streams::{holdout_split, read_jsonl, write_jsonl, Event, StreamSource, TestSet};

pub use report::report;
pub use sweep::sweep;

/// Process exit status for a result: 0 success, 2 configuration error,
/// 1 any other failure.
pub fn exit_code<T>(result: &Result<T>) -> i32 {
    match result {
        Ok(_) => 0,
        Err(e) if e.is_config() => 2,
        Err(_) => 1,
    }
}

/// A stream ready to play, with its held-out evaluation set.
pub struct Prepared {
    pub source: StreamSource,
    pub test: Option<TestSet>,
    /// Materialized held-out events (absent for benchmark test splits).
    pub test_events: Option<Vec<Event>>,
    pub model: Model,
}

/// Builds the stream, test set and initial model of a run.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let full = match &cfg.stream {
        StreamSpec::Synthetic(s) => StreamSource::synthetic(s.clone(), cfg.seed)?,
        StreamSpec::Benchmark(b) => StreamSource::load_benchmark(b, cfg.seed)?,
        StreamSpec::Jsonl { path, num_classes } => StreamSource::recorded(read_jsonl(path)?, *num_classes)?,
    };
    let (source, test, test_events) = match full.task_plan() {
        Some(plan) => {
            let test = TestSet::Benchmark(plan.clone());
            (full, Some(test), None)
        }
        None if cfg.test_k == 0 => (full, None, None),
        None => {
            let mut r = rng::seeded(cfg.seed, rng::streams::HOLDOUT);
            let (train, events) = holdout_split(&full, cfg.test_k, &mut r)?;
            (train, Some(TestSet::Events(events.clone())), Some(events))
        }
    };
    let model_cfg = cfg.model.build(source.input_dim(), source.num_classes());
    let model = Model::new(model_cfg, &mut rng::seeded(cfg.seed, rng::streams::MODEL_INIT))?;
    Ok(Prepared {
        source,
        test,
        test_events,
        model,
    })
}

/// Creates `<root>/<name>-<utc timestamp>-<hash prefix>`, adding a numeric
/// suffix if that already exists.
fn create_run_dir(root: &Path, name: &str, hash: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
    let base = format!("{name}-{stamp}-{}", &hash[..8]);
    for i in 0.. {
        let dir = if i == 0 {
            root.join(&base)
        } else {
            root.join(format!("{base}-{i}"))
        };
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!()
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn config_echo(settings: &Settings) -> Value {
    let map: serde_json::Map<String, Value> = crate::config::KEYS
        .iter()
        .map(|(k, ..)| (k.to_string(), Value::String(settings.get(k).to_string())))
        .collect();
    Value::Object(map)
}

/// The run-summary document.
fn summary(
    settings: &Settings,
    cfg: &RunConfig,
    log: &MetricsLog,
    result: Option<&GameResult>,
    cross_user: Option<Value>,
    error: Option<&Error>,
) -> Value {
    let online_loss = online_fit_curve(log).last().copied();
    let online_acc = online_accuracy_curve(log).last().copied();
    let final_test = result.and_then(|r| r.final_test.as_ref());
    let final_metric = final_test.map(|t| match cfg.stream {
        StreamSpec::Benchmark(_) => json!({ "name": "mean_task_accuracy", "value": t.mean_task_accuracy }),
        _ => json!({ "name": "perplexity", "value": t.perplexity }),
    });
    json!({
        "status": if error.is_some() { "aborted" } else { "completed" },
        "error": error.map(|e| e.to_string()),
        "seed": cfg.seed,
        "config_hash": log.meta.config_hash,
        "started_at": log.meta.started_at,
        "wall_clock_secs": log.meta.wall_clock_secs,
        "stream": cfg.stream.kind(),
        "optimizer": cfg.game.optimizer.to_string(),
        "learner": cfg.game.learner.to_string(),
        "model_mode": cfg.model.mode.to_string(),
        "steps": log.steps.len(),
        "updates": log.update_count(),
        "chosen_k_histogram": log.chosen_k_histogram(),
        "online": {
            "mean_loss": online_loss,
            "perplexity": online_loss.map(perplexity),
            "accuracy": online_acc,
        },
        "final_metric": final_metric,
        "final_test": final_test,
        "retention": result.and_then(|r| r.retention.as_ref()),
        "cross_user": cross_user,
        "periodic": log.periodic,
        "diagnostics": log.diagnostics,
        "config": config_echo(settings),
    })
}

/// Executes one run and writes its directory. Returns the directory.
///
/// A failure after the directory exists still leaves `config.cfg`, the
/// partial `metrics.csv`, `summary.json` marked aborted, and
/// `checkpoint.json` with the last good model and optimizer state.
pub fn run(settings: &Settings) -> Result<PathBuf> {
    let cfg = RunConfig::from_settings(settings)?;
    let prepared = prepare(&cfg)?;
    let hash = settings.hash();
    let dir = create_run_dir(&cfg.output.root, &cfg.output.name, &hash)?;
    std::fs::write(dir.join("config.cfg"), settings.render()).map_err(|e| Error::io(dir.join("config.cfg"), e))?;
    if cfg.output.export_stream {
        let events: Vec<Event> = prepared.source.collect_batches()?.into_iter().flatten().collect();
        write_jsonl(&dir.join("stream.jsonl"), &events)?;
    }

    let started_at = chrono::Utc::now().to_rfc3339();
    let mut game = Game::new(prepared.source, prepared.model, cfg.game.clone(), prepared.test)?;
    let played = game.run();
    if let Err(e) = played {
        let mut log = game.log().clone();
        log.meta.config_hash = hash;
        log.meta.started_at = started_at;
        log.write_csv(&dir.join("metrics.csv"))?;
        let checkpoint = json!({ "model": game.model(), "optimizer": game.state(), "step": game.steps_done() });
        write_json(&dir.join("checkpoint.json"), &checkpoint)?;
        write_json(
            &dir.join("summary.json"),
            &summary(settings, &cfg, &log, None, None, Some(&e)),
        )?;
        return Err(e);
    }
    if cfg.output.dump_buffers {
        dump_state(&dir.join("buffers.json"), game.replay(), game.vbuf())?;
    }
    let mut result = game.finish()?;
    result.log.meta.config_hash = hash;
    result.log.meta.started_at = started_at;

    let cross_user = match (&prepared.test_events, cfg.cross_user) {
        (Some(events), true) => {
            Some(serde_json::to_value(cross_user_eval(&result.model, events)?).expect("metrics serialize"))
        }
        _ => None,
    };
    result.log.write_csv(&dir.join("metrics.csv"))?;
    let doc = summary(settings, &cfg, &result.log, Some(&result), cross_user, None);
    write_json(&dir.join("summary.json"), &doc)?;
    Ok(dir)
}

/// Reads a configuration file and applies `overrides` (`key=value`).
pub fn load_settings(path: &Path, overrides: &[String]) -> Result<Settings> {
    if !path.is_file() {
        return Err(Error::Config(format!("config file {} does not exist", path.display())));
    }
    let mut s = Settings::load(path)?;
    for o in overrides {
        s.set(o)?;
    }
    Ok(s)
}
