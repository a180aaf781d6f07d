use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streams::UserId;

/// Header of the per-step CSV.
pub const STEP_CSV_HEADER: &str = "t,online_loss,chosen_k,train_loss,replay_size,vbuf_size";

/// One round of the game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step index.
    pub t: u64,
    /// Mean loss on the step's batch under the parameters before any update
    /// that uses it.
    pub online_loss: f64,
    /// Correct argmax predictions on that batch.
    pub online_correct: usize,
    pub batch_size: usize,
    /// `None` when the step had nothing to train on.
    pub chosen_k: Option<usize>,
    /// Loss on the step's training set after the update.
    pub train_loss: Option<f64>,
    pub replay_size: usize,
    pub vbuf_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub count: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

/// Held-out evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub count: usize,
    /// Mean cross-entropy in nats over all test events.
    pub mean_loss: f64,
    pub accuracy: f64,
    pub perplexity: f64,
    /// Unweighted mean of the per-user (per-task) accuracies.
    pub mean_task_accuracy: f64,
    pub per_user: BTreeMap<UserId, GroupMetrics>,
}

/// Final-model losses on past batches, indexed by age (0 = most recent).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RetentionCurve {
    /// Step index of the newest batch evaluated.
    pub t: u64,
    pub batch_loss: Vec<f64>,
    pub batch_accuracy: Vec<f64>,
    /// `running_mean[s]` = mean of `batch_loss[0..=s]`.
    pub running_mean: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicRecord {
    pub t: u64,
    pub test: Option<TestMetrics>,
    pub retention: Option<RetentionCurve>,
}

/// Split of the history loss through the learner's memory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub t: u64,
    /// Mean over past batches of the batch loss.
    pub history_loss: f64,
    /// `history_loss - training_loss`.
    pub core_set_loss: f64,
    /// Loss on the memory (replay residents plus the latest batch).
    pub training_loss: f64,
    pub next_loss: f64,
    /// `next_loss - training_loss`.
    pub generalization_gap: f64,
    pub history_batches: usize,
    pub memory_size: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub config_hash: String,
    pub started_at: String,
    pub wall_clock_secs: f64,
}

/// Everything a run records. Records are append-only and ordered by `t`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub steps: Vec<StepRecord>,
    pub periodic: Vec<PeriodicRecord>,
    pub diagnostics: Vec<Decomposition>,
    pub meta: RunMeta,
}

impl MetricsLog {
    pub fn push_step(&mut self, record: StepRecord) -> Result<()> {
        if let Some(last) = self.steps.last() {
            if record.t <= last.t {
                return Err(Error::Contract(format!(
                    "step {} logged after step {}",
                    record.t, last.t
                )));
            }
        }
        self.steps.push(record);
        Ok(())
    }

    /// Steps that performed an update.
    pub fn update_count(&self) -> usize {
        self.steps.iter().filter(|s| s.chosen_k.is_some()).count()
    }

    pub fn chosen_k_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for k in self.steps.iter().filter_map(|s| s.chosen_k) {
            *h.entry(k).or_insert(0) += 1;
        }
        h
    }

    /// The per-step CSV. Skipped updates leave `chosen_k` and `train_loss`
    /// empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.steps.len() + 1));
        out.push_str(STEP_CSV_HEADER);
        out.push('\n');
        for s in &self.steps {
            let k = s.chosen_k.map(|k| k.to_string()).unwrap_or_default();
            let tl = s.train_loss.map(|l| l.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.t, s.online_loss, k, tl, s.replay_size, s.vbuf_size
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// A row of the per-step CSV as read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvStep {
    pub t: u64,
    pub online_loss: f64,
    pub chosen_k: Option<usize>,
    pub train_loss: Option<f64>,
    pub replay_size: usize,
    pub vbuf_size: usize,
}

pub fn parse_step_csv(text: &str) -> Result<Vec<CsvStep>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == STEP_CSV_HEADER => {}
        other => {
            return Err(Error::Input(format!(
                "expected header `{STEP_CSV_HEADER}`, found `{}`",
                other.unwrap_or("")
            )))
        }
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Input(format!("line {}: bad {what} in `{line}`", n + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad("field count"));
        }
        out.push(CsvStep {
            t: f[0].parse().map_err(|_| bad("t"))?,
            online_loss: f[1].parse().map_err(|_| bad("online_loss"))?,
            chosen_k: nonempty(f[2])
                .map(str::parse)
                .transpose()
                .map_err(|_| bad("chosen_k"))?,
            train_loss: nonempty(f[3])
                .map(str::parse)
                .transpose()
                .map_err(|_| bad("train_loss"))?,
            replay_size: f[4].parse().map_err(|_| bad("replay_size"))?,
            vbuf_size: f[5].parse().map_err(|_| bad("vbuf_size"))?,
        });
    }
    Ok(out)
}

fn nonempty(s: &str) -> Option<&str> {
    if s.is_empty() {
        None
    } else {
        Some(s)
    }
}

/// Running mean of the recorded online losses: entry `i` averages steps
/// `0..=i`.
pub fn online_fit_curve(log: &MetricsLog) -> Vec<f64> {
    running_mean(log.steps.iter().map(|s| s.online_loss))
}

/// Running online accuracy, weighted by batch size.
pub fn online_accuracy_curve(log: &MetricsLog) -> Vec<f64> {
    let mut correct = 0usize;
    let mut seen = 0usize;
    log.steps
        .iter()
        .map(|s| {
            correct += s.online_correct;
            seen += s.batch_size;
            correct as f64 / seen.max(1) as f64
        })
        .collect()
}

pub(crate) fn running_mean(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut sum = 0.0;
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            sum += v;
            sum / (i + 1) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(t: u64, loss: f64, k: Option<usize>) -> StepRecord {
        StepRecord {
            t,
            online_loss: loss,
            online_correct: 1,
            batch_size: 2,
            chosen_k: k,
            train_loss: k.map(|_| loss / 2.0),
            replay_size: t as usize,
            vbuf_size: 3,
        }
    }

    #[test]
    fn running_mean_of_losses() {
        let mut log = MetricsLog::default();
        for (t, l) in [(1, 1.0), (2, 2.0), (3, 3.0)] {
            log.push_step(step(t, l, Some(1))).unwrap();
        }
        assert_eq!(online_fit_curve(&log), vec![1.0, 1.5, 2.0]);
        assert_eq!(online_accuracy_curve(&log), vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn steps_must_increase() {
        let mut log = MetricsLog::default();
        log.push_step(step(2, 1.0, None)).unwrap();
        assert!(log.push_step(step(2, 1.0, None)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut log = MetricsLog::default();
        log.push_step(step(1, 1.2345678901234567, None)).unwrap();
        log.push_step(step(2, 0.1, Some(3))).unwrap();
        let csv = log.to_csv();
        assert!(csv.starts_with("t,online_loss,chosen_k,train_loss,replay_size,vbuf_size\n"));
        assert!(csv.contains("\n1,1.2345678901234567,,,1,3\n"));
        let rows = parse_step_csv(&csv).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].chosen_k, None);
        assert_eq!(rows[1].chosen_k, Some(3));
        assert_eq!(rows[1].train_loss, Some(0.05));
        assert_eq!(rows[0].online_loss, 1.2345678901234567);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let err = parse_step_csv("t,online_loss,chosen_k,train_loss,replay_size,vbuf_size\n1,x,,,0,0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_step_csv("a,b\n").is_err());
    }

    #[test]
    fn histogram_counts_updates() {
        let mut log = MetricsLog::default();
        for (t, k) in [(1, None), (2, Some(0)), (3, Some(2)), (4, Some(2))] {
            log.push_step(step(t, 1.0, k)).unwrap();
        }
        let h = log.chosen_k_histogram();
        assert_eq!(h.values().sum::<usize>(), log.update_count());
        assert_eq!(h[&2], 2);
    }
}
