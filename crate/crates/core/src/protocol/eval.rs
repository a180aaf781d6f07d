use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{perplexity, BatchEval, Model};
use crate::protocol::metrics::{running_mean, Decomposition, GroupMetrics, RetentionCurve, TestMetrics};
use crate::streams::{Event, StreamSource, TestSet, UserId};

/// Events per forward pass during evaluation.
pub const EVAL_CHUNK: usize = 512;

/// Mean loss, accuracy and perplexity over a held-out set, overall and per user.
pub fn test_eval(model: &Model, test: &TestSet) -> Result<TestMetrics> {
    if test.is_empty() {
        return Err(Error::Config("test set is empty".into()));
    }
    let mut total = BatchEval::default();
    let mut per_user: BTreeMap<UserId, BatchEval> = BTreeMap::new();
    test.for_each_chunk(EVAL_CHUNK, |chunk| {
        // Evaluate in user-contiguous runs so per-user totals need no second pass.
        let mut start = 0;
        while start < chunk.len() {
            let user = chunk[start].user;
            let end = chunk[start..]
                .iter()
                .position(|e| e.user != user)
                .map_or(chunk.len(), |p| start + p);
            let eval = model.evaluate(&chunk[start..end])?;
            total.merge(eval);
            per_user.entry(user).or_default().merge(eval);
            start = end;
        }
        Ok(())
    })?;
    Ok(metrics_from(total, per_user))
}

fn metrics_from(total: BatchEval, per_user: BTreeMap<UserId, BatchEval>) -> TestMetrics {
    let per_user: BTreeMap<UserId, GroupMetrics> = per_user
        .into_iter()
        .map(|(u, e)| {
            (
                u,
                GroupMetrics {
                    count: e.count,
                    mean_loss: e.mean_loss(),
                    accuracy: e.accuracy(),
                },
            )
        })
        .collect();
    let mean_task_accuracy = per_user.values().map(|g| g.accuracy).sum::<f64>() / per_user.len().max(1) as f64;
    TestMetrics {
        count: total.count,
        mean_loss: total.mean_loss(),
        accuracy: total.accuracy(),
        perplexity: perplexity(total.mean_loss()),
        mean_task_accuracy,
        per_user,
    }
}

/// Own-user versus cross-user perplexity on the same held-out events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossUserMetrics {
    pub own_perplexity: f64,
    pub cross_perplexity: f64,
    pub users: usize,
}

/// Scores every held-out event under its own user and under the next user
/// (ascending id order, wrapping) of the test set.
pub fn cross_user_eval(model: &Model, test: &[Event]) -> Result<CrossUserMetrics> {
    if test.is_empty() {
        return Err(Error::Config("test set is empty".into()));
    }
    let users: Vec<UserId> = test
        .iter()
        .map(|e| e.user)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if users.len() < 2 {
        return Err(Error::Config("cross-user evaluation needs at least two users".into()));
    }
    let next: BTreeMap<UserId, UserId> = users
        .iter()
        .enumerate()
        .map(|(i, &u)| (u, users[(i + 1) % users.len()]))
        .collect();
    let shifted: Vec<Event> = test
        .iter()
        .map(|e| Event {
            user: next[&e.user],
            ..e.clone()
        })
        .collect();
    let own = model_mean_loss(model, test)?;
    let cross = model_mean_loss(model, &shifted)?;
    Ok(CrossUserMetrics {
        own_perplexity: perplexity(own),
        cross_perplexity: perplexity(cross),
        users: users.len(),
    })
}

fn model_mean_loss(model: &Model, events: &[Event]) -> Result<f64> {
    let mut total = BatchEval::default();
    for chunk in events.chunks(EVAL_CHUNK) {
        total.merge(model.evaluate(chunk)?);
    }
    Ok(total.mean_loss())
}

/// Re-streams the first `t` batches of `source` and scores `model` on the
/// newest `horizon + 1` of them (all of them when `horizon` is `None`).
pub fn retention_curve(model: &Model, source: &StreamSource, t: u64, horizon: Option<usize>) -> Result<RetentionCurve> {
    let keep = horizon.map_or(t as usize, |h| (h + 1).min(t as usize));
    let skip = t as usize - keep;
    let mut stream = source.open()?;
    let mut evals = VecDeque::with_capacity(keep);
    for i in 0..t as usize {
        let Some(batch) = stream.next_batch() else {
            return Err(Error::Config(format!(
                "stream replay ended after {i} batches, expected {t}"
            )));
        };
        if i >= skip {
            evals.push_front(model.evaluate(&batch)?);
        }
    }
    let batch_loss: Vec<f64> = evals.iter().map(|e| e.mean_loss()).collect();
    Ok(RetentionCurve {
        t,
        batch_accuracy: evals.iter().map(|e| e.accuracy()).collect(),
        running_mean: running_mean(batch_loss.iter().copied()),
        batch_loss,
    })
}

/// Splits the mean past-batch loss through the memory `memory`:
/// `history = core_set + training` and `next = training + gap`.
pub fn decomposition_diag(
    model: &Model,
    t: u64,
    history: &[Vec<Event>],
    memory: &[Event],
    next: &[Event],
) -> Result<Decomposition> {
    if history.is_empty() || memory.is_empty() || next.is_empty() {
        return Err(Error::Contract(
            "decomposition needs history, memory and a next batch".into(),
        ));
    }
    let mut history_loss = 0.0;
    for b in history {
        history_loss += model.loss(b)?;
    }
    history_loss /= history.len() as f64;
    let training_loss = model_mean_loss(model, memory)?;
    let next_loss = model.loss(next)?;
    Ok(Decomposition {
        t,
        history_loss,
        core_set_loss: history_loss - training_loss,
        training_loss,
        next_loss,
        generalization_gap: next_loss - training_loss,
        history_batches: history.len(),
        memory_size: memory.len(),
    })
}
