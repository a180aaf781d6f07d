use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// User identifier. Benchmark streams reuse it as the task id.
pub type UserId = u32;

/// One observation of the stream: a context `x` revealed by a user at step `t`,
/// and its label `y` (a class or the next token).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Unique within a stream; used for buffer dumps and disjointness checks.
    pub id: u64,
    pub t: u64,
    pub user: UserId,
    pub x: Arc<[f64]>,
    pub y: u32,
}

impl Event {
    pub fn new(id: u64, t: u64, user: UserId, x: Vec<f64>, y: u32) -> Self {
        Event {
            id,
            t,
            user,
            x: x.into(),
            y,
        }
    }
}
