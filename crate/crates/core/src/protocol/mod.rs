//! The game driver and its metrics.
//!
//! Each round the learner is scored on the incoming batch with its current
//! parameters, the batch enters the validation buffer, whatever the buffer
//! displaces is combined with replay data into a training set, and the
//! displaced events are finally offered to the replay memory.

mod eval;
mod game;
mod metrics;

pub use eval::{cross_user_eval, decomposition_diag, retention_curve, test_eval, CrossUserMetrics, EVAL_CHUNK};
pub use game::{run_game, EvalConfig, EvalEvery, Game, GameConfig, GameResult};
pub use metrics::{
    online_accuracy_curve, online_fit_curve, parse_step_csv, CsvStep, Decomposition, GroupMetrics, MetricsLog,
    PeriodicRecord, RetentionCurve, RunMeta, StepRecord, TestMetrics, STEP_CSV_HEADER,
};
