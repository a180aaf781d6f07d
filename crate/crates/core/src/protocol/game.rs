use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::buffers::{ReplayBuffer, ReplayStrategy, ValidationBuffer, ValidationStrategy};
use crate::error::{Error, Result};
use crate::learners::{agem_reference, compose_training_set, AgemObjective, LearnerKind};
use crate::models::Model;
use crate::optim::{congrad_update, online_gd_update, AdamState, BatchObjective, OptimConfig, Optimizer};
use crate::protocol::eval::{decomposition_diag, retention_curve, test_eval};
use crate::protocol::metrics::{MetricsLog, PeriodicRecord, RetentionCurve, StepRecord, TestMetrics};
use crate::rng;
use crate::streams::{Event, EventStream, StreamSource, TestSet};

/// How often periodic evaluations run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalEvery {
    /// A twentieth of the expected stream length.
    #[default]
    Auto,
    Never,
    Steps(u64),
}

impl EvalEvery {
    fn period(self, expected_steps: usize) -> Option<u64> {
        match self {
            EvalEvery::Auto => Some((expected_steps as u64 / 20).max(1)),
            EvalEvery::Never => None,
            EvalEvery::Steps(0) => None,
            EvalEvery::Steps(n) => Some(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub every: EvalEvery,
    /// Oldest age in retention curves; `None` covers the whole history.
    pub horizon: Option<usize>,
    /// Whether periodic evaluations also compute a retention curve.
    pub periodic_retention: bool,
    /// Decomposition diagnostics every this many steps.
    pub diag_every: Option<u64>,
    /// Past batches used by the diagnostics (most recent first); `None`
    /// uses the whole history.
    pub diag_history: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            every: EvalEvery::Auto,
            horizon: None,
            periodic_retention: true,
            diag_every: None,
            diag_history: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub learner: LearnerKind,
    pub optimizer: Optimizer,
    pub optim: OptimConfig,
    pub replay_capacity: usize,
    pub replay_strategy: ReplayStrategy,
    /// Ignored by the fixed-step optimizer, which trains on every batch as
    /// soon as it arrives.
    pub vbuf_capacity: usize,
    pub vbuf_strategy: ValidationStrategy,
    pub seed: u64,
    pub eval: EvalConfig,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            learner: LearnerKind::OnlineOnly,
            optimizer: Optimizer::OnlineGd,
            optim: OptimConfig::default(),
            replay_capacity: 300,
            replay_strategy: ReplayStrategy::Reservoir,
            vbuf_capacity: 50,
            vbuf_strategy: ValidationStrategy::Fifo,
            seed: 0,
            eval: EvalConfig::default(),
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        self.learner.validate()?;
        self.optim.validate()
    }

    /// Validation capacity actually used.
    pub fn effective_vbuf_capacity(&self) -> usize {
        match self.optimizer {
            Optimizer::OnlineGd => 0,
            Optimizer::Congrad => self.vbuf_capacity,
        }
    }
}

/// Final state of a completed game.
#[derive(Clone, Debug)]
pub struct GameResult {
    pub model: Model,
    pub state: AdamState,
    pub log: MetricsLog,
    pub final_test: Option<TestMetrics>,
    pub retention: Option<RetentionCurve>,
}

/// The learner-versus-stream game, one batch per [`Game::step`].
///
/// After a failed step the model and optimizer state are those of the last
/// successful step, so a caller can checkpoint them.
pub struct Game {
    cfg: GameConfig,
    source: StreamSource,
    stream: Box<dyn EventStream + Send>,
    model: Model,
    state: AdamState,
    replay: ReplayBuffer,
    vbuf: ValidationBuffer,
    rng: rng::Rng,
    test: Option<TestSet>,
    log: MetricsLog,
    step: u64,
    period: Option<u64>,
    prev_batch: Vec<Event>,
    started: Instant,
}

impl Game {
    pub fn new(source: StreamSource, model: Model, cfg: GameConfig, test: Option<TestSet>) -> Result<Self> {
        let state = AdamState::new(model.shared_len());
        Self::resume(source, model, state, cfg, test)
    }

    /// Starts from an existing model and optimizer state.
    pub fn resume(
        source: StreamSource,
        model: Model,
        state: AdamState,
        cfg: GameConfig,
        test: Option<TestSet>,
    ) -> Result<Self> {
        cfg.validate()?;
        if model.input_dim() != source.input_dim() {
            return Err(Error::Config(format!(
                "model takes {} inputs but the stream provides {}",
                model.input_dim(),
                source.input_dim()
            )));
        }
        if model.num_classes() < source.num_classes() {
            return Err(Error::Config(format!(
                "model predicts {} classes but the stream has {}",
                model.num_classes(),
                source.num_classes()
            )));
        }
        let stream = source.open()?;
        let period = cfg.eval.every.period(source.step_hint());
        let replay = ReplayBuffer::new(cfg.replay_capacity, cfg.replay_strategy);
        let vbuf = ValidationBuffer::new(cfg.effective_vbuf_capacity(), cfg.vbuf_strategy, cfg.seed);
        let log = MetricsLog {
            meta: crate::protocol::metrics::RunMeta {
                seed: cfg.seed,
                ..Default::default()
            },
            ..Default::default()
        };
        Ok(Game {
            rng: rng::seeded(cfg.seed, rng::streams::LEARNER),
            cfg,
            source,
            stream,
            model,
            state,
            replay,
            vbuf,
            test,
            log,
            step: 0,
            period,
            prev_batch: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn state(&self) -> &AdamState {
        &self.state
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn vbuf(&self) -> &ValidationBuffer {
        &self.vbuf
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    /// Plays one round. Returns `false` once the stream is exhausted.
    pub fn step(&mut self) -> Result<bool> {
        let Some(batch) = self.stream.next_batch() else {
            return Ok(false);
        };
        if batch.is_empty() {
            return Ok(true);
        }
        let t = self.step + 1;
        self.model.register_users(&batch, t);

        // Loss on the fresh batch before anything trains on it.
        let online = self.model.evaluate(&batch)?;

        if self.cfg.eval.diag_every.is_some_and(|d| d > 0 && t.is_multiple_of(d)) && t > 1 {
            self.diagnose(t, &batch)?;
        }

        self.vbuf.push(&batch);
        let popped = self.vbuf.pop();

        let (chosen_k, train_loss) = if popped.is_empty() {
            (None, None)
        } else {
            self.update(&popped)?
        };
        self.replay.update(&popped, &mut self.rng);

        self.step = t;
        self.log.push_step(StepRecord {
            t,
            online_loss: online.mean_loss(),
            online_correct: online.correct,
            batch_size: online.count,
            chosen_k,
            train_loss,
            replay_size: self.replay.len(),
            vbuf_size: self.vbuf.len(),
        })?;
        self.prev_batch = batch;

        if self.period.is_some_and(|p| t.is_multiple_of(p)) {
            self.periodic(t)?;
        }
        Ok(true)
    }

    fn update(&mut self, popped: &[Event]) -> Result<(Option<usize>, Option<f64>)> {
        let train = compose_training_set(&self.cfg.learner, popped, &self.replay, &mut self.rng);
        if train.is_empty() {
            return Ok((None, None));
        }
        let reference = match self.cfg.learner {
            LearnerKind::Agem => agem_reference(popped, &self.replay, &mut self.rng),
            _ => Vec::new(),
        };
        let validation = match self.cfg.optimizer {
            Optimizer::OnlineGd => Vec::new(),
            Optimizer::Congrad => self.vbuf.peek(),
        };
        let snapshot = (self.model.clone(), self.state.clone());
        let result = match self.cfg.learner {
            LearnerKind::Agem => {
                let mut obj = AgemObjective {
                    popped: &train,
                    reference: &reference,
                };
                self.run_update(&mut obj, &validation)
            }
            _ => self.run_update(&mut BatchObjective(&train), &validation),
        };
        let outcome = match result {
            Ok(o) => o,
            Err(e) => {
                (self.model, self.state) = snapshot;
                return Err(e);
            }
        };
        let train_loss = self.model.loss(&train)?;
        Ok((Some(outcome.chosen_k), Some(train_loss)))
    }

    fn run_update<O: crate::optim::Objective>(
        &mut self,
        obj: &mut O,
        validation: &[Event],
    ) -> Result<crate::optim::UpdateOutcome> {
        match self.cfg.optimizer {
            Optimizer::OnlineGd => online_gd_update(&mut self.model, obj, &self.cfg.optim, &mut self.state),
            Optimizer::Congrad => congrad_update(&mut self.model, obj, validation, &self.cfg.optim, &mut self.state),
        }
    }

    /// History is re-streamed from the source; the memory is the replay
    /// residents plus the previous batch; `next` is the batch about to be
    /// learned from.
    fn diagnose(&mut self, t: u64, next: &[Event]) -> Result<()> {
        let past = (t - 1) as usize;
        let keep = self.cfg.eval.diag_history.map_or(past, |h| h.min(past));
        let mut stream = self.source.open()?;
        let mut history = Vec::with_capacity(keep);
        for i in 0..past {
            let b = stream
                .next_batch()
                .ok_or_else(|| Error::Config(format!("stream replay ended after {i} batches")))?;
            if i >= past - keep && !b.is_empty() {
                history.push(b);
            }
        }
        let mut memory = self.replay.items().to_vec();
        memory.extend(self.prev_batch.iter().cloned());
        let d = decomposition_diag(&self.model, t, &history, &memory, next)?;
        self.log.diagnostics.push(d);
        Ok(())
    }

    fn periodic(&mut self, t: u64) -> Result<()> {
        let test = self.test.as_ref().map(|ts| test_eval(&self.model, ts)).transpose()?;
        let retention = if self.cfg.eval.periodic_retention {
            Some(retention_curve(&self.model, &self.source, t, self.cfg.eval.horizon)?)
        } else {
            None
        };
        self.log.periodic.push(PeriodicRecord { t, test, retention });
        Ok(())
    }

    /// Plays until the stream ends.
    pub fn run(&mut self) -> Result<()> {
        while self.step()? {}
        Ok(())
    }

    /// Final test evaluation and retention curve.
    pub fn finish(mut self) -> Result<GameResult> {
        let final_test = self.test.as_ref().map(|ts| test_eval(&self.model, ts)).transpose()?;
        let retention = if self.step > 0 {
            Some(retention_curve(
                &self.model,
                &self.source,
                self.step,
                self.cfg.eval.horizon,
            )?)
        } else {
            None
        };
        self.log.meta.wall_clock_secs = self.started.elapsed().as_secs_f64();
        Ok(GameResult {
            model: self.model,
            state: self.state,
            log: self.log,
            final_test,
            retention,
        })
    }
}

/// Plays the whole stream and evaluates the final model.
pub fn run_game(source: StreamSource, model: Model, cfg: GameConfig, test: Option<TestSet>) -> Result<GameResult> {
    let mut game = Game::new(source, model, cfg, test)?;
    game.run()?;
    game.finish()
}
