//! Synthetic multi-user token stream.
//!
//! Each user owns a first-order Markov chain over a small vocabulary,
//! `P_u = (1 - ε) P_base + ε P_rand`, so users share structure but differ.
//! Every step a batch of events is drawn: a user is picked from the active
//! set, and the event is the user's last `L` tokens (one-hot encoded) with
//! the next token rolled from that user's chain as the label. Users join and
//! leave according to a schedule.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{Event, EventStream, UserId};
use crate::error::{Error, Result};
use crate::models::Matrix;
use crate::rng;

/// Population change applied at the start of `step`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub step: u64,
    pub add: usize,
    /// The longest-active users leave first.
    pub drop: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPollConfig {
    pub vocab: usize,
    pub context: usize,
    pub initial_users: usize,
    /// Per-user perturbation of the base chain, in [0, 1].
    pub epsilon: f64,
    /// Dirichlet concentration of random chain rows; small values give peaked rows.
    pub concentration: f64,
    pub schedule: Vec<ScheduleEntry>,
    pub batch_size: usize,
    pub steps: u64,
    /// Per-step mixing of every active user's chain toward its drift target.
    pub drift: f64,
    /// User `i` (in arrival order) is drawn with weight `(i + 1)^-rate_skew`.
    pub rate_skew: f64,
    /// Seed of the base chain; `None` derives it from the stream seed.
    pub chain_seed: Option<u64>,
}

impl Default for SyntheticPollConfig {
    fn default() -> Self {
        SyntheticPollConfig {
            vocab: 32,
            context: 4,
            initial_users: 10,
            epsilon: 0.3,
            concentration: 0.2,
            schedule: Vec::new(),
            batch_size: 10,
            steps: 500,
            drift: 0.0,
            rate_skew: 0.0,
            chain_seed: None,
        }
    }
}

impl SyntheticPollConfig {
    pub fn input_dim(&self) -> usize {
        self.vocab * self.context
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 || self.context == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "synthetic stream needs vocab >= 2, context >= 1 and batch size >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon) || !(0.0..=1.0).contains(&self.drift) {
            return Err(Error::Config("epsilon and drift must lie in [0, 1]".into()));
        }
        if !(self.concentration > 0.0) {
            return Err(Error::Config("concentration must be positive".into()));
        }
        let mut active = self.initial_users;
        let mut entries = self.schedule.clone();
        entries.sort_by_key(|e| e.step);
        let mut next = 0;
        for step in 1..=self.steps {
            while next < entries.len() && entries[next].step <= step {
                let e = entries[next];
                if e.drop > active {
                    return Err(Error::Config(format!(
                        "schedule drops {} users at step {} but only {active} are active",
                        e.drop, e.step
                    )));
                }
                active = active - e.drop + e.add;
                next += 1;
            }
            if active == 0 {
                return Err(Error::Config(format!("no active users at step {step}")));
            }
        }
        Ok(())
    }
}

/// Row-stochastic `n × n` matrix with Dirichlet(`concentration`) rows.
pub fn random_chain<R: Rng + ?Sized>(n: usize, concentration: f64, rng: &mut R) -> Matrix {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut m = Matrix::zeros(n, n);
    for r in 0..n {
        let row = m.row_mut(r);
        loop {
            for v in row.iter_mut() {
                *v = gamma.sample(rng);
            }
            let total: f64 = row.iter().sum();
            if total > 0.0 && total.is_finite() {
                row.iter_mut().for_each(|v| *v /= total);
                break;
            }
        }
    }
    m
}

/// `(1 - ε) base + ε R` for a fresh random chain `R`.
pub fn gen_user_chain<R: Rng + ?Sized>(base: &Matrix, epsilon: f64, concentration: f64, rng: &mut R) -> Matrix {
    let fresh = random_chain(base.rows(), concentration, rng);
    mix_chains(base, &fresh, epsilon)
}

pub(crate) fn mix_chains(a: &Matrix, b: &Matrix, weight_b: f64) -> Matrix {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (1.0 - weight_b) * x + weight_b * y)
        .collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

/// Index drawn from a probability row.
pub fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` a hair under 1; fall back to the last nonzero entry.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

struct UserState {
    id: UserId,
    chain: Matrix,
    target: Option<Matrix>,
    recent: VecDeque<usize>,
}

pub struct SyntheticStream {
    cfg: SyntheticPollConfig,
    rng: rng::Rng,
    base: Matrix,
    active: Vec<UserState>,
    schedule: Vec<ScheduleEntry>,
    next_entry: usize,
    next_user: UserId,
    next_id: u64,
    step: u64,
}

impl SyntheticStream {
    pub fn new(cfg: SyntheticPollConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let chain_seed = cfg.chain_seed.unwrap_or(seed);
        let base = random_chain(
            cfg.vocab,
            cfg.concentration,
            &mut rng::seeded(chain_seed, rng::streams::CHAINS),
        );
        let mut schedule = cfg.schedule.clone();
        schedule.sort_by_key(|e| e.step);
        let mut stream = SyntheticStream {
            rng: rng::seeded(seed, rng::streams::DATA),
            base,
            active: Vec::new(),
            schedule,
            next_entry: 0,
            next_user: 0,
            next_id: 0,
            step: 0,
            cfg,
        };
        for _ in 0..stream.cfg.initial_users {
            stream.add_user();
        }
        Ok(stream)
    }

    pub fn base_chain(&self) -> &Matrix {
        &self.base
    }

    /// Chain of an active user.
    pub fn user_chain(&self, user: UserId) -> Option<&Matrix> {
        self.active.iter().find(|u| u.id == user).map(|u| &u.chain)
    }

    pub fn active_users(&self) -> Vec<UserId> {
        self.active.iter().map(|u| u.id).collect()
    }

    fn add_user(&mut self) {
        let chain = gen_user_chain(&self.base, self.cfg.epsilon, self.cfg.concentration, &mut self.rng);
        let target =
            (self.cfg.drift > 0.0).then(|| random_chain(self.cfg.vocab, self.cfg.concentration, &mut self.rng));
        let mut recent = VecDeque::with_capacity(self.cfg.context + 1);
        let mut tok = self.rng.random_range(0..self.cfg.vocab);
        recent.push_back(tok);
        while recent.len() < self.cfg.context {
            tok = sample_row(chain.row(tok), &mut self.rng);
            recent.push_back(tok);
        }
        self.active.push(UserState {
            id: self.next_user,
            chain,
            target,
            recent,
        });
        self.next_user += 1;
    }

    fn encode(&self, recent: &VecDeque<usize>) -> Vec<f64> {
        let mut x = vec![0.0; self.cfg.input_dim()];
        for (pos, tok) in recent.iter().enumerate() {
            x[pos * self.cfg.vocab + tok] = 1.0;
        }
        x
    }

    fn pick_user(&mut self) -> usize {
        if self.cfg.rate_skew == 0.0 {
            return self.rng.random_range(0..self.active.len());
        }
        let weights: Vec<f64> = (0..self.active.len())
            .map(|i| ((i + 1) as f64).powf(-self.cfg.rate_skew))
            .collect();
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        sample_row(&probs, &mut self.rng)
    }
}

impl EventStream for SyntheticStream {
    fn next_batch(&mut self) -> Option<Vec<Event>> {
        if self.step >= self.cfg.steps {
            return None;
        }
        self.step += 1;
        while self.next_entry < self.schedule.len() && self.schedule[self.next_entry].step <= self.step {
            let e = self.schedule[self.next_entry];
            let drop = e.drop.min(self.active.len());
            self.active.drain(..drop);
            for _ in 0..e.add {
                self.add_user();
            }
            self.next_entry += 1;
        }
        assert!(!self.active.is_empty(), "validated schedule keeps a user active");

        let mut batch = Vec::with_capacity(self.cfg.batch_size);
        for _ in 0..self.cfg.batch_size {
            let i = self.pick_user();
            let x = self.encode(&self.active[i].recent);
            let user = &mut self.active[i];
            let last = *user.recent.back().expect("non-empty context");
            let y = sample_row(user.chain.row(last), &mut self.rng);
            user.recent.pop_front();
            user.recent.push_back(y);
            batch.push(Event::new(self.next_id, self.step, user.id, x, y as u32));
            self.next_id += 1;
        }
        if self.cfg.drift > 0.0 {
            let rho = self.cfg.drift;
            for user in &mut self.active {
                if let Some(target) = &user.target {
                    user.chain = mix_chains(&user.chain, target, rho);
                }
            }
        }
        Some(batch)
    }

    fn input_dim(&self) -> usize {
        self.cfg.input_dim()
    }

    fn num_classes(&self) -> usize {
        self.cfg.vocab
    }
}
