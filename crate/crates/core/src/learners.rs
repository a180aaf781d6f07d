//! How a learner turns the displaced events into a training objective.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buffers::ReplayBuffer;
use crate::error::{Error, Result};
use crate::models::{Model, ParamVec};
use crate::optim::Objective;
use crate::streams::Event;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearnerKind {
    /// Train on the displaced events only.
    OnlineOnly,
    /// Train on a replay sample only; `sample` defaults to the number of
    /// displaced events.
    ReplayOnly { sample: Option<usize> },
    /// Displaced events plus a replay sample. `fraction` is the replay share
    /// of the combined batch when `sample` is unset (½ means equal sizes).
    MixedReplay { fraction: f64, sample: Option<usize> },
    /// Gradient on the displaced events, projected so that it does not
    /// increase the loss on a replay sample to first order.
    Agem,
}

impl LearnerKind {
    pub const NAMES: [&'static str; 4] = ["online-only", "replay-only", "mixed-replay", "a-gem"];

    pub fn mixed() -> Self {
        LearnerKind::MixedReplay {
            fraction: 0.5,
            sample: None,
        }
    }

    pub fn replay_only() -> Self {
        LearnerKind::ReplayOnly { sample: None }
    }

    pub fn all() -> [LearnerKind; 4] {
        [
            LearnerKind::OnlineOnly,
            Self::replay_only(),
            Self::mixed(),
            LearnerKind::Agem,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::OnlineOnly => "online-only",
            LearnerKind::ReplayOnly { .. } => "replay-only",
            LearnerKind::MixedReplay { .. } => "mixed-replay",
            LearnerKind::Agem => "a-gem",
        }
    }

    pub fn uses_replay(&self) -> bool {
        !matches!(self, LearnerKind::OnlineOnly)
    }

    pub fn validate(&self) -> Result<()> {
        if let LearnerKind::MixedReplay { fraction, .. } = self {
            if !(0.0..=1.0).contains(fraction) {
                return Err(Error::Config(format!(
                    "mix fraction must lie in [0, 1], got {fraction}"
                )));
            }
        }
        Ok(())
    }

    /// Replay draws for a step with `popped` displaced events.
    fn replay_draws(&self, popped: usize) -> usize {
        match *self {
            LearnerKind::OnlineOnly => 0,
            LearnerKind::ReplayOnly { sample } => sample.unwrap_or(popped),
            LearnerKind::MixedReplay { fraction, sample } => sample.unwrap_or_else(|| {
                if fraction >= 1.0 {
                    popped
                } else {
                    (popped as f64 * fraction / (1.0 - fraction)).round() as usize
                }
            }),
            LearnerKind::Agem => popped,
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online-only" => Ok(LearnerKind::OnlineOnly),
            "replay-only" => Ok(Self::replay_only()),
            "mixed-replay" => Ok(Self::mixed()),
            "a-gem" => Ok(LearnerKind::Agem),
            other => Err(Error::Config(format!(
                "unknown learner `{other}` (expected one of {})",
                Self::NAMES.join(", ")
            ))),
        }
    }
}

/// The events a step trains on. For A-GEM this is the displaced batch; its
/// reference sample is drawn separately by [`agem_reference`]. An empty
/// result means the step has nothing to train on.
pub fn compose_training_set<R: Rng + ?Sized>(
    kind: &LearnerKind,
    popped: &[Event],
    replay: &ReplayBuffer,
    rng: &mut R,
) -> Vec<Event> {
    let draws = kind.replay_draws(popped.len()).min(replay.len());
    match kind {
        LearnerKind::OnlineOnly | LearnerKind::Agem => popped.to_vec(),
        LearnerKind::ReplayOnly { .. } => replay.sample(draws, rng),
        LearnerKind::MixedReplay { fraction, .. } => {
            let mut out = if *fraction >= 1.0 { Vec::new() } else { popped.to_vec() };
            out.extend(replay.sample(draws, rng));
            out
        }
    }
}

/// Replay sample used as the A-GEM reference, as large as the displaced
/// batch (smaller if the buffer holds fewer events; draws with replacement).
pub fn agem_reference<R: Rng + ?Sized>(popped: &[Event], replay: &ReplayBuffer, rng: &mut R) -> Vec<Event> {
    if replay.is_empty() {
        return Vec::new();
    }
    replay.sample(popped.len().min(replay.len()), rng)
}

/// Removes from `g` its component along `g_ref` when the two disagree.
///
/// Returns `g` unchanged when `g · g_ref ≥ 0` or `g_ref` is zero.
pub fn agem_project(mut g: ParamVec, g_ref: &ParamVec) -> ParamVec {
    let dot = g.dot(g_ref);
    let rr = g_ref.dot(g_ref);
    if dot < 0.0 && rr > 0.0 {
        g.axpy(-dot / rr, g_ref);
    }
    g
}

/// Projected gradient on `popped` against `reference`.
pub fn agem_gradient(model: &Model, popped: &[Event], reference: &[Event]) -> Result<(f64, ParamVec)> {
    let (loss, g) = model.loss_and_grad(popped)?;
    if reference.is_empty() {
        return Ok((loss, g));
    }
    let (_, g_ref) = model.loss_and_grad(reference)?;
    Ok((loss, agem_project(g, &g_ref)))
}

/// A-GEM training objective with a reference sample fixed for the whole
/// stream step; the projection is recomputed at every iterate.
pub struct AgemObjective<'a> {
    pub popped: &'a [Event],
    pub reference: &'a [Event],
}

impl Objective for AgemObjective<'_> {
    fn loss_and_grad(&mut self, model: &Model) -> Result<(f64, ParamVec)> {
        agem_gradient(model, self.popped, self.reference)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn ev(id: u64) -> Event {
        Event::new(id, id, 0, Vec::new(), 0)
    }

    fn filled(n: u64) -> ReplayBuffer {
        let mut b = ReplayBuffer::reservoir(100);
        b.update(&(1000..1000 + n).map(ev).collect::<Vec<_>>(), &mut rng::seeded(0, 0));
        b
    }

    #[test]
    fn composition_sizes() {
        let popped: Vec<Event> = (0..4).map(ev).collect();
        let mut r = rng::seeded(1, 0);
        let replay = filled(10);
        assert_eq!(
            compose_training_set(&LearnerKind::OnlineOnly, &popped, &replay, &mut r).len(),
            4
        );
        assert_eq!(
            compose_training_set(&LearnerKind::replay_only(), &popped, &replay, &mut r).len(),
            4
        );
        let mixed = compose_training_set(&LearnerKind::mixed(), &popped, &replay, &mut r);
        assert_eq!(mixed.len(), 8);
        assert_eq!(mixed[..4].iter().map(|e| e.id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert!(mixed[4..].iter().all(|e| e.id >= 1000));
        let custom = LearnerKind::MixedReplay {
            fraction: 0.5,
            sample: Some(7),
        };
        assert_eq!(compose_training_set(&custom, &popped, &replay, &mut r).len(), 11);
    }

    #[test]
    fn replay_draws_truncate_to_buffer() {
        let popped: Vec<Event> = (0..4).map(ev).collect();
        let mut r = rng::seeded(1, 0);
        let small = filled(2);
        assert_eq!(
            compose_training_set(&LearnerKind::mixed(), &popped, &small, &mut r).len(),
            6
        );
        let empty = ReplayBuffer::reservoir(5);
        assert_eq!(
            compose_training_set(&LearnerKind::mixed(), &popped, &empty, &mut r).len(),
            4
        );
        assert!(compose_training_set(&LearnerKind::replay_only(), &popped, &empty, &mut r).is_empty());
        assert!(agem_reference(&popped, &empty, &mut r).is_empty());
        assert_eq!(agem_reference(&popped, &small, &mut r).len(), 2);
    }

    #[test]
    fn projection_by_hand() {
        let g = ParamVec::new(vec![1.0, -1.0]);
        let r = ParamVec::new(vec![0.0, 1.0]);
        assert_eq!(agem_project(g, &r).shared, vec![1.0, 0.0]);
        let agree = ParamVec::new(vec![1.0, 1.0]);
        assert_eq!(agem_project(agree.clone(), &r), agree);
    }

    #[test]
    fn opposite_gradient_projects_to_zero() {
        let r = ParamVec::new(vec![0.3, -1.2, 2.0]);
        let mut g = r.clone();
        g.scale(-1.0);
        assert!(agem_project(g, &r).norm() < 1e-15);
    }

    #[test]
    fn zero_reference_is_ignored() {
        let g = ParamVec::new(vec![1.0, 2.0]);
        assert_eq!(agem_project(g.clone(), &ParamVec::new(vec![0.0, 0.0])), g);
    }

    #[test]
    fn parse_names() {
        for k in LearnerKind::all() {
            assert_eq!(k.name().parse::<LearnerKind>().unwrap(), k);
        }
        assert!("gem".parse::<LearnerKind>().is_err());
        assert!(LearnerKind::MixedReplay {
            fraction: 1.5,
            sample: None
        }
        .validate()
        .is_err());
    }
}
