use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streams::Event;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplayStrategy {
    /// Every event seen so far is resident with probability `capacity / seen`.
    Reservoir,
    /// At most `quota` most recent events per user; the globally oldest
    /// resident leaves when the total capacity is reached.
    PerUserFifo { quota: usize },
}

impl fmt::Display for ReplayStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayStrategy::Reservoir => f.write_str("reservoir"),
            ReplayStrategy::PerUserFifo { quota } => write!(f, "per-user-fifo:{quota}"),
        }
    }
}

impl FromStr for ReplayStrategy {
    type Err = Error;

    /// `reservoir` or `per-user-fifo:<quota>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "reservoir" {
            return Ok(ReplayStrategy::Reservoir);
        }
        if let Some(q) = s.strip_prefix("per-user-fifo:") {
            let quota = q
                .parse()
                .map_err(|_| Error::Config(format!("bad per-user quota `{q}`")))?;
            if quota == 0 {
                return Err(Error::Config("per-user quota must be positive".into()));
            }
            return Ok(ReplayStrategy::PerUserFifo { quota });
        }
        Err(Error::Config(format!(
            "unknown replay strategy `{s}` (expected reservoir or per-user-fifo:<quota>)"
        )))
    }
}

/// Bounded memory of past events.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    strategy: ReplayStrategy,
    items: Vec<Event>,
    seen: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, strategy: ReplayStrategy) -> Self {
        ReplayBuffer {
            capacity,
            strategy,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            seen: 0,
        }
    }

    pub fn reservoir(capacity: usize) -> Self {
        Self::new(capacity, ReplayStrategy::Reservoir)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn strategy(&self) -> ReplayStrategy {
        self.strategy
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Events ever offered.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn items(&self) -> &[Event] {
        &self.items
    }

    /// Offers `new` to the buffer.
    pub fn update<R: Rng + ?Sized>(&mut self, new: &[Event], rng: &mut R) {
        for e in new {
            self.seen += 1;
            match self.strategy {
                ReplayStrategy::Reservoir => {
                    if self.items.len() < self.capacity {
                        self.items.push(e.clone());
                    } else {
                        let j = rng.random_range(0..self.seen);
                        if j < self.capacity as u64 {
                            self.items[j as usize] = e.clone();
                        }
                    }
                }
                ReplayStrategy::PerUserFifo { quota } => {
                    if self.capacity == 0 {
                        continue;
                    }
                    let held = self.items.iter().filter(|r| r.user == e.user).count();
                    if held >= quota {
                        let oldest = self
                            .items
                            .iter()
                            .position(|r| r.user == e.user)
                            .expect("user holds items");
                        self.items.remove(oldest);
                    } else if self.items.len() >= self.capacity {
                        self.items.remove(0);
                    }
                    self.items.push(e.clone());
                }
            }
        }
    }

    /// `n` residents drawn uniformly with replacement; empty if the buffer is.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Event> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| self.items[rng.random_range(0..self.items.len())].clone())
            .collect()
    }

    /// Buffer state with event ids only.
    pub fn dump(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "replay",
            "capacity": self.capacity,
            "strategy": self.strategy.to_string(),
            "seen": self.seen,
            "ids": self.items.iter().map(|e| e.id).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn ev(id: u64, user: u32) -> Event {
        Event::new(id, id, user, Vec::new(), 0)
    }

    fn ids(b: &ReplayBuffer) -> Vec<u64> {
        b.items().iter().map(|e| e.id).collect()
    }

    #[test]
    fn under_capacity_keeps_everything() {
        let mut b = ReplayBuffer::reservoir(3);
        b.update(&[ev(1, 0), ev(2, 0)], &mut rng::seeded(0, 0));
        assert_eq!(ids(&b), vec![1, 2]);
        assert_eq!(b.seen(), 2);
    }

    #[test]
    fn per_user_fifo_evicts_oldest_of_user() {
        let mut b = ReplayBuffer::new(10, ReplayStrategy::PerUserFifo { quota: 2 });
        let mut r = rng::seeded(0, 0);
        b.update(&[ev(1, 7), ev(2, 7), ev(9, 3), ev(3, 7)], &mut r);
        let a: Vec<u64> = b.items().iter().filter(|e| e.user == 7).map(|e| e.id).collect();
        assert_eq!(a, vec![2, 3]);
        assert_eq!(b.len(), 3);
    }

    #[test]
    fn per_user_fifo_respects_total_capacity() {
        let mut b = ReplayBuffer::new(3, ReplayStrategy::PerUserFifo { quota: 2 });
        let mut r = rng::seeded(0, 0);
        b.update(&[ev(1, 0), ev(2, 1), ev(3, 2), ev(4, 3)], &mut r);
        assert_eq!(ids(&b), vec![2, 3, 4]);
    }

    #[test]
    fn sampling_edge_cases() {
        let mut r = rng::seeded(0, 0);
        let empty = ReplayBuffer::reservoir(5);
        assert!(empty.sample(4, &mut r).is_empty());
        let mut one = ReplayBuffer::reservoir(5);
        one.update(&[ev(42, 0)], &mut r);
        assert_eq!(
            one.sample(3, &mut r).iter().map(|e| e.id).collect::<Vec<_>>(),
            vec![42; 3]
        );
        assert!(one.sample(0, &mut r).is_empty());
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!(
            "reservoir".parse::<ReplayStrategy>().unwrap(),
            ReplayStrategy::Reservoir
        );
        assert_eq!(
            "per-user-fifo:5".parse::<ReplayStrategy>().unwrap(),
            ReplayStrategy::PerUserFifo { quota: 5 }
        );
        assert!("per-user-fifo:0".parse::<ReplayStrategy>().is_err());
        assert!("lru".parse::<ReplayStrategy>().is_err());
    }

    #[test]
    fn dump_lists_ids() {
        let mut b = ReplayBuffer::reservoir(2);
        b.update(&[ev(5, 0), ev(6, 0)], &mut rng::seeded(0, 0));
        let d = b.dump();
        assert_eq!(d["ids"], serde_json::json!([5, 6]));
        assert_eq!(d["strategy"], "reservoir");
    }
}
