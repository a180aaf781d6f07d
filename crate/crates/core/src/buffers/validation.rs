use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::streams::{Event, UserId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationStrategy {
    /// The newest `capacity` events; the oldest resident leaves first.
    Fifo,
    /// Uniform sample of everything pushed so far.
    Reservoir,
    /// Balanced over users: an overflow evicts the oldest event of the
    /// user holding the most residents.
    Stratified,
}

impl ValidationStrategy {
    pub const ALL: [ValidationStrategy; 3] = [
        ValidationStrategy::Fifo,
        ValidationStrategy::Reservoir,
        ValidationStrategy::Stratified,
    ];
}

impl fmt::Display for ValidationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValidationStrategy::Fifo => "fifo",
            ValidationStrategy::Reservoir => "reservoir",
            ValidationStrategy::Stratified => "stratified",
        })
    }
}

impl FromStr for ValidationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fifo" => Ok(ValidationStrategy::Fifo),
            "reservoir" => Ok(ValidationStrategy::Reservoir),
            "stratified" => Ok(ValidationStrategy::Stratified),
            other => Err(Error::Config(format!(
                "unknown validation strategy `{other}` (expected fifo, reservoir or stratified)"
            ))),
        }
    }
}

/// Online validation buffer.
///
/// Incoming data is pushed here first. Whatever a push displaces is what
/// [`ValidationBuffer::pop`] hands to training, so every event is either
/// resident or has been emitted exactly once.
#[derive(Clone, Debug)]
pub struct ValidationBuffer {
    capacity: usize,
    strategy: ValidationStrategy,
    items: VecDeque<Event>,
    seen: u64,
    rng: rng::Rng,
    displaced: Vec<Event>,
}

impl ValidationBuffer {
    /// `seed` drives the reservoir strategy's replacement draws.
    pub fn new(capacity: usize, strategy: ValidationStrategy, seed: u64) -> Self {
        ValidationBuffer {
            capacity,
            strategy,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            seen: 0,
            rng: rng::seeded(seed, rng::streams::VALIDATION),
            displaced: Vec::new(),
        }
    }

    pub fn fifo(capacity: usize) -> Self {
        Self::new(capacity, ValidationStrategy::Fifo, 0)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn strategy(&self) -> ValidationStrategy {
        self.strategy
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Offers `new` and returns the events leaving the buffer as a result.
    ///
    /// The same list is kept for the next [`ValidationBuffer::pop`]; events
    /// displaced by an earlier push that was never popped are carried over.
    pub fn push(&mut self, new: &[Event]) -> Vec<Event> {
        let mut out = Vec::new();
        for e in new {
            self.seen += 1;
            match self.strategy {
                ValidationStrategy::Fifo => {
                    self.items.push_back(e.clone());
                    while self.items.len() > self.capacity {
                        out.push(self.items.pop_front().expect("over capacity"));
                    }
                }
                ValidationStrategy::Reservoir => {
                    if self.items.len() < self.capacity {
                        self.items.push_back(e.clone());
                    } else {
                        let j = self.rng.random_range(0..self.seen);
                        if j < self.capacity as u64 {
                            out.push(std::mem::replace(&mut self.items[j as usize], e.clone()));
                        } else {
                            out.push(e.clone());
                        }
                    }
                }
                ValidationStrategy::Stratified => {
                    self.items.push_back(e.clone());
                    if self.items.len() > self.capacity {
                        let victim = self.stratified_victim();
                        out.push(self.items.remove(victim).expect("valid index"));
                    }
                }
            }
        }
        self.displaced.extend(out.iter().cloned());
        out
    }

    /// Position of the oldest resident of the most represented user; ties go
    /// to the user whose oldest resident arrived first.
    fn stratified_victim(&self) -> usize {
        let mut counts: BTreeMap<UserId, (usize, usize)> = BTreeMap::new();
        for (pos, e) in self.items.iter().enumerate() {
            counts.entry(e.user).or_insert((0, pos)).0 += 1;
        }
        let (_, (_, pos)) = counts
            .into_iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
            .expect("buffer not empty");
        pos
    }

    /// Takes the events displaced since the last pop.
    pub fn pop(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.displaced)
    }

    /// Current residents, oldest first for fifo and stratified.
    pub fn peek(&self) -> Vec<Event> {
        self.items.iter().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.items.iter()
    }

    pub fn dump(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "validation",
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

    fn ev(id: u64, user: u32) -> Event {
        Event::new(id, id, user, Vec::new(), 0)
    }

    fn ids(events: &[Event]) -> Vec<u64> {
        events.iter().map(|e| e.id).collect()
    }

    #[test]
    fn fifo_push_onto_full_buffer() {
        let mut b = ValidationBuffer::fifo(3);
        assert!(b.push(&[ev(1, 0), ev(2, 0), ev(3, 0)]).is_empty());
        assert!(b.pop().is_empty());
        let displaced = b.push(&[ev(4, 0)]);
        assert_eq!(ids(&displaced), vec![1]);
        assert_eq!(ids(&b.peek()), vec![2, 3, 4]);
        assert_eq!(ids(&b.pop()), vec![1]);
        assert!(b.pop().is_empty());
    }

    #[test]
    fn peek_does_not_mutate() {
        let mut b = ValidationBuffer::fifo(2);
        assert!(b.peek().is_empty());
        b.push(&[ev(1, 0)]);
        assert_eq!(b.peek(), b.peek());
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn zero_capacity_passes_everything_through() {
        for s in ValidationStrategy::ALL {
            let mut b = ValidationBuffer::new(0, s, 3);
            let out = b.push(&[ev(1, 0), ev(2, 1)]);
            assert_eq!(ids(&out), vec![1, 2], "{s}");
            assert!(b.is_empty());
        }
    }

    /// Algorithm R written out independently.
    fn reference_reservoir(capacity: usize, stream: &[u64], seed: u64) -> (Vec<u64>, Vec<u64>) {
        let mut r = rng::seeded(seed, rng::streams::VALIDATION);
        let mut res = Vec::new();
        let mut out = Vec::new();
        for (n, &id) in stream.iter().enumerate() {
            if res.len() < capacity {
                res.push(id);
                continue;
            }
            let j = r.random_range(0..(n as u64 + 1)) as usize;
            if j < capacity {
                out.push(res[j]);
                res[j] = id;
            } else {
                out.push(id);
            }
        }
        (res, out)
    }

    #[test]
    fn reservoir_matches_reference() {
        for seed in 0..20 {
            let mut b = ValidationBuffer::new(2, ValidationStrategy::Reservoir, seed);
            b.push(&[ev(1, 0), ev(2, 0)]);
            let displaced = b.push(&[ev(3, 0)]);
            let (res, out) = reference_reservoir(2, &[1, 2, 3], seed);
            assert_eq!(ids(&displaced), out);
            assert_eq!(ids(&b.peek()), res);
        }
        let stream: Vec<u64> = (0..200).collect();
        let mut b = ValidationBuffer::new(7, ValidationStrategy::Reservoir, 99);
        let events: Vec<Event> = stream.iter().map(|&i| ev(i, 0)).collect();
        let mut out = Vec::new();
        for chunk in events.chunks(9) {
            out.extend(b.push(chunk));
        }
        let (res, ref_out) = reference_reservoir(7, &stream, 99);
        assert_eq!(ids(&out), ref_out);
        assert_eq!(ids(&b.peek()), res);
    }

    #[test]
    fn stratified_evicts_from_largest_user() {
        let mut b = ValidationBuffer::new(4, ValidationStrategy::Stratified, 0);
        b.push(&[ev(1, 0), ev(2, 0), ev(3, 0), ev(4, 0)]);
        let out = b.push(&[ev(5, 1)]);
        assert_eq!(ids(&out), vec![1]);
        let out = b.push(&[ev(6, 1)]);
        assert_eq!(ids(&out), vec![2]);
        // Tie at 2-2: user 0's oldest resident (3) arrived before user 1's (5).
        let out = b.push(&[ev(7, 2)]);
        assert_eq!(ids(&out), vec![3]);
    }

    #[test]
    fn strategy_names() {
        for s in ValidationStrategy::ALL {
            assert_eq!(s.to_string().parse::<ValidationStrategy>().unwrap(), s);
        }
        assert!("lifo".parse::<ValidationStrategy>().is_err());
    }
}
