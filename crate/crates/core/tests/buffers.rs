mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use congrad::buffers::{dump_state, ReplayBuffer, ReplayStrategy, ValidationBuffer, ValidationStrategy};
use congrad::rng;
use congrad::streams::{Event, UserId};

fn ev(id: u64, user: UserId) -> Event {
    Event::new(id, id, user, Vec::new(), 0)
}

fn ids(events: &[Event]) -> Vec<u64> {
    events.iter().map(|e| e.id).collect()
}

/// Events `0..n` with the given users, cut into batches of the given sizes.
fn batches(users: &[UserId], sizes: &[usize]) -> Vec<Vec<Event>> {
    let mut out = Vec::new();
    let mut next = 0usize;
    for &s in sizes {
        let end = (next + s).min(users.len());
        out.push((next..end).map(|i| ev(i as u64, users[i])).collect());
        next = end;
    }
    out.push((next..users.len()).map(|i| ev(i as u64, users[i])).collect());
    out
}

fn strategy() -> impl Strategy<Value = ValidationStrategy> {
    prop_oneof![
        Just(ValidationStrategy::Fifo),
        Just(ValidationStrategy::Reservoir),
        Just(ValidationStrategy::Stratified)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fifo_pops_in_arrival_order(
        cap in 0usize..12,
        users in prop::collection::vec(0u32..4, 0..80),
        sizes in prop::collection::vec(0usize..9, 0..12),
    ) {
        let mut vb = ValidationBuffer::fifo(cap);
        let mut popped = Vec::new();
        for b in batches(&users, &sizes) {
            vb.push(&b);
            popped.extend(ids(&vb.pop()));
            prop_assert!(vb.len() <= cap);
        }
        let n = users.len() as u64;
        let resident = cap.min(users.len()) as u64;
        prop_assert_eq!(popped, (0..n - resident).collect::<Vec<_>>());
        prop_assert_eq!(ids(&vb.peek()), (n - resident..n).collect::<Vec<_>>());
    }

    #[test]
    fn every_pushed_event_is_emitted_or_resident_exactly_once(
        strat in strategy(),
        cap in 0usize..12,
        seed in 0u64..1000,
        users in prop::collection::vec(0u32..5, 0..80),
        sizes in prop::collection::vec(0usize..9, 0..12),
    ) {
        let mut vb = ValidationBuffer::new(cap, strat, seed);
        let mut seen = Vec::new();
        for b in batches(&users, &sizes) {
            let displaced = vb.push(&b);
            let popped = vb.pop();
            prop_assert_eq!(ids(&displaced), ids(&popped));
            seen.extend(ids(&popped));
            prop_assert!(vb.len() <= cap);
        }
        seen.extend(ids(&vb.peek()));
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..users.len() as u64).collect::<Vec<_>>());
        prop_assert_eq!(vb.seen(), users.len() as u64);
    }

    #[test]
    fn stratified_residents_balance_within_one(
        cap in 1usize..16,
        n_users in 1u32..6,
        prefix in prop::collection::vec(0u32..6, 0..60),
        seed in 0u64..1000,
    ) {
        let n_users = n_users.min(cap as u32);
        let mut vb = ValidationBuffer::new(cap, ValidationStrategy::Stratified, 0);
        let mut id = 0u64;
        // Arbitrary history, then every user offers `cap` more events in
        // shuffled rounds.
        for u in prefix {
            vb.push(&[ev(id, u % n_users)]);
            id += 1;
        }
        let mut r = rng::seeded(seed, 0);
        let mut order: Vec<UserId> = (0..n_users).collect();
        for _ in 0..cap {
            order.shuffle(&mut r);
            for &u in &order {
                vb.push(&[ev(id, u)]);
                id += 1;
            }
        }
        let mut counts: BTreeMap<UserId, usize> = (0..n_users).map(|u| (u, 0)).collect();
        for e in vb.iter() {
            *counts.get_mut(&e.user).unwrap() += 1;
        }
        let max = *counts.values().max().unwrap();
        let min = *counts.values().min().unwrap();
        prop_assert!(max - min <= 1, "{:?}", counts);
    }

    #[test]
    fn replay_respects_capacity_and_quota(
        cap in 0usize..20,
        quota in 1usize..6,
        reservoir in any::<bool>(),
        users in prop::collection::vec(0u32..6, 0..120),
        seed in 0u64..1000,
    ) {
        let strat = if reservoir { ReplayStrategy::Reservoir } else { ReplayStrategy::PerUserFifo { quota } };
        let mut rb = ReplayBuffer::new(cap, strat);
        let mut r = rng::seeded(seed, 0);
        let mut last_seen = 0;
        for chunk in users.chunks(7).enumerate() {
            let (i, us) = chunk;
            let batch: Vec<Event> = us.iter().enumerate().map(|(j, &u)| ev((i * 7 + j) as u64, u)).collect();
            rb.update(&batch, &mut r);
            prop_assert!(rb.len() <= cap);
            prop_assert!(rb.seen() >= last_seen);
            last_seen = rb.seen();
            if !reservoir {
                let mut per: BTreeMap<UserId, usize> = BTreeMap::new();
                for e in rb.items() {
                    *per.entry(e.user).or_insert(0) += 1;
                }
                prop_assert!(per.values().all(|&c| c <= quota));
            }
        }
    }
}

#[test]
fn under_capacity_keeps_everything() {
    let mut rb = ReplayBuffer::reservoir(3);
    rb.update(&[ev(0, 0), ev(1, 0)], &mut rng::seeded(0, 0));
    assert_eq!(ids(rb.items()), vec![0, 1]);
}

#[test]
fn per_user_fifo_drops_the_users_oldest() {
    let mut rb = ReplayBuffer::new(10, ReplayStrategy::PerUserFifo { quota: 2 });
    rb.update(&[ev(1, 0), ev(2, 0), ev(3, 0)], &mut rng::seeded(0, 0));
    assert_eq!(ids(rb.items()), vec![2, 3]);
}

#[test]
fn reservoir_inclusion_is_uniform() {
    // k = 10 of n = 1000: every event resident with probability 0.01.
    let (k, n, trials) = (10usize, 1000u64, 10_000u64);
    let stream: Vec<Event> = (0..n).map(|i| ev(i, 0)).collect();
    let mut hits = vec![0u64; n as usize];
    for trial in 0..trials {
        let mut rb = ReplayBuffer::reservoir(k);
        rb.update(&stream, &mut rng::seeded(trial, 0));
        for e in rb.items() {
            hits[e.id as usize] += 1;
        }
    }
    let p = k as f64 / n as f64;
    let worst = hits
        .iter()
        .map(|&h| (h as f64 / trials as f64 - p).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 0.005, "max deviation {worst}");
}

#[test]
fn sampling_edge_cases() {
    let mut r = rng::seeded(0, 0);
    let mut rb = ReplayBuffer::reservoir(5);
    assert!(rb.sample(3, &mut r).is_empty());
    rb.update(&[ev(7, 0)], &mut r);
    assert_eq!(ids(&rb.sample(3, &mut r)), vec![7, 7, 7]);
    assert!(rb.sample(0, &mut r).is_empty());
}

#[test]
fn sampling_is_uniform_over_residents() {
    let mut r = rng::seeded(1, 0);
    let mut rb = ReplayBuffer::reservoir(100);
    let events: Vec<Event> = (0..100).map(|i| ev(i, 0)).collect();
    rb.update(&events, &mut r);
    let draws = 100_000;
    let mut counts = vec![0f64; 100];
    for e in rb.sample(draws, &mut r) {
        counts[e.id as usize] += 1.0;
    }
    let expected = draws as f64 / 100.0;
    let stat: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(99.0).unwrap().cdf(stat);
    assert!(p > 0.001, "chi-square {stat}, p = {p}");
}

#[test]
fn fifo_push_displaces_the_oldest() {
    let mut vb = ValidationBuffer::fifo(3);
    assert!(vb.push(&[ev(0, 0), ev(1, 0)]).is_empty());
    assert!(vb.push(&[ev(2, 0)]).is_empty());
    assert!(vb.pop().is_empty());
    let displaced = vb.push(&[ev(3, 0)]);
    assert_eq!(ids(&displaced), vec![0]);
    assert_eq!(ids(&vb.peek()), vec![1, 2, 3]);
    assert_eq!(ids(&vb.peek()), vec![1, 2, 3]);
    assert_eq!(ids(&vb.pop()), vec![0]);
    assert!(ValidationBuffer::fifo(4).peek().is_empty());
}

#[test]
fn dumps_list_event_ids_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut rb = ReplayBuffer::reservoir(4);
    rb.update(&[Event::new(5, 1, 0, vec![0.25; 3], 2)], &mut rng::seeded(0, 0));
    let mut vb = ValidationBuffer::fifo(2);
    vb.push(&[Event::new(8, 2, 1, vec![0.5; 3], 1)]);
    let path = dir.path().join("buffers.json");
    dump_state(&path, &rb, &vb).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["replay"]["ids"], serde_json::json!([5]));
    assert_eq!(v["validation"]["ids"], serde_json::json!([8]));
    assert!(!text.contains("0.25") && !text.contains("\"x\""));
}
