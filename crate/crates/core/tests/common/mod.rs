#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;

use congrad::models::{ConditioningKind, Model, ModelConfig, ParamVec};
use congrad::rng;
use congrad::streams::{Event, UserId};

/// MNIST directory: `$CONGRAD_MNIST_DIR`, else `<workspace>/data/mnist`.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("CONGRAD_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.join("train-images-idx3-ubyte").is_file().then_some(dir)
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn event(id: u64, user: UserId, x: Vec<f64>, y: u32) -> Event {
    Event::new(id, 1, user, x, y)
}

/// `n` events with Gaussian-ish features, labels below `classes`, users below `users`.
pub fn random_batch(seed: u64, n: usize, dim: usize, classes: u32, users: UserId) -> Vec<Event> {
    let mut r = rng::seeded(seed, 99);
    (0..n)
        .map(|i| {
            let x = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
            event(i as u64, r.random_range(0..users), x, r.random_range(0..classes))
        })
        .collect()
}

pub fn small_model(mode: ConditioningKind, dim: usize, classes: usize, seed: u64) -> Model {
    let mut cfg = ModelConfig::new(dim, classes).with_mode(mode).with_hidden(vec![6, 5]);
    cfg.user_dim = 3;
    cfg.residual_hidden = 4;
    Model::new(cfg, &mut rng::seeded(seed, rng::streams::MODEL_INIT)).unwrap()
}

/// Moves every parameter (zero-initialized residual outputs and embeddings
/// included) by a random amount so that no gradient vanishes structurally.
pub fn jitter(model: &mut Model, batch: &[Event], seed: u64) {
    model.register_users(batch, 1);
    let mut r = rng::seeded(seed, 98);
    let mut delta = model.params();
    for v in delta.values_mut() {
        *v = r.random_range(-0.5..0.5);
    }
    model.add_scaled(1.0, &delta).unwrap();
}

/// One-hot vector over the flattened parameters.
pub fn unit(like: &ParamVec, i: usize) -> ParamVec {
    let mut d = like.clone();
    for v in d.values_mut() {
        *v = 0.0;
    }
    *d.get_mut(i).unwrap() = 1.0;
    d
}

/// Central finite difference of the batch loss along coordinate `i`.
pub fn numeric_partial(model: &Model, batch: &[Event], i: usize, h: f64) -> f64 {
    let e = unit(&model.params(), i);
    let mut plus = model.clone();
    plus.add_scaled(h, &e).unwrap();
    let mut minus = model.clone();
    minus.add_scaled(-h, &e).unwrap();
    (plus.loss(batch).unwrap() - minus.loss(batch).unwrap()) / (2.0 * h)
}

/// `|a - n| / max(|a|, |n|)`, zero when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}
