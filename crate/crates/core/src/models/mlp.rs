//! The MLP predictor with optional per-user conditioning.
//!
//! The backbone maps `x` through ReLU hidden layers to unnormalized logits.
//! A user embedding can condition it through a residual MLP
//! `h <- h + W2 relu(W1 [h ; e_u] + b1) + b2` placed at one of three sites:
//!
//! * `encoder`: on the input features, before the first layer;
//! * `decoder`: on the last hidden activation, before the output layer;
//! * `adapter`: after every hidden layer, one residual MLP each.
//!
//! Residual output layers start at zero and new users start with a zero
//! embedding, so a freshly built conditioned model computes exactly what the
//! agnostic backbone computes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{relu_backward_in_place, relu_in_place, Matrix};
use super::params::ParamVec;
use crate::error::{Error, Result};
use crate::streams::{Event, UserId};

/// Where (if anywhere) the user embedding enters the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditioningKind {
    Agnostic,
    Encoder,
    Decoder,
    Adapter,
}

impl ConditioningKind {
    pub const ALL: [ConditioningKind; 4] = [
        ConditioningKind::Agnostic,
        ConditioningKind::Encoder,
        ConditioningKind::Decoder,
        ConditioningKind::Adapter,
    ];
}

impl fmt::Display for ConditioningKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditioningKind::Agnostic => "agnostic",
            ConditioningKind::Encoder => "encoder",
            ConditioningKind::Decoder => "decoder",
            ConditioningKind::Adapter => "adapter",
        })
    }
}

impl FromStr for ConditioningKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agnostic" => Ok(ConditioningKind::Agnostic),
            "encoder" => Ok(ConditioningKind::Encoder),
            "decoder" => Ok(ConditioningKind::Decoder),
            "adapter" => Ok(ConditioningKind::Adapter),
            other => Err(Error::Config(format!(
                "unknown conditioning mode `{other}` (expected agnostic, encoder, decoder or adapter)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub mode: ConditioningKind,
    pub user_dim: usize,
    pub residual_hidden: usize,
}

impl ModelConfig {
    /// Two hidden layers of 100 units, agnostic.
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        ModelConfig {
            input_dim,
            hidden: vec![100, 100],
            output_dim,
            mode: ConditioningKind::Agnostic,
            user_dim: 32,
            residual_hidden: 16,
        }
    }

    pub fn with_mode(mut self, mode: ConditioningKind) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("model input and output sizes must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        if self.mode != ConditioningKind::Agnostic && (self.user_dim == 0 || self.residual_hidden == 0) {
            return Err(Error::Config(
                "conditioned models need positive user and residual sizes".into(),
            ));
        }
        if self.mode == ConditioningKind::Decoder && self.hidden.is_empty() {
            return Err(Error::Config("decoder conditioning needs a hidden layer".into()));
        }
        Ok(())
    }
}

/// Fully connected layer, `y = x Wᵀ + b` with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in ±1/sqrt(fan_in) for weights and biases.
    fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut layer = Dense::zeros(inputs, outputs);
        for w in layer.weight.data_mut() {
            *w = rng.random_range(-bound..bound);
        }
        for b in &mut layer.bias {
            *b = rng.random_range(-bound..bound);
        }
        layer
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul_nt(&self.weight)?;
        z.add_row_vector(&self.bias);
        Ok(z)
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    fn backward(&self, input: &Matrix, dz: &Matrix, grad: &mut Dense) -> Result<Matrix> {
        grad.weight.add_assign(&dz.matmul_tn(input)?);
        for (g, s) in grad.bias.iter_mut().zip(dz.column_sums()) {
            *g += s;
        }
        dz.matmul(&self.weight)
    }

    fn tensors(&self) -> [&[f64]; 2] {
        [self.weight.data(), &self.bias]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weight.data_mut(), &mut self.bias]
    }
}

/// Backbone parameters shared by every user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedParams {
    pub layers: Vec<Dense>,
}

impl SharedParams {
    fn random<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let sizes = layer_sizes(cfg);
        let layers = sizes.windows(2).map(|w| Dense::random(w[0], w[1], rng)).collect();
        SharedParams { layers }
    }

    fn zeros_like(&self) -> Self {
        SharedParams {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.weight.cols(), l.weight.rows()))
                .collect(),
        }
    }
}

fn layer_sizes(cfg: &ModelConfig) -> Vec<usize> {
    let mut sizes = vec![cfg.input_dim];
    sizes.extend(&cfg.hidden);
    sizes.push(cfg.output_dim);
    sizes
}

/// `h + W2 relu(W1 [h ; e] + b1) + b2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualMlp {
    pub inner: Dense,
    pub outer: Dense,
}

struct ResidualCache {
    concat: Matrix,
    pre: Matrix,
    act: Matrix,
}

impl ResidualMlp {
    fn new<R: Rng + ?Sized>(dim: usize, user_dim: usize, hidden: usize, rng: &mut R) -> Self {
        ResidualMlp {
            inner: Dense::random(dim + user_dim, hidden, rng),
            outer: Dense::zeros(hidden, dim),
        }
    }

    fn zeros_like(&self) -> Self {
        ResidualMlp {
            inner: Dense::zeros(self.inner.weight.cols(), self.inner.weight.rows()),
            outer: Dense::zeros(self.outer.weight.cols(), self.outer.weight.rows()),
        }
    }

    fn dim(&self) -> usize {
        self.outer.weight.rows()
    }

    fn forward(&self, h: Matrix, emb: &Matrix) -> Result<(Matrix, ResidualCache)> {
        let concat = h.hcat(emb)?;
        let pre = self.inner.forward(&concat)?;
        let mut act = pre.clone();
        relu_in_place(&mut act);
        let mut out = self.outer.forward(&act)?;
        out.add_assign(&h);
        Ok((out, ResidualCache { concat, pre, act }))
    }

    /// Returns `(dL/dh, dL/de)`.
    fn backward(&self, d_out: Matrix, cache: &ResidualCache, grad: &mut ResidualMlp) -> Result<(Matrix, Matrix)> {
        let mut d_act = self.outer.backward(&cache.act, &d_out, &mut grad.outer)?;
        relu_backward_in_place(&mut d_act, &cache.pre);
        let d_concat = self.inner.backward(&cache.concat, &d_act, &mut grad.inner)?;
        let (mut d_h, d_emb) = d_concat.hsplit(self.dim());
        d_h.add_assign(&d_out);
        Ok((d_h, d_emb))
    }
}

/// The user-conditioning variant together with its residual-MLP parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Conditioning {
    Agnostic,
    Encoder(ResidualMlp),
    Decoder(ResidualMlp),
    Adapter(Vec<ResidualMlp>),
}

impl Conditioning {
    fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let (du, hid) = (cfg.user_dim, cfg.residual_hidden);
        match cfg.mode {
            ConditioningKind::Agnostic => Conditioning::Agnostic,
            ConditioningKind::Encoder => Conditioning::Encoder(ResidualMlp::new(cfg.input_dim, du, hid, rng)),
            ConditioningKind::Decoder => {
                let dim = cfg.hidden.last().copied().unwrap_or(cfg.input_dim);
                Conditioning::Decoder(ResidualMlp::new(dim, du, hid, rng))
            }
            ConditioningKind::Adapter => {
                Conditioning::Adapter(cfg.hidden.iter().map(|&h| ResidualMlp::new(h, du, hid, rng)).collect())
            }
        }
    }

    pub fn kind(&self) -> ConditioningKind {
        match self {
            Conditioning::Agnostic => ConditioningKind::Agnostic,
            Conditioning::Encoder(_) => ConditioningKind::Encoder,
            Conditioning::Decoder(_) => ConditioningKind::Decoder,
            Conditioning::Adapter(_) => ConditioningKind::Adapter,
        }
    }

    pub fn residuals(&self) -> &[ResidualMlp] {
        match self {
            Conditioning::Agnostic => &[],
            Conditioning::Encoder(r) | Conditioning::Decoder(r) => std::slice::from_ref(r),
            Conditioning::Adapter(rs) => rs,
        }
    }

    pub fn residuals_mut(&mut self) -> &mut [ResidualMlp] {
        match self {
            Conditioning::Agnostic => &mut [],
            Conditioning::Encoder(r) | Conditioning::Decoder(r) => std::slice::from_mut(r),
            Conditioning::Adapter(rs) => rs,
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            Conditioning::Agnostic => Conditioning::Agnostic,
            Conditioning::Encoder(r) => Conditioning::Encoder(r.zeros_like()),
            Conditioning::Decoder(r) => Conditioning::Decoder(r.zeros_like()),
            Conditioning::Adapter(rs) => Conditioning::Adapter(rs.iter().map(ResidualMlp::zeros_like).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserEntry {
    pub embedding: Vec<f64>,
    /// Stream step at which the user was first seen.
    pub created_at: u64,
}

/// Lazily grown per-user embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserTable {
    dim: usize,
    entries: BTreeMap<UserId, UserEntry>,
}

impl UserTable {
    pub fn new(dim: usize) -> Self {
        UserTable {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, user: UserId) -> Option<&UserEntry> {
        self.entries.get(&user)
    }

    /// Creates a zero embedding for `user` unless one exists. Returns true if created.
    pub fn ensure(&mut self, user: UserId, t: u64) -> bool {
        if self.entries.contains_key(&user) {
            return false;
        }
        self.entries.insert(
            user,
            UserEntry {
                embedding: vec![0.0; self.dim],
                created_at: t,
            },
        );
        true
    }

    pub fn embedding_mut(&mut self, user: UserId) -> Option<&mut Vec<f64>> {
        self.entries.get_mut(&user).map(|e| &mut e.embedding)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UserId, &UserEntry)> {
        self.entries.iter()
    }

    /// Unknown users read as the zero embedding.
    fn embedding_rows(&self, users: &[UserId]) -> Matrix {
        let mut m = Matrix::zeros(users.len(), self.dim);
        for (r, u) in users.iter().enumerate() {
            if let Some(e) = self.entries.get(u) {
                m.row_mut(r).copy_from_slice(&e.embedding);
            }
        }
        m
    }
}

/// Loss and accuracy of a model on a batch, without gradients.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchEval {
    pub total_loss: f64,
    pub correct: usize,
    pub count: usize,
}

impl BatchEval {
    pub fn mean_loss(&self) -> f64 {
        self.total_loss / self.count as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.count as f64
    }

    pub fn merge(&mut self, other: BatchEval) {
        self.total_loss += other.total_loss;
        self.correct += other.correct;
        self.count += other.count;
    }
}

/// Shared backbone, conditioning block and user table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    config: ModelConfig,
    pub shared: SharedParams,
    pub conditioning: Conditioning,
    pub users: UserTable,
}

struct Activations {
    logits: Matrix,
    encoder: Option<ResidualCache>,
    /// `(layer input, pre-activation)` for every layer including the output.
    layers: Vec<(Matrix, Matrix)>,
    /// Residual caches after hidden layers (adapter: every layer, decoder: last).
    residuals: Vec<Option<ResidualCache>>,
    emb: Option<Matrix>,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let shared = SharedParams::random(&config, rng);
        let conditioning = Conditioning::new(&config, rng);
        let users = UserTable::new(config.user_dim);
        Ok(Model {
            config,
            shared,
            conditioning,
            users,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mode(&self) -> ConditioningKind {
        self.config.mode
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.config.output_dim
    }

    /// Registers every user of `events` that has no embedding yet.
    pub fn register_users(&mut self, events: &[Event], t: u64) {
        if self.mode() == ConditioningKind::Agnostic {
            return;
        }
        for e in events {
            self.users.ensure(e.user, t);
        }
    }

    /// Logits for a single context.
    pub fn forward(&self, x: &[f64], user: UserId) -> Result<Vec<f64>> {
        let xs = Matrix::from_rows(self.config.input_dim, [x]).map_err(|_| {
            Error::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.config.input_dim
            ))
        })?;
        Ok(self.logits(&xs, &[user])?.into_data())
    }

    /// Logits for a batch of contexts, one user per row.
    pub fn logits(&self, xs: &Matrix, users: &[UserId]) -> Result<Matrix> {
        Ok(self.run(xs.clone(), users)?.logits)
    }

    fn run(&self, xs: Matrix, users: &[UserId]) -> Result<Activations> {
        if xs.cols() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                xs.cols(),
                self.config.input_dim
            )));
        }
        if xs.rows() != users.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} user ids",
                xs.rows(),
                users.len()
            )));
        }
        let emb = match self.conditioning {
            Conditioning::Agnostic => None,
            _ => Some(self.users.embedding_rows(users)),
        };
        let mut h = xs;
        let mut encoder = None;
        if let (Conditioning::Encoder(r), Some(e)) = (&self.conditioning, &emb) {
            let (out, cache) = r.forward(h, e)?;
            h = out;
            encoder = Some(cache);
        }
        let n_hidden = self.shared.layers.len() - 1;
        let mut layers = Vec::with_capacity(n_hidden + 1);
        let mut residuals = Vec::with_capacity(n_hidden);
        for (l, layer) in self.shared.layers.iter().enumerate() {
            let pre = layer.forward(&h)?;
            if l == n_hidden {
                layers.push((h, pre));
                break;
            }
            let mut act = pre.clone();
            relu_in_place(&mut act);
            layers.push((h, pre));
            h = act;
            let block = match &self.conditioning {
                Conditioning::Adapter(rs) => Some(&rs[l]),
                Conditioning::Decoder(r) if l + 1 == n_hidden => Some(r),
                _ => None,
            };
            match (block, &emb) {
                (Some(r), Some(e)) => {
                    let (out, cache) = r.forward(h, e)?;
                    h = out;
                    residuals.push(Some(cache));
                }
                _ => residuals.push(None),
            }
        }
        let logits = layers.last().map(|(_, z)| z.clone()).expect("at least one layer");
        logits.ensure_finite("forward activations")?;
        Ok(Activations {
            logits,
            encoder,
            layers,
            residuals,
            emb,
        })
    }

    fn check_batch(&self, batch: &[Event]) -> Result<(Matrix, Vec<UserId>)> {
        if batch.is_empty() {
            return Err(Error::Contract("loss requested on an empty batch".into()));
        }
        for e in batch {
            if e.y as usize >= self.config.output_dim {
                return Err(Error::Input(format!(
                    "label {} of event {} outside 0..{}",
                    e.y, e.id, self.config.output_dim
                )));
            }
        }
        let xs = Matrix::from_rows(self.config.input_dim, batch.iter().map(|e| &e.x[..]))
            .map_err(|e| Error::Shape(format!("batch inputs: {e}")))?;
        Ok((xs, batch.iter().map(|e| e.user).collect()))
    }

    /// Summed cross-entropy and number of correct argmax predictions.
    pub fn evaluate(&self, batch: &[Event]) -> Result<BatchEval> {
        let (xs, users) = self.check_batch(batch)?;
        let logits = self.run(xs, &users)?.logits;
        let mut eval = BatchEval {
            count: batch.len(),
            ..Default::default()
        };
        for (r, e) in batch.iter().enumerate() {
            let row = logits.row(r);
            eval.total_loss += log_sum_exp(row) - row[e.y as usize];
            if argmax(row) == e.y as usize {
                eval.correct += 1;
            }
        }
        Ok(eval)
    }

    /// Mean cross-entropy (nats) over `batch`.
    pub fn loss(&self, batch: &[Event]) -> Result<f64> {
        Ok(self.evaluate(batch)?.mean_loss())
    }

    /// Mean cross-entropy and its gradient with respect to every shared
    /// parameter and every user embedding touched by `batch`.
    pub fn loss_and_grad(&self, batch: &[Event]) -> Result<(f64, ParamVec)> {
        let (xs, users) = self.check_batch(batch)?;
        let acts = self.run(xs, &users)?;
        let n = batch.len() as f64;

        let mut d = acts.logits.clone();
        let mut loss = 0.0;
        for (r, e) in batch.iter().enumerate() {
            let row = d.row_mut(r);
            let lse = log_sum_exp(row);
            loss += lse - row[e.y as usize];
            for v in row.iter_mut() {
                *v = (*v - lse).exp() / n;
            }
            row[e.y as usize] -= 1.0 / n;
        }
        loss /= n;

        let mut g_shared = self.shared.zeros_like();
        let mut g_cond = self.conditioning.zeros_like();
        let mut d_emb: Option<Matrix> = acts.emb.as_ref().map(|e| Matrix::zeros(e.rows(), e.cols()));

        let n_hidden = self.shared.layers.len() - 1;
        for l in (0..=n_hidden).rev() {
            if l < n_hidden {
                if let Some(cache) = &acts.residuals[l] {
                    let idx = match self.conditioning {
                        Conditioning::Adapter(_) => l,
                        _ => 0,
                    };
                    let block = &self.conditioning.residuals()[idx];
                    let (d_h, de) = block.backward(d, cache, &mut g_cond.residuals_mut()[idx])?;
                    d = d_h;
                    if let Some(acc) = d_emb.as_mut() {
                        acc.add_assign(&de);
                    }
                }
                relu_backward_in_place(&mut d, &acts.layers[l].1);
            }
            let (input, _) = &acts.layers[l];
            d = self.shared.layers[l].backward(input, &d, &mut g_shared.layers[l])?;
        }
        if let (Conditioning::Encoder(r), Some(cache)) = (&self.conditioning, &acts.encoder) {
            let (_, de) = r.backward(d, cache, &mut g_cond.residuals_mut()[0])?;
            if let Some(acc) = d_emb.as_mut() {
                acc.add_assign(&de);
            }
        }

        let mut grad = ParamVec::new(flatten_parts(&g_shared, &g_cond));
        if let Some(de) = d_emb {
            for (r, u) in users.iter().enumerate() {
                let g = grad.users.entry(*u).or_insert_with(|| vec![0.0; de.cols()]);
                for (a, b) in g.iter_mut().zip(de.row(r)) {
                    *a += b;
                }
            }
        }
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::Numeric("loss or gradient".into()));
        }
        Ok((loss, grad))
    }

    /// Number of shared (backbone plus residual) parameters.
    pub fn shared_len(&self) -> usize {
        tensors(&self.shared, &self.conditioning).map(<[f64]>::len).sum()
    }

    /// Shared parameters flattened layer by layer (weights then bias),
    /// backbone first, residual blocks after.
    pub fn flatten_shared(&self) -> Vec<f64> {
        flatten_parts(&self.shared, &self.conditioning)
    }

    pub fn unflatten_shared(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.shared_len() {
            return Err(Error::Shape(format!(
                "{} values for {} shared parameters",
                flat.len(),
                self.shared_len()
            )));
        }
        let mut offset = 0;
        for t in tensors_mut(&mut self.shared, &mut self.conditioning) {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    /// Shared parameters plus embeddings of every registered user.
    pub fn params(&self) -> ParamVec {
        let mut p = ParamVec::new(self.flatten_shared());
        if self.mode() != ConditioningKind::Agnostic {
            for (u, e) in self.users.iter() {
                p.users.insert(*u, e.embedding.clone());
            }
        }
        p
    }

    /// Applies `θ += alpha * delta`; user entries missing from the table are created.
    pub fn add_scaled(&mut self, alpha: f64, delta: &ParamVec) -> Result<()> {
        if delta.shared.len() != self.shared_len() {
            return Err(Error::Shape(format!(
                "update has {} shared values, model has {}",
                delta.shared.len(),
                self.shared_len()
            )));
        }
        let mut offset = 0;
        for t in tensors_mut(&mut self.shared, &mut self.conditioning) {
            for (p, d) in t.iter_mut().zip(&delta.shared[offset..]) {
                *p += alpha * d;
            }
            offset += t.len();
        }
        if self.mode() == ConditioningKind::Agnostic {
            return Ok(());
        }
        for (u, d) in &delta.users {
            if d.len() != self.users.dim() {
                return Err(Error::Shape(format!(
                    "embedding update for user {u} has {} values, expected {}",
                    d.len(),
                    self.users.dim()
                )));
            }
            self.users.ensure(*u, 0);
            let e = self.users.embedding_mut(*u).expect("just ensured");
            for (p, v) in e.iter_mut().zip(d) {
                *p += alpha * v;
            }
        }
        Ok(())
    }

    /// Users with embeddings.
    pub fn known_users(&self) -> BTreeSet<UserId> {
        self.users.iter().map(|(u, _)| *u).collect()
    }
}

fn tensors<'a>(shared: &'a SharedParams, cond: &'a Conditioning) -> impl Iterator<Item = &'a [f64]> {
    shared.layers.iter().flat_map(Dense::tensors).chain(
        cond.residuals()
            .iter()
            .flat_map(|r| r.inner.tensors().into_iter().chain(r.outer.tensors())),
    )
}

fn tensors_mut<'a>(shared: &'a mut SharedParams, cond: &'a mut Conditioning) -> impl Iterator<Item = &'a mut [f64]> {
    shared
        .layers
        .iter_mut()
        .flat_map(Dense::tensors_mut)
        .chain(cond.residuals_mut().iter_mut().flat_map(|r| {
            let ResidualMlp { inner, outer } = r;
            inner.tensors_mut().into_iter().chain(outer.tensors_mut())
        }))
}

fn flatten_parts(shared: &SharedParams, cond: &Conditioning) -> Vec<f64> {
    let mut flat = Vec::new();
    for t in tensors(shared, cond) {
        flat.extend_from_slice(t);
    }
    flat
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// First index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// `exp(mean_nll)`.
pub fn perplexity(mean_nll: f64) -> f64 {
    mean_nll.exp()
}
