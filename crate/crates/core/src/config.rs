//! Run configuration files.
//!
//! The format is line-oriented `key = value` with dotted section names:
//!
//! ```text
//! # comment
//! seed = 3
//! stream.kind = permuted-mnist
//! [optim]            # later keys are read as optim.<key>
//! k = 5
//! ```
//!
//! Every key has a default (see [`KEYS`]); unknown keys and malformed values
//! are rejected with the line they came from. Values given on the command
//! line with `--set key=value` override the file.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::buffers::{ReplayStrategy, ValidationStrategy};
use crate::error::{Error, Result};
use crate::learners::LearnerKind;
use crate::models::{ConditioningKind, ModelConfig};
use crate::optim::{OptimConfig, Optimizer, StepRule};
use crate::protocol::{EvalConfig, EvalEvery, GameConfig};
use crate::streams::{BenchmarkDataset, BenchmarkStreamConfig, ScheduleEntry, SyntheticPollConfig};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "CONGRAD_OUTPUT_ROOT";

/// Every accepted key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "seed for data order, initialization and sampling"),
    (
        "stream.kind",
        "synthetic",
        "synthetic | permuted-mnist | disjoint-mnist | disjoint-cifar | jsonl",
    ),
    (
        "stream.data_dir",
        "",
        "directory with the four IDX files (benchmark streams)",
    ),
    ("stream.path", "", "JSON Lines event file (jsonl streams)"),
    (
        "stream.num_classes",
        "",
        "label count for jsonl streams; default max label + 1",
    ),
    ("stream.batch_size", "10", "events per step"),
    (
        "stream.tasks",
        "",
        "benchmark task count; default 10 permuted, 5 disjoint",
    ),
    (
        "stream.examples_per_task",
        "",
        "cap on training examples per task; default all",
    ),
    ("stream.test_per_task", "", "cap on test examples per task; default all"),
    ("synthetic.vocab", "32", "vocabulary size"),
    ("synthetic.context", "4", "context length in tokens"),
    ("synthetic.users", "10", "users active at the start"),
    ("synthetic.epsilon", "0.3", "per-user perturbation of the base chain"),
    (
        "synthetic.concentration",
        "0.2",
        "Dirichlet concentration of chain rows",
    ),
    (
        "synthetic.schedule",
        "",
        "population changes, `step:add:drop` separated by commas",
    ),
    ("synthetic.steps", "500", "stream length in steps"),
    (
        "synthetic.drift",
        "0",
        "per-step mixing toward each user's drift target",
    ),
    ("synthetic.rate_skew", "0", "power-law exponent of user activity"),
    (
        "synthetic.chain_seed",
        "",
        "seed of the base chain; default the run seed",
    ),
    ("model.mode", "agnostic", "agnostic | encoder | decoder | adapter"),
    ("model.hidden", "100,100", "hidden layer sizes"),
    ("model.user_dim", "32", "user embedding size"),
    ("model.residual_hidden", "16", "hidden size of conditioning blocks"),
    (
        "learner.kind",
        "online-only",
        "online-only | replay-only | mixed-replay | a-gem",
    ),
    (
        "learner.replay_sample",
        "",
        "replay draws per step; default the displaced batch size",
    ),
    (
        "learner.mix_fraction",
        "0.5",
        "replay share of mixed batches when replay_sample is unset",
    ),
    ("optim.optimizer", "congrad", "online-gd | congrad"),
    ("optim.rule", "adam", "sgd | adam"),
    ("optim.lr", "0.00025", "base learning rate"),
    ("optim.warmup", "2000", "linear warm-up steps; 0 disables"),
    ("optim.clip", "0.25", "gradient norm clip; `none` disables"),
    ("optim.k", "5", "gradient steps per batch (maximum for congrad)"),
    (
        "optim.stop_tolerance",
        "",
        "stop stepping when the gradient norm is at most this",
    ),
    (
        "optim.include_zero",
        "true",
        "whether congrad may keep the un-updated model",
    ),
    ("optim.beta1", "0.9", "Adam first-moment decay"),
    ("optim.beta2", "0.999", "Adam second-moment decay"),
    ("optim.eps", "1e-8", "Adam denominator offset"),
    ("buffers.replay_capacity", "300", "replay memory size"),
    (
        "buffers.replay_strategy",
        "reservoir",
        "reservoir | per-user-fifo:<quota>",
    ),
    ("buffers.vbuf_capacity", "50", "validation buffer size (congrad only)"),
    ("buffers.vbuf_strategy", "fifo", "fifo | reservoir | stratified"),
    (
        "eval.every",
        "auto",
        "periodic evaluation interval: auto (T/20), never or a step count",
    ),
    ("eval.horizon", "all", "oldest age in retention curves, or `all`"),
    (
        "eval.periodic_retention",
        "true",
        "compute retention curves at periodic evaluations",
    ),
    ("eval.diag_every", "0", "decomposition diagnostics interval; 0 disables"),
    ("eval.diag_history", "all", "past batches per diagnostic, or `all`"),
    (
        "eval.test_k",
        "10",
        "held-out events per user (synthetic and jsonl streams)",
    ),
    (
        "eval.cross_user",
        "false",
        "also score held-out events under another user",
    ),
    (
        "output.dir",
        "",
        "output root; default $CONGRAD_OUTPUT_ROOT, then ./runs",
    ),
    ("output.name", "", "run directory prefix; default the stream kind"),
    (
        "output.dump_buffers",
        "false",
        "write the final buffer contents (event ids)",
    ),
    (
        "output.export_stream",
        "false",
        "write the training stream as JSON Lines",
    ),
    ("sweep.axis", "", "k | vbuf-size | vbuf-strategy | learner"),
    ("sweep.values", "", "comma-separated axis values"),
    ("sweep.seeds", "", "seeds per cell; default the run seed"),
    (
        "sweep.optimizers",
        "online-gd,congrad",
        "optimizers crossed with the axis",
    ),
];

/// Where a value came from, for diagnostics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Default,
    Line(usize),
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => f.write_str("default"),
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override => f.write_str("command line"),
        }
    }
}

/// Raw key-value settings with their origins, defaults filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, (String, Origin)>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            values: KEYS
                .iter()
                .map(|(k, d, _)| (k.to_string(), (d.to_string(), Origin::Default)))
                .collect(),
        }
    }
}

fn is_known(key: &str) -> bool {
    KEYS.iter().any(|(k, ..)| *k == key)
}

impl Settings {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        let mut section = String::new();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {n}: unterminated section header")))?
                    .trim();
                if name.is_empty() || !KEYS.iter().any(|(k, ..)| k.starts_with(&format!("{name}."))) {
                    return Err(Error::Config(format!("line {n}: unknown section `{name}`")));
                }
                section = format!("{name}.");
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {n}: expected `key = value`, found `{line}`")))?;
            let key = format!("{section}{}", k.trim());
            if !is_known(&key) {
                return Err(Error::Config(format!("line {n}: unknown key `{key}`")));
            }
            if let Some(prev) = seen.insert(key.clone(), n) {
                return Err(Error::Config(format!("line {n}: `{key}` already set on line {prev}")));
            }
            s.values.insert(key, (unquote(v.trim()).to_string(), Origin::Line(n)));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not `key=value`")))?;
        self.set_value(k.trim(), v.trim())
    }

    pub fn set_value(&mut self, key: &str, value: &str) -> Result<()> {
        if !is_known(key) {
            return Err(Error::Config(format!("unknown key `{key}` on the command line")));
        }
        self.values
            .insert(key.to_string(), (unquote(value).to_string(), Origin::Override));
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(|(v, _)| v.as_str())
            .unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    fn origin(&self, key: &str) -> &Origin {
        &self.values[key].1
    }

    fn invalid(&self, key: &str, why: impl fmt::Display) -> Error {
        Error::Config(format!("{}: `{key}`: {why}", self.origin(key)))
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.get(key);
        v.parse()
            .map_err(|e| self.invalid(key, format!("cannot parse `{v}`: {e}")))
    }

    fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        let v = self.get(key);
        if v.is_empty() || v == "none" || v == "all" {
            Ok(None)
        } else {
            self.parsed(key).map(Some)
        }
    }

    fn required(&self, key: &str) -> Result<&str> {
        let v = self.get(key);
        if v.is_empty() {
            Err(Error::Config(format!("missing required key `{key}`")))
        } else {
            Ok(v)
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| self.invalid(key, format!("cannot parse `{s}`: {e}")))
            })
            .collect()
    }

    /// All settings as configuration text, in [`KEYS`] order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, ..) in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k));
        }
        out
    }

    /// Hex SHA-256 of [`Settings::render`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.render().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum StreamSpec {
    Synthetic(SyntheticPollConfig),
    Benchmark(BenchmarkStreamConfig),
    Jsonl { path: PathBuf, num_classes: Option<usize> },
}

impl StreamSpec {
    pub fn kind(&self) -> String {
        match self {
            StreamSpec::Synthetic(_) => "synthetic".into(),
            StreamSpec::Benchmark(b) => b.dataset.to_string(),
            StreamSpec::Jsonl { .. } => "jsonl".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSpec {
    pub mode: ConditioningKind,
    pub hidden: Vec<usize>,
    pub user_dim: usize,
    pub residual_hidden: usize,
}

impl ModelSpec {
    pub fn build(&self, input_dim: usize, output_dim: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            hidden: self.hidden.clone(),
            output_dim,
            mode: self.mode,
            user_dim: self.user_dim,
            residual_hidden: self.residual_hidden,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    K,
    VbufSize,
    VbufStrategy,
    Learner,
}

impl SweepAxis {
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::K => "optim.k",
            SweepAxis::VbufSize => "buffers.vbuf_capacity",
            SweepAxis::VbufStrategy => "buffers.vbuf_strategy",
            SweepAxis::Learner => "learner.kind",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::K => "k",
            SweepAxis::VbufSize => "vbuf-size",
            SweepAxis::VbufStrategy => "vbuf-strategy",
            SweepAxis::Learner => "learner",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(SweepAxis::K),
            "vbuf-size" => Ok(SweepAxis::VbufSize),
            "vbuf-strategy" => Ok(SweepAxis::VbufStrategy),
            "learner" => Ok(SweepAxis::Learner),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}` (expected k, vbuf-size, vbuf-strategy or learner)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<String>,
    pub seeds: Vec<u64>,
    pub optimizers: Vec<Optimizer>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputSpec {
    pub root: PathBuf,
    pub name: String,
    pub dump_buffers: bool,
    pub export_stream: bool,
}

/// A validated run configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub stream: StreamSpec,
    pub model: ModelSpec,
    pub game: GameConfig,
    pub test_k: usize,
    pub cross_user: bool,
    pub output: OutputSpec,
}

impl RunConfig {
    /// Builds and validates the run described by `s`, including the
    /// existence of every referenced file.
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let seed: u64 = s.parsed("seed")?;
        let batch_size: usize = s.parsed("stream.batch_size")?;
        let kind = s.get("stream.kind");
        let stream = match kind {
            "synthetic" => {
                let cfg = SyntheticPollConfig {
                    vocab: s.parsed("synthetic.vocab")?,
                    context: s.parsed("synthetic.context")?,
                    initial_users: s.parsed("synthetic.users")?,
                    epsilon: s.parsed("synthetic.epsilon")?,
                    concentration: s.parsed("synthetic.concentration")?,
                    schedule: parse_schedule(s)?,
                    batch_size,
                    steps: s.parsed("synthetic.steps")?,
                    drift: s.parsed("synthetic.drift")?,
                    rate_skew: s.parsed("synthetic.rate_skew")?,
                    chain_seed: s.optional("synthetic.chain_seed")?,
                };
                cfg.validate()?;
                StreamSpec::Synthetic(cfg)
            }
            "jsonl" => {
                let path = PathBuf::from(s.required("stream.path")?);
                if !path.is_file() {
                    return Err(s.invalid("stream.path", format!("{} does not exist", path.display())));
                }
                StreamSpec::Jsonl {
                    path,
                    num_classes: s.optional("stream.num_classes")?,
                }
            }
            other => {
                let dataset: BenchmarkDataset = other.parse().map_err(|e: Error| s.invalid("stream.kind", e))?;
                let cfg = BenchmarkStreamConfig {
                    dataset,
                    data_dir: PathBuf::from(s.required("stream.data_dir")?),
                    tasks: s.optional("stream.tasks")?,
                    batch_size,
                    examples_per_task: s.optional("stream.examples_per_task")?,
                    test_per_task: s.optional("stream.test_per_task")?,
                };
                cfg.validate().map_err(|e| s.invalid("stream.data_dir", e))?;
                StreamSpec::Benchmark(cfg)
            }
        };

        let model = ModelSpec {
            mode: s.parsed("model.mode")?,
            hidden: s.list("model.hidden")?,
            user_dim: s.parsed("model.user_dim")?,
            residual_hidden: s.parsed("model.residual_hidden")?,
        };

        let replay_sample: Option<usize> = s.optional("learner.replay_sample")?;
        let learner = match s.parsed::<LearnerKind>("learner.kind")? {
            LearnerKind::ReplayOnly { .. } => LearnerKind::ReplayOnly { sample: replay_sample },
            LearnerKind::MixedReplay { .. } => LearnerKind::MixedReplay {
                fraction: s.parsed("learner.mix_fraction")?,
                sample: replay_sample,
            },
            k => k,
        };
        learner.validate().map_err(|e| s.invalid("learner.mix_fraction", e))?;

        let optim = OptimConfig {
            rule: s.parsed::<StepRule>("optim.rule")?,
            lr: s.parsed("optim.lr")?,
            warmup: s.parsed("optim.warmup")?,
            clip: s.optional("optim.clip")?,
            k: s.parsed("optim.k")?,
            stop_tolerance: s.optional("optim.stop_tolerance")?,
            include_zero: s.parsed("optim.include_zero")?,
            beta1: s.parsed("optim.beta1")?,
            beta2: s.parsed("optim.beta2")?,
            eps: s.parsed("optim.eps")?,
        };
        optim.validate()?;

        let every = match s.get("eval.every") {
            "auto" => EvalEvery::Auto,
            "never" => EvalEvery::Never,
            _ => EvalEvery::Steps(s.parsed("eval.every")?),
        };
        let diag_every: u64 = s.parsed("eval.diag_every")?;
        let eval = EvalConfig {
            every,
            horizon: s.optional("eval.horizon")?,
            periodic_retention: s.parsed("eval.periodic_retention")?,
            diag_every: (diag_every > 0).then_some(diag_every),
            diag_history: s.optional("eval.diag_history")?,
        };

        let game = GameConfig {
            learner,
            optimizer: s.parsed("optim.optimizer")?,
            optim,
            replay_capacity: s.parsed("buffers.replay_capacity")?,
            replay_strategy: s.parsed::<ReplayStrategy>("buffers.replay_strategy")?,
            vbuf_capacity: s.parsed("buffers.vbuf_capacity")?,
            vbuf_strategy: s.parsed::<ValidationStrategy>("buffers.vbuf_strategy")?,
            seed,
            eval,
        };

        let root = match s.get("output.dir") {
            "" => std::env::var_os(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs")),
            d => PathBuf::from(d),
        };
        let name = match s.get("output.name") {
            "" => stream.kind(),
            n => n.to_string(),
        };
        let output = OutputSpec {
            root,
            name,
            dump_buffers: s.parsed("output.dump_buffers")?,
            export_stream: s.parsed("output.export_stream")?,
        };

        Ok(RunConfig {
            seed,
            stream,
            model,
            game,
            test_k: s.parsed("eval.test_k")?,
            cross_user: s.parsed("eval.cross_user")?,
            output,
        })
    }
}

fn parse_schedule(s: &Settings) -> Result<Vec<ScheduleEntry>> {
    let key = "synthetic.schedule";
    s.get(key)
        .split(',')
        .map(str::trim)
        .filter(|e| !e.is_empty())
        .map(|e| {
            let parts: Vec<&str> = e.split(':').collect();
            let nums: Option<Vec<u64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
            match nums.as_deref() {
                Some([step, add, drop]) => Ok(ScheduleEntry {
                    step: *step,
                    add: *add as usize,
                    drop: *drop as usize,
                }),
                _ => Err(s.invalid(key, format!("entry `{e}` is not `step:add:drop`"))),
            }
        })
        .collect()
}

/// Axis, values, seeds and optimizers of a sweep.
pub fn sweep_spec(s: &Settings) -> Result<SweepSpec> {
    let axis: SweepAxis = s.required("sweep.axis")?.parse()?;
    let values: Vec<String> = s.list("sweep.values")?;
    if values.is_empty() {
        return Err(Error::Config("sweep.values is empty".into()));
    }
    let mut seeds: Vec<u64> = s.list("sweep.seeds")?;
    if seeds.is_empty() {
        seeds.push(s.parsed("seed")?);
    }
    let optimizers: Vec<Optimizer> = s.list("sweep.optimizers")?;
    if optimizers.is_empty() {
        return Err(Error::Config("sweep.optimizers is empty".into()));
    }
    Ok(SweepSpec {
        axis,
        values,
        seeds,
        optimizers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_a_synthetic_run() {
        let cfg = RunConfig::from_settings(&Settings::default()).unwrap();
        assert!(matches!(cfg.stream, StreamSpec::Synthetic(_)));
        assert_eq!(cfg.game.optim.lr, 2.5e-4);
        assert_eq!(cfg.game.optim.warmup, 2000);
        assert_eq!(cfg.game.optim.clip, Some(0.25));
        assert_eq!(cfg.game.replay_capacity, 300);
        assert_eq!(cfg.model.hidden, vec![100, 100]);
    }

    #[test]
    fn sections_and_dotted_keys() {
        let s = Settings::parse("seed = 4\n[optim]\nk = 3 # inline\nlr=0.1\n\n[buffers]\nvbuf_capacity = 7\n").unwrap();
        assert_eq!(s.get("optim.k"), "3");
        assert_eq!(s.get("optim.lr"), "0.1");
        let cfg = RunConfig::from_settings(&s).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.game.vbuf_capacity, 7);
    }

    #[test]
    fn unknown_key_names_its_line() {
        let err = Settings::parse("seed = 1\n\noptim.lrr = 3\n").unwrap_err();
        assert_eq!(err.to_string(), "configuration error: line 3: unknown key `optim.lrr`");
        let err = Settings::parse("[nope]\n").unwrap_err();
        assert!(err.to_string().contains("line 1: unknown section"), "{err}");
        let err = Settings::parse("seed 1\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn bad_value_names_its_line() {
        let s = Settings::parse("optim.k = three\n").unwrap();
        let err = RunConfig::from_settings(&s).unwrap_err();
        assert!(err.to_string().contains("line 1: `optim.k`"), "{err}");
    }

    #[test]
    fn duplicate_key_rejected() {
        assert!(Settings::parse("seed = 1\nseed = 2\n").is_err());
    }

    #[test]
    fn missing_dataset_path_names_the_key() {
        let s = Settings::parse("stream.kind = permuted-mnist\n").unwrap();
        let err = RunConfig::from_settings(&s).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("stream.data_dir"), "{err}");
    }

    #[test]
    fn overrides_win() {
        let mut s = Settings::parse("optim.k = 3\n").unwrap();
        s.set("optim.k=9").unwrap();
        assert_eq!(RunConfig::from_settings(&s).unwrap().game.optim.k, 9);
        assert!(s.set("optim.kk=1").is_err());
        assert!(s.set("optim.k").is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut s = Settings::parse("learner.kind = mixed-replay\nsynthetic.schedule = 10:2:1, 20:0:1\n").unwrap();
        s.set("optim.clip=none").unwrap();
        let again = Settings::parse(&s.render()).unwrap();
        assert_eq!(again.render(), s.render());
        assert_eq!(again.hash(), s.hash());
        assert_eq!(
            RunConfig::from_settings(&again).unwrap(),
            RunConfig::from_settings(&s).unwrap()
        );
        assert_eq!(s.hash().len(), 64);
    }

    #[test]
    fn schedule_and_learner_parameters() {
        let s =
            Settings::parse("synthetic.schedule = 10:2:1\nlearner.kind = replay-only\nlearner.replay_sample = 20\n")
                .unwrap();
        let cfg = RunConfig::from_settings(&s).unwrap();
        let StreamSpec::Synthetic(sc) = &cfg.stream else {
            panic!()
        };
        assert_eq!(
            sc.schedule,
            vec![ScheduleEntry {
                step: 10,
                add: 2,
                drop: 1
            }]
        );
        assert_eq!(cfg.game.learner, LearnerKind::ReplayOnly { sample: Some(20) });
        let bad = Settings::parse("synthetic.schedule = 10:2\n").unwrap();
        assert!(RunConfig::from_settings(&bad).is_err());
    }

    #[test]
    fn sweep_settings() {
        let s = Settings::parse("sweep.axis = k\nsweep.values = 1,3,5\nsweep.seeds = 0,1\n").unwrap();
        let sw = sweep_spec(&s).unwrap();
        assert_eq!(sw.axis, SweepAxis::K);
        assert_eq!(sw.values.len(), 3);
        assert_eq!(sw.optimizers, vec![Optimizer::OnlineGd, Optimizer::Congrad]);
        let empty = Settings::parse("sweep.axis = k\n").unwrap();
        assert!(sweep_spec(&empty).unwrap_err().is_config());
    }
}
