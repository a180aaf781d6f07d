//! Event sources: the synthetic multi-user stream, task-sequence image
//! benchmarks, and JSON Lines event files.
//!
//! A [`StreamSource`] is a replayable description of a stream: every call to
//! [`StreamSource::open`] yields the same event sequence, which is what the
//! retention and decomposition diagnostics rely on instead of storing history.

mod benchmark;
mod event;
pub mod idx;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample;

pub use benchmark::{
    BenchmarkData, BenchmarkDataset, BenchmarkStream, BenchmarkStreamConfig, LabeledImages, Task, TaskPlan,
    TEST_ID_BASE,
};
pub use event::{Event, UserId};
pub use idx::{parse_idx, read_idx, IdxArray, IdxData};
pub use synthetic::{gen_user_chain, random_chain, sample_row, ScheduleEntry, SyntheticPollConfig, SyntheticStream};

use crate::error::{Error, Result};
use crate::rng;

/// A sequence of event batches. `None` signals the end of the stream.
pub trait EventStream {
    fn next_batch(&mut self) -> Option<Vec<Event>>;
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
}

#[derive(Clone, Debug)]
enum Origin {
    Synthetic {
        cfg: SyntheticPollConfig,
        seed: u64,
    },
    Benchmark(TaskPlan),
    Recorded {
        batches: Arc<Vec<Vec<Event>>>,
        input_dim: usize,
        num_classes: usize,
    },
}

/// Replayable stream description, optionally with events withheld for testing.
#[derive(Clone, Debug)]
pub struct StreamSource {
    origin: Origin,
    withheld: Arc<BTreeSet<u64>>,
}

impl StreamSource {
    pub fn synthetic(cfg: SyntheticPollConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(StreamSource {
            origin: Origin::Synthetic { cfg, seed },
            withheld: Default::default(),
        })
    }

    pub fn benchmark(plan: TaskPlan) -> Self {
        StreamSource {
            origin: Origin::Benchmark(plan),
            withheld: Default::default(),
        }
    }

    /// Loads the dataset files and builds the seeded task plan.
    pub fn load_benchmark(cfg: &BenchmarkStreamConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let data = Arc::new(BenchmarkData::load(&cfg.data_dir)?);
        Ok(Self::benchmark(TaskPlan::new(cfg, data, seed)?))
    }

    /// Replays recorded events, one batch per distinct `t` in order of appearance.
    pub fn recorded(events: Vec<Event>, num_classes: Option<usize>) -> Result<Self> {
        let input_dim = events
            .first()
            .map(|e| e.x.len())
            .ok_or_else(|| Error::Config("recorded stream has no events".into()))?;
        if let Some(e) = events.iter().find(|e| e.x.len() != input_dim) {
            return Err(Error::Input(format!(
                "event {} has {} features, expected {input_dim}",
                e.id,
                e.x.len()
            )));
        }
        let classes = events.iter().map(|e| e.y as usize + 1).max().unwrap_or(1);
        let num_classes = num_classes.unwrap_or(classes);
        if classes > num_classes {
            return Err(Error::Input(format!("labels exceed {num_classes} classes")));
        }
        let mut batches: Vec<Vec<Event>> = Vec::new();
        for e in events {
            match batches.last_mut() {
                Some(b) if b[0].t == e.t => b.push(e),
                _ => batches.push(vec![e]),
            }
        }
        Ok(StreamSource {
            origin: Origin::Recorded {
                batches: Arc::new(batches),
                input_dim,
                num_classes,
            },
            withheld: Default::default(),
        })
    }

    pub fn open(&self) -> Result<Box<dyn EventStream + Send>> {
        let inner: Box<dyn EventStream + Send> = match &self.origin {
            Origin::Synthetic { cfg, seed } => Box::new(SyntheticStream::new(cfg.clone(), *seed)?),
            Origin::Benchmark(plan) => Box::new(plan.stream()),
            Origin::Recorded {
                batches,
                input_dim,
                num_classes,
            } => Box::new(Replay {
                batches: batches.clone(),
                next: 0,
                input_dim: *input_dim,
                num_classes: *num_classes,
            }),
        };
        if self.withheld.is_empty() {
            Ok(inner)
        } else {
            Ok(Box::new(Filtered {
                inner,
                withheld: self.withheld.clone(),
            }))
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.origin {
            Origin::Synthetic { cfg, .. } => cfg.input_dim(),
            Origin::Benchmark(plan) => plan.input_dim(),
            Origin::Recorded { input_dim, .. } => *input_dim,
        }
    }

    pub fn num_classes(&self) -> usize {
        match &self.origin {
            Origin::Synthetic { cfg, .. } => cfg.vocab,
            Origin::Benchmark(plan) => plan.num_classes(),
            Origin::Recorded { num_classes, .. } => *num_classes,
        }
    }

    /// Number of batches the stream yields before withholding.
    pub fn step_hint(&self) -> usize {
        match &self.origin {
            Origin::Synthetic { cfg, .. } => cfg.steps as usize,
            Origin::Benchmark(plan) => plan
                .tasks
                .iter()
                .map(|t| t.train.len().div_ceil(plan.batch_size.max(1)))
                .sum(),
            Origin::Recorded { batches, .. } => batches.len(),
        }
    }

    /// The benchmark's own test split, if the source has one.
    pub fn task_plan(&self) -> Option<&TaskPlan> {
        match &self.origin {
            Origin::Benchmark(plan) => Some(plan),
            _ => None,
        }
    }

    pub fn withheld(&self) -> &BTreeSet<u64> {
        &self.withheld
    }

    /// Every batch of the stream, in order.
    pub fn collect_batches(&self) -> Result<Vec<Vec<Event>>> {
        let mut s = self.open()?;
        let mut out = Vec::new();
        while let Some(b) = s.next_batch() {
            out.push(b);
        }
        Ok(out)
    }
}

struct Filtered {
    inner: Box<dyn EventStream + Send>,
    withheld: Arc<BTreeSet<u64>>,
}

impl EventStream for Filtered {
    fn next_batch(&mut self) -> Option<Vec<Event>> {
        loop {
            let mut batch = self.inner.next_batch()?;
            batch.retain(|e| !self.withheld.contains(&e.id));
            if !batch.is_empty() {
                return Some(batch);
            }
        }
    }

    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }
}

struct Replay {
    batches: Arc<Vec<Vec<Event>>>,
    next: usize,
    input_dim: usize,
    num_classes: usize,
}

impl EventStream for Replay {
    fn next_batch(&mut self) -> Option<Vec<Event>> {
        let b = self.batches.get(self.next)?.clone();
        self.next += 1;
        Some(b)
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// Withholds `k` randomly chosen events per user from the stream.
///
/// Returns the filtered training source and the test set (exactly `k` events
/// for every user that appears in the stream). Users with `k` or fewer events
/// make the split impossible and are reported as a configuration error.
pub fn holdout_split(source: &StreamSource, k: usize, rng: &mut rng::Rng) -> Result<(StreamSource, Vec<Event>)> {
    if k == 0 {
        return Ok((source.clone(), Vec::new()));
    }
    let mut per_user: BTreeMap<UserId, Vec<u64>> = BTreeMap::new();
    let mut s = source.open()?;
    while let Some(batch) = s.next_batch() {
        for e in batch {
            per_user.entry(e.user).or_default().push(e.id);
        }
    }
    let mut chosen = BTreeSet::new();
    for (user, ids) in &per_user {
        if ids.len() <= k {
            return Err(Error::Config(format!(
                "user {user} has {} events, cannot withhold {k}",
                ids.len()
            )));
        }
        for i in sample(rng, ids.len(), k) {
            chosen.insert(ids[i]);
        }
    }
    let mut test = Vec::with_capacity(chosen.len());
    let mut s = source.open()?;
    while let Some(batch) = s.next_batch() {
        test.extend(batch.into_iter().filter(|e| chosen.contains(&e.id)));
    }
    let mut withheld = (*source.withheld).clone();
    withheld.extend(chosen);
    let train = StreamSource {
        origin: source.origin.clone(),
        withheld: Arc::new(withheld),
    };
    Ok((train, test))
}

/// Held-out events, either materialized or generated from a benchmark plan.
#[derive(Clone, Debug)]
pub enum TestSet {
    Events(Vec<Event>),
    Benchmark(TaskPlan),
}

impl TestSet {
    pub fn len(&self) -> usize {
        match self {
            TestSet::Events(e) => e.len(),
            TestSet::Benchmark(plan) => plan.test_len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn for_each_chunk<F>(&self, chunk: usize, mut f: F) -> Result<()>
    where
        F: FnMut(&[Event]) -> Result<()>,
    {
        match self {
            TestSet::Events(events) => events.chunks(chunk.max(1)).try_for_each(f),
            TestSet::Benchmark(plan) => plan.for_each_test_chunk(chunk, &mut f),
        }
    }
}

/// Writes events as JSON Lines, one event object per line.
pub fn write_jsonl(path: &Path, events: &[Event]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in events {
        serde_json::to_writer(&mut w, e).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Event>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Event =
            serde_json::from_str(&line).map_err(|err| Error::Input(format!("{}:{}: {err}", path.display(), n + 1)))?;
        events.push(e);
    }
    Ok(events)
}
