//! Task-sequence benchmarks built from an image classification dataset.
//!
//! * Permuted MNIST: every task applies its own fixed pixel permutation.
//! * Disjoint MNIST / CIFAR: the classes are split into groups, one per task.
//!
//! The training stream makes a single pass: task order and the order of
//! examples within each task are shuffled by the seed, and each selected
//! training example is emitted exactly once. The task index (in emission
//! order) is used as the user id.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::idx::{read_idx, IdxArray};
use super::{Event, EventStream, UserId};
use crate::error::{Error, Result};
use crate::rng;

/// Test-event ids start here so they never collide with training ids.
pub const TEST_ID_BASE: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkDataset {
    PermutedMnist,
    DisjointMnist,
    DisjointCifar,
}

impl std::str::FromStr for BenchmarkDataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permuted-mnist" => Ok(BenchmarkDataset::PermutedMnist),
            "disjoint-mnist" => Ok(BenchmarkDataset::DisjointMnist),
            "disjoint-cifar" => Ok(BenchmarkDataset::DisjointCifar),
            other => Err(Error::Config(format!("unknown benchmark dataset `{other}`"))),
        }
    }
}

impl std::fmt::Display for BenchmarkDataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BenchmarkDataset::PermutedMnist => "permuted-mnist",
            BenchmarkDataset::DisjointMnist => "disjoint-mnist",
            BenchmarkDataset::DisjointCifar => "disjoint-cifar",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkStreamConfig {
    pub dataset: BenchmarkDataset,
    /// Directory holding `train-images-idx3-ubyte`, `train-labels-idx1-ubyte`,
    /// `t10k-images-idx3-ubyte` and `t10k-labels-idx1-ubyte`.
    pub data_dir: PathBuf,
    /// Defaults: 10 for permuted, 5 for disjoint.
    pub tasks: Option<usize>,
    pub batch_size: usize,
    /// Cap on training examples per task; `None` uses every example.
    pub examples_per_task: Option<usize>,
    /// Cap on test examples per task; `None` uses every example.
    pub test_per_task: Option<usize>,
}

impl BenchmarkStreamConfig {
    pub fn new(dataset: BenchmarkDataset, data_dir: impl Into<PathBuf>) -> Self {
        BenchmarkStreamConfig {
            dataset,
            data_dir: data_dir.into(),
            tasks: None,
            batch_size: 10,
            examples_per_task: None,
            test_per_task: None,
        }
    }

    pub fn task_count(&self) -> usize {
        self.tasks.unwrap_or(match self.dataset {
            BenchmarkDataset::PermutedMnist => 10,
            _ => 5,
        })
    }

    pub fn files(&self) -> [PathBuf; 4] {
        [
            "train-images-idx3-ubyte",
            "train-labels-idx1-ubyte",
            "t10k-images-idx3-ubyte",
            "t10k-labels-idx1-ubyte",
        ]
        .map(|f| self.data_dir.join(f))
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.task_count() == 0 {
            return Err(Error::Config(
                "benchmark batch size and task count must be positive".into(),
            ));
        }
        for f in self.files() {
            if !f.is_file() {
                return Err(Error::Config(format!("dataset file {} does not exist", f.display())));
            }
        }
        Ok(())
    }
}

/// Images and labels of one split.
#[derive(Clone, Debug)]
pub struct LabeledImages {
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
    pub item_len: usize,
}

impl LabeledImages {
    pub fn from_idx(images: &IdxArray, labels: &IdxArray) -> Result<Self> {
        let pixels = images
            .bytes()
            .ok_or_else(|| Error::Input("image file must hold unsigned bytes".into()))?
            .to_vec();
        let labels = labels
            .bytes()
            .ok_or_else(|| Error::Input("label file must hold unsigned bytes".into()))?
            .to_vec();
        if images.items() != labels.len() {
            return Err(Error::Input(format!(
                "{} images but {} labels",
                images.items(),
                labels.len()
            )));
        }
        Ok(LabeledImages {
            pixels,
            labels,
            item_len: images.item_len(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * self.item_len..(i + 1) * self.item_len]
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m as usize + 1)
    }
}

#[derive(Clone, Debug)]
pub struct BenchmarkData {
    pub train: LabeledImages,
    pub test: LabeledImages,
}

impl BenchmarkData {
    pub fn load(dir: &Path) -> Result<Self> {
        let p = |f: &str| dir.join(f);
        let train = LabeledImages::from_idx(
            &read_idx(&p("train-images-idx3-ubyte"))?,
            &read_idx(&p("train-labels-idx1-ubyte"))?,
        )?;
        let test = LabeledImages::from_idx(
            &read_idx(&p("t10k-images-idx3-ubyte"))?,
            &read_idx(&p("t10k-labels-idx1-ubyte"))?,
        )?;
        if train.item_len != test.item_len {
            return Err(Error::Input("train and test images differ in size".into()));
        }
        Ok(BenchmarkData { train, test })
    }
}

/// One task of the sequence.
#[derive(Clone, Debug)]
pub struct Task {
    pub permutation: Option<Vec<usize>>,
    pub classes: Vec<u8>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded task sequence shared by the training stream and the test set.
#[derive(Clone, Debug)]
pub struct TaskPlan {
    pub data: Arc<BenchmarkData>,
    pub tasks: Vec<Task>,
    pub batch_size: usize,
}

impl TaskPlan {
    pub fn new(cfg: &BenchmarkStreamConfig, data: Arc<BenchmarkData>, seed: u64) -> Result<Self> {
        let mut rng = rng::seeded(seed, rng::streams::DATA);
        let n_tasks = cfg.task_count();
        let classes = data.train.num_classes();
        let dim = data.train.item_len;
        let mut tasks = Vec::with_capacity(n_tasks);
        match cfg.dataset {
            BenchmarkDataset::PermutedMnist => {
                let mut order: Vec<usize> = (0..data.train.len()).collect();
                order.shuffle(&mut rng);
                let base = order.len() / n_tasks;
                let extra = order.len() % n_tasks;
                let mut start = 0;
                for t in 0..n_tasks {
                    let size = base + usize::from(t < extra);
                    let mut perm: Vec<usize> = (0..dim).collect();
                    perm.shuffle(&mut rng);
                    let mut test: Vec<usize> = (0..data.test.len()).collect();
                    test.shuffle(&mut rng);
                    tasks.push(Task {
                        permutation: Some(perm),
                        classes: (0..classes as u8).collect(),
                        train: order[start..start + size].to_vec(),
                        test,
                    });
                    start += size;
                }
            }
            BenchmarkDataset::DisjointMnist | BenchmarkDataset::DisjointCifar => {
                if n_tasks > classes {
                    return Err(Error::Config(format!(
                        "{n_tasks} disjoint tasks but only {classes} classes"
                    )));
                }
                let per = classes / n_tasks;
                let mut groups: Vec<Vec<u8>> = (0..n_tasks)
                    .map(|t| ((t * per) as u8..((t + 1) * per) as u8).collect())
                    .collect();
                groups.shuffle(&mut rng);
                for group in groups {
                    let mut train: Vec<usize> = (0..data.train.len())
                        .filter(|&i| group.contains(&data.train.labels[i]))
                        .collect();
                    train.shuffle(&mut rng);
                    let mut test: Vec<usize> = (0..data.test.len())
                        .filter(|&i| group.contains(&data.test.labels[i]))
                        .collect();
                    test.shuffle(&mut rng);
                    tasks.push(Task {
                        permutation: None,
                        classes: group,
                        train,
                        test,
                    });
                }
            }
        }
        for task in &mut tasks {
            if let Some(cap) = cfg.examples_per_task {
                task.train.truncate(cap);
            }
            if let Some(cap) = cfg.test_per_task {
                task.test.truncate(cap);
            }
        }
        Ok(TaskPlan {
            data,
            tasks,
            batch_size: cfg.batch_size,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.data.train.item_len
    }

    pub fn num_classes(&self) -> usize {
        self.data.train.num_classes().max(self.data.test.num_classes())
    }

    pub fn train_len(&self) -> usize {
        self.tasks.iter().map(|t| t.train.len()).sum()
    }

    fn features(&self, task: &Task, image: &[u8]) -> Vec<f64> {
        match &task.permutation {
            Some(perm) => perm.iter().map(|&j| f64::from(image[j]) / 255.0).collect(),
            None => image.iter().map(|&b| f64::from(b) / 255.0).collect(),
        }
    }

    pub fn test_len(&self) -> usize {
        self.tasks.iter().map(|t| t.test.len()).sum()
    }

    /// Visits the test events of every task (task id as user) in chunks of
    /// at most `chunk`, never materializing the whole set.
    pub fn for_each_test_chunk<F>(&self, chunk: usize, mut f: F) -> Result<()>
    where
        F: FnMut(&[Event]) -> Result<()>,
    {
        let mut id = TEST_ID_BASE;
        for (t, task) in self.tasks.iter().enumerate() {
            for part in task.test.chunks(chunk.max(1)) {
                let events: Vec<Event> = part
                    .iter()
                    .map(|&i| {
                        let x = self.features(task, self.data.test.image(i));
                        let e = Event::new(id, 0, t as UserId, x, u32::from(self.data.test.labels[i]));
                        id += 1;
                        e
                    })
                    .collect();
                f(&events)?;
            }
        }
        Ok(())
    }

    /// Whole test set; prefer [`TaskPlan::for_each_test_chunk`] for large sets.
    pub fn test_set(&self) -> Vec<Event> {
        let mut all = Vec::with_capacity(self.test_len());
        self.for_each_test_chunk(1024, |c| {
            all.extend_from_slice(c);
            Ok(())
        })
        .expect("collecting cannot fail");
        all
    }

    pub fn stream(&self) -> BenchmarkStream {
        BenchmarkStream {
            plan: self.clone(),
            task: 0,
            offset: 0,
            step: 0,
            next_id: 0,
        }
    }
}

pub struct BenchmarkStream {
    plan: TaskPlan,
    task: usize,
    offset: usize,
    step: u64,
    next_id: u64,
}

impl EventStream for BenchmarkStream {
    fn next_batch(&mut self) -> Option<Vec<Event>> {
        while self.task < self.plan.tasks.len() && self.offset >= self.plan.tasks[self.task].train.len() {
            self.task += 1;
            self.offset = 0;
        }
        let task = self.plan.tasks.get(self.task)?;
        let end = (self.offset + self.plan.batch_size).min(task.train.len());
        self.step += 1;
        let batch = task.train[self.offset..end]
            .iter()
            .map(|&i| {
                let x = self.plan.features(task, self.plan.data.train.image(i));
                let e = Event::new(
                    self.next_id,
                    self.step,
                    self.task as UserId,
                    x,
                    u32::from(self.plan.data.train.labels[i]),
                );
                self.next_id += 1;
                e
            })
            .collect();
        self.offset = end;
        Some(batch)
    }

    fn input_dim(&self) -> usize {
        self.plan.input_dim()
    }

    fn num_classes(&self) -> usize {
        self.plan.num_classes()
    }
}
