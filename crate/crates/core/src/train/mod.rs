//! Optimization: cross-entropy, Adam over latent weights, plateau
//! scheduling, dataset splitting and the epoch loop.

mod loss;
mod optim;
mod run;
mod split;

pub use loss::{cross_entropy, cross_entropy_batch, softmax};
pub use optim::{adam_step, scheduler_step, AdamConfig, AdamState, PlateauScheduler, SchedulerConfig};
pub use run::{
    evaluate_latent, predict_latent, shuffled_batches, top1_accuracy, train, train_epochs, EpochRecord, TrainConfig,
    TrainFailure, TrainRun, TrainState,
};
pub use split::{split_dataset, Split};

use crate::error::{Error, Result};
use crate::gait::{GaitCycle, CHANNELS, CYCLE_LEN};
use crate::net::config::Shape;
use crate::net::graph::Batch;

/// Maps user ids to class indices `0..n` in ascending id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    users: Vec<u32>,
}

impl LabelMap {
    pub fn new(mut users: Vec<u32>) -> Self {
        users.sort_unstable();
        users.dedup();
        LabelMap { users }
    }

    pub fn from_cycles<'a>(cycles: impl IntoIterator<Item = &'a GaitCycle>) -> Self {
        LabelMap::new(cycles.into_iter().map(|c| c.user_id).collect())
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn users(&self) -> &[u32] {
        &self.users
    }

    pub fn class_of(&self, user: u32) -> Option<usize> {
        self.users.binary_search(&user).ok()
    }

    pub fn user_of(&self, class: usize) -> Option<u32> {
        self.users.get(class).copied()
    }

    /// Comma-separated ids, as stored in model metadata.
    pub fn to_text(&self) -> String {
        self.users.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
    }

    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Ok(LabelMap::new(vec![]));
        }
        let users = text
            .split(',')
            .map(|s| s.trim().parse::<u32>().map_err(|_| Error::Data(format!("bad user id {s:?} in label list"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(LabelMap::new(users))
    }
}

/// Labeled network inputs, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub shape: Shape,
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(shape: Shape, inputs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() * shape.len() {
            return Err(Error::dim(format!("{} input values for {} samples of {shape}", inputs.len(), labels.len())));
        }
        Ok(Dataset { shape, inputs, labels })
    }

    /// Inputs from the first `shape.height` channels of each cycle divided
    /// by `scale`; labels from `label_of` (cycles mapped to `None` are
    /// rejected).
    pub fn from_cycles<'a>(
        cycles: impl IntoIterator<Item = &'a GaitCycle>,
        shape: Shape,
        scale: &[f32],
        label_of: impl Fn(&GaitCycle) -> Option<usize>,
    ) -> Result<Self> {
        if shape.channels != 1 || shape.width != CYCLE_LEN || shape.height > CHANNELS {
            return Err(Error::dim(format!("cycles of {CHANNELS}x{CYCLE_LEN} cannot feed a {shape} input")));
        }
        if !scale.is_empty() && scale.len() != shape.height {
            return Err(Error::dim(format!("{} channel scales for {} rows", scale.len(), shape.height)));
        }
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for c in cycles {
            let label = label_of(c).ok_or_else(|| Error::Data(format!("no class for user {} (cycle {:#x})", c.user_id, c.id)))?;
            inputs.extend(c.to_input(shape.height, scale));
            labels.push(label);
        }
        Dataset::new(shape, inputs, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let n = self.shape.len();
        &self.inputs[i * n..(i + 1) * n]
    }

    pub fn batch(&self, indices: &[usize]) -> (Batch, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.shape.len());
        for &i in indices {
            data.extend_from_slice(self.input(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (Batch { n: indices.len(), shape: self.shape, data }, labels)
    }

    /// Concatenates two datasets of the same shape.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.shape != other.shape {
            return Err(Error::dim("datasets differ in input shape"));
        }
        let mut out = self.clone();
        out.inputs.extend_from_slice(&other.inputs);
        out.labels.extend_from_slice(&other.labels);
        Ok(out)
    }
}
