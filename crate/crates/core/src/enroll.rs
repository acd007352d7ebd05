//! Verification by enrollment: a global model over `B` background users
//! with one extra "dummy" output, fine-tuned per user so that the user's
//! cycles land on the dummy class.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gait::{channel_scale, GaitCycle};
use crate::net::config::NetworkConfig;
use crate::net::infer::{argmax, forward_infer, BinarizedModel};
use crate::seed::derive_seed;
use crate::train::{
    split_dataset, train, train_epochs, AdamConfig, AdamState, Dataset, LabelMap, TrainConfig, TrainRun, TrainState,
};

const ENROLL_TAG: u64 = 0x454E_524C;

#[derive(Debug, Clone, PartialEq)]
pub struct EnrollmentConfig {
    pub fine_tune_epochs: usize,
    /// Fraction of each fine-tuning batch drawn from the user's cycles
    /// (1 user : 4 background gives 0.2).
    pub user_fraction: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub min_user_cycles: usize,
}

impl Default for EnrollmentConfig {
    fn default() -> Self {
        EnrollmentConfig { fine_tune_epochs: 5, user_fraction: 0.2, lr: 1e-4, batch_size: 64, seed: 0, min_user_cycles: 20 }
    }
}

impl EnrollmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.user_fraction > 0.0 && self.user_fraction < 1.0) {
            return Err(Error::Parameter(format!("user fraction {} must lie in (0, 1)", self.user_fraction)));
        }
        if self.batch_size < 2 {
            return Err(Error::Parameter("fine-tuning batches need at least 2 samples".into()));
        }
        Ok(())
    }
}

/// Trained background model plus what enrollment needs to fine-tune it.
#[derive(Debug, Clone)]
pub struct GlobalModel {
    pub state: TrainState,
    pub labels: LabelMap,
    pub input_scale: Vec<f32>,
    /// Training split of the background users, scaled and labeled.
    pub background: Dataset,
    pub validation: Dataset,
    pub run: TrainRun,
}

impl GlobalModel {
    pub fn dummy_class(&self) -> usize {
        self.labels.len()
    }

    pub fn export(&self) -> Result<BinarizedModel> {
        let mut meta = BTreeMap::new();
        meta.insert("labels".to_string(), self.labels.to_text());
        Ok(BinarizedModel::from_latent(&self.state.config, &self.state.weights, self.input_scale.clone())?.with_metadata(meta))
    }
}

fn check_no_dummy(data: &Dataset, dummy: usize) -> Result<()> {
    match data.labels.iter().position(|&l| l >= dummy) {
        Some(i) => Err(Error::Enrollment(format!("background sample {i} carries label {} (dummy is {dummy})", data.labels[i]))),
        None => Ok(()),
    }
}

/// Trains a `B + 1`-way model on background cycles; class `B` (the dummy)
/// has no training samples.
pub fn train_global(config: &NetworkConfig, background: &[GaitCycle], hp: &TrainConfig) -> Result<GlobalModel> {
    let labels = LabelMap::from_cycles(background);
    if labels.len() < 2 {
        return Err(Error::Enrollment(format!("need at least 2 background users, got {}", labels.len())));
    }
    let config = config.with_class_count(labels.len() + 1)?;
    let split = split_dataset(background, hp.split, hp.seed)?;
    let rows = config.input_shape().height;
    let input_scale = channel_scale(&split.train, rows);
    let label_of = |c: &GaitCycle| labels.class_of(c.user_id);
    let tr = Dataset::from_cycles(&split.train, config.input_shape(), &input_scale, label_of)?;
    let va = Dataset::from_cycles(&split.val, config.input_shape(), &input_scale, label_of)?;
    train_global_datasets(&config, labels, input_scale, tr, va, hp)
}

/// As [`train_global`] for prepared datasets. Fails if any sample is
/// labeled with the dummy class `config.class_count() − 1`.
pub fn train_global_datasets(
    config: &NetworkConfig,
    labels: LabelMap,
    input_scale: Vec<f32>,
    background: Dataset,
    validation: Dataset,
    hp: &TrainConfig,
) -> Result<GlobalModel> {
    let dummy = config.class_count() - 1;
    if dummy < 2 || labels.len() != dummy {
        return Err(Error::Enrollment(format!("{} background users for {} outputs", labels.len(), config.class_count())));
    }
    check_no_dummy(&background, dummy)?;
    check_no_dummy(&validation, dummy)?;
    let (state, run) = train(config, &background, &validation, hp)?;
    Ok(GlobalModel { state, labels, input_scale, background, validation, run })
}

/// Rebuilds a global model from a saved training state and the background
/// cycles it was trained on, re-deriving the split from the state's seed.
pub fn resume_global(
    state: TrainState,
    labels: LabelMap,
    input_scale: Vec<f32>,
    background: &[GaitCycle],
    split: (f64, f64),
) -> Result<GlobalModel> {
    if state.config.class_count() != labels.len() + 1 {
        return Err(Error::Enrollment(format!(
            "model has {} outputs; {} background users need {}",
            state.config.class_count(),
            labels.len(),
            labels.len() + 1
        )));
    }
    let s = split_dataset(background, split, state.seed)?;
    let label_of = |c: &GaitCycle| labels.class_of(c.user_id);
    let shape = state.config.input_shape();
    let tr = Dataset::from_cycles(&s.train, shape, &input_scale, label_of)?;
    let va = Dataset::from_cycles(&s.val, shape, &input_scale, label_of)?;
    let run = TrainRun { seed: state.seed, epochs: state.epoch, batch_size: 0, split, log: vec![] };
    Ok(GlobalModel { state, labels, input_scale, background: tr, validation: va, run })
}

/// An enrolled user's fine-tuned clone.
#[derive(Debug, Clone, PartialEq)]
pub struct UserModel {
    pub user_id: u32,
    pub model: BinarizedModel,
}

impl UserModel {
    /// Reads a user model from a model file's metadata.
    pub fn from_model(model: BinarizedModel) -> Result<Self> {
        let user_id = model
            .metadata()
            .get("user_id")
            .ok_or_else(|| Error::Enrollment("model has no user_id metadata".into()))?
            .parse()
            .map_err(|_| Error::Enrollment("user_id metadata is not an integer".into()))?;
        Ok(UserModel { user_id, model })
    }

    pub fn dummy_class(&self) -> usize {
        self.model.class_count() - 1
    }
}

/// Batches for one fine-tuning epoch over `[background…, user…]`: every
/// user sample once, each batch topped up with background samples drawn
/// without replacement from a reshuffled pool.
fn mixed_batches(n_bg: usize, n_user: usize, cfg: &EnrollmentConfig, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[ENROLL_TAG, epoch as u64]));
    let per_user = ((cfg.batch_size as f64 * cfg.user_fraction).round() as usize).clamp(1, cfg.batch_size - 1);
    let per_bg = cfg.batch_size - per_user;
    let mut users: Vec<usize> = (n_bg..n_bg + n_user).collect();
    users.shuffle(&mut rng);
    let mut pool: Vec<usize> = Vec::new();
    let mut batches = Vec::new();
    for chunk in users.chunks(per_user) {
        // keep the 1:4 proportion in a short final batch
        let want = (chunk.len() * per_bg).div_ceil(per_user);
        let mut batch = chunk.to_vec();
        while batch.len() < chunk.len() + want.min(n_bg) {
            if pool.is_empty() {
                pool = (0..n_bg).collect();
                pool.shuffle(&mut rng);
            }
            batch.push(pool.pop().unwrap());
        }
        batches.push(batch);
    }
    batches
}

/// Fine-tunes a clone of the global model with `user`'s cycles labeled as
/// the dummy class, mixed with background cycles. The global model is not
/// modified.
pub fn enroll(global: &GlobalModel, user_id: u32, cycles: &[GaitCycle], cfg: &EnrollmentConfig) -> Result<UserModel> {
    fine_tune(global, user_id, cycles, cfg).map(|(_, m)| m)
}

fn fine_tune(
    global: &GlobalModel,
    user_id: u32,
    cycles: &[GaitCycle],
    cfg: &EnrollmentConfig,
) -> Result<(TrainState, UserModel)> {
    cfg.validate()?;
    if global.labels.class_of(user_id).is_some() {
        return Err(Error::Enrollment(format!("user {user_id} is a background user")));
    }
    if let Some(c) = cycles.iter().find(|c| c.user_id != user_id) {
        return Err(Error::Enrollment(format!("cycle {:#x} belongs to user {}, not {user_id}", c.id, c.user_id)));
    }
    if cycles.len() < cfg.min_user_cycles {
        return Err(Error::Enrollment(format!(
            "user {user_id} has {} cycles; at least {} are needed",
            cycles.len(),
            cfg.min_user_cycles
        )));
    }
    let dummy = global.dummy_class();
    let shape = global.state.config.input_shape();
    let user = Dataset::from_cycles(cycles, shape, &global.input_scale, |_| Some(dummy))?;
    let combined = global.background.concat(&user)?;
    let (n_bg, n_user) = (global.background.len(), user.len());

    let mut state = global.state.clone();
    state.adam = AdamState::new(&state.weights, AdamConfig { lr: cfg.lr, ..AdamConfig::default() })?;
    let mut sampler = |epoch: usize| mixed_batches(n_bg, n_user, cfg, epoch);
    let start = state.epoch;
    let (state, _) = train_epochs(state, &combined, None, cfg.fine_tune_epochs, &mut sampler, &mut |_| {})?;
    debug_assert_eq!(state.epoch, start + cfg.fine_tune_epochs);

    let mut meta = BTreeMap::new();
    meta.insert("user_id".to_string(), user_id.to_string());
    meta.insert("enroll_seed".to_string(), cfg.seed.to_string());
    meta.insert("epochs".to_string(), cfg.fine_tune_epochs.to_string());
    meta.insert("cycles".to_string(), cycles.len().to_string());
    meta.insert("labels".to_string(), global.labels.to_text());
    let model = BinarizedModel::from_latent(&state.config, &state.weights, global.input_scale.clone())?.with_metadata(meta);
    Ok((state, UserModel { user_id, model }))
}

/// Accept iff the arg-max class (lowest index on ties) is the dummy.
pub fn decide(scores: &[f64], dummy: usize) -> bool {
    argmax(scores) == dummy
}

/// Verifies one cycle against a user model, scaling it with the model's
/// stored input statistics.
pub fn verify(user: &UserModel, cycle: &GaitCycle) -> Result<bool> {
    let shape = user.model.config().input_shape();
    let scores = forward_infer(&user.model, &cycle.to_input(shape.height, user.model.input_scale()))?;
    Ok(decide(&scores, user.dummy_class()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyReport {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
    /// User acceptance rate `TP/(TP+FN)`.
    pub uar: f64,
    /// Attacker rejection rate `TN/(TN+FP)`.
    pub arr: f64,
    /// `2TP/(2TP+FP+FN)`; zero when nothing is accepted correctly.
    pub f1: f64,
}

impl VerifyReport {
    pub fn from_counts(tp: usize, fn_: usize, fp: usize, tn: usize) -> Result<Self> {
        if tp + fn_ == 0 || fp + tn == 0 {
            return Err(Error::Usage("verification needs user and attacker samples".into()));
        }
        let uar = tp as f64 / (tp + fn_) as f64;
        let arr = tn as f64 / (tn + fp) as f64;
        let f1 = if tp == 0 { 0.0 } else { (2 * tp) as f64 / (2 * tp + fp + fn_) as f64 };
        Ok(VerifyReport { tp, fn_, fp, tn, uar, arr, f1 })
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tp = {}", self.tp)?;
        writeln!(f, "fn = {}", self.fn_)?;
        writeln!(f, "fp = {}", self.fp)?;
        writeln!(f, "tn = {}", self.tn)?;
        writeln!(f, "uar = {:.6}", self.uar)?;
        writeln!(f, "arr = {:.6}", self.arr)?;
        writeln!(f, "f1 = {:.6}", self.f1)
    }
}

/// Indices of `n` items spread evenly over `0..m` (`n ≤ m`).
fn spread(n: usize, m: usize) -> impl Iterator<Item = usize> {
    (0..n).map(move |i| i * m / n)
}

/// Scores a user model on a balanced set: the larger of the two cycle
/// lists is thinned to the size of the smaller by taking evenly spaced
/// entries.
pub fn evaluate(user: &UserModel, user_test: &[GaitCycle], attackers: &[GaitCycle]) -> Result<VerifyReport> {
    if user_test.is_empty() || attackers.is_empty() {
        return Err(Error::Usage("evaluation needs user and attacker cycles".into()));
    }
    if let Some(c) = attackers.iter().find(|c| c.user_id == user.user_id) {
        return Err(Error::Enrollment(format!("attacker cycle {:#x} belongs to the enrolled user", c.id)));
    }
    let n = user_test.len().min(attackers.len());
    let (mut tp, mut fn_, mut fp, mut tn) = (0, 0, 0, 0);
    for i in spread(n, user_test.len()) {
        if verify(user, &user_test[i])? {
            tp += 1;
        } else {
            fn_ += 1;
        }
    }
    for i in spread(n, attackers.len()) {
        if verify(user, &attackers[i])? {
            fp += 1;
        } else {
            tn += 1;
        }
    }
    VerifyReport::from_counts(tp, fn_, fp, tn)
}

/// Fails unless the three user groups are pairwise disjoint.
pub fn check_partitions(background: &[u32], enrolled: &[u32], attackers: &[u32]) -> Result<()> {
    let groups = [("background", background), ("enrolled", enrolled), ("attacker", attackers)];
    for i in 0..3 {
        for j in i + 1..3 {
            let a: BTreeSet<u32> = groups[i].1.iter().copied().collect();
            if let Some(u) = groups[j].1.iter().find(|u| a.contains(u)) {
                return Err(Error::Enrollment(format!("user {u} is both {} and {}", groups[i].0, groups[j].0)));
            }
        }
    }
    Ok(())
}
