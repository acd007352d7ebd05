use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loss::cross_entropy_batch;
use super::optim::{adam_step, scheduler_step, AdamConfig, AdamState, PlateauScheduler, SchedulerConfig};
use super::Dataset;
use crate::error::{Error, Result};
use crate::net::config::NetworkConfig;
use crate::net::graph::{backward_ste, forward_train, update_running_stats, Mode};
use crate::net::infer::{argmax, forward_infer, BinarizedModel};
use crate::net::params::{LatentWeights, Precision};
use crate::seed::derive_seed;

const INIT_TAG: u64 = 0x494E_4954;
const EPOCH_TAG: u64 = 0x4550_4348;
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub scheduler: SchedulerConfig,
    pub precision: Precision,
    /// Train/validation fractions, recorded in the run log.
    pub split: (f64, f64),
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 100,
            batch_size: 64,
            adam: AdamConfig::default(),
            scheduler: SchedulerConfig::default(),
            precision: Precision::Binary,
            split: (0.8, 0.2),
        }
    }
}

/// Everything needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: NetworkConfig,
    pub weights: LatentWeights,
    pub adam: AdamState,
    pub scheduler: PlateauScheduler,
    /// Completed epochs.
    pub epoch: usize,
    pub seed: u64,
}

impl TrainState {
    pub fn init(config: &NetworkConfig, hp: &TrainConfig) -> Result<Self> {
        let weights = LatentWeights::init(config, hp.precision, derive_seed(hp.seed, &[INIT_TAG]));
        Ok(TrainState {
            config: config.clone(),
            adam: AdamState::new(&weights, hp.adam)?,
            scheduler: PlateauScheduler::new(hp.scheduler)?,
            weights,
            epoch: 0,
            seed: hp.seed,
        })
    }

    pub fn lr(&self) -> f64 {
        self.adam.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_top1: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub split: (f64, f64),
    pub log: Vec<EpochRecord>,
}

const LOG_HEADER: &str = "epoch\ttrain_loss\tval_loss\tval_top1\tlr";

impl TrainRun {
    /// Line-delimited log: a `#` line with the run settings, a header,
    /// then one tab-separated row per epoch.
    pub fn to_log(&self) -> String {
        let mut s = format!(
            "# seed={} epochs={} batch_size={} split={}/{}\n{LOG_HEADER}\n",
            self.seed, self.epochs, self.batch_size, self.split.0, self.split.1
        );
        for r in &self.log {
            s += &format!("{}\t{}\t{}\t{}\t{}\n", r.epoch, r.train_loss, r.val_loss, r.val_top1, r.lr);
        }
        s
    }

    pub fn parse_log(text: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| Error::Data(format!("training log line {line}: {what}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, settings) = lines.next().ok_or_else(|| bad(1, "empty log"))?;
        let settings = settings.strip_prefix("# ").ok_or_else(|| bad(1, "missing settings line"))?;
        let mut run = TrainRun { seed: 0, epochs: 0, batch_size: 0, split: (0.0, 0.0), log: vec![] };
        for kv in settings.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(1, "expected key=value"))?;
            let num = |v: &str| v.parse::<u64>().map_err(|_| bad(1, &format!("bad value for {k}")));
            match k {
                "seed" => run.seed = num(v)?,
                "epochs" => run.epochs = num(v)? as usize,
                "batch_size" => run.batch_size = num(v)? as usize,
                "split" => {
                    let (a, b) = v.split_once('/').ok_or_else(|| bad(1, "split must be a/b"))?;
                    run.split = (a.parse().map_err(|_| bad(1, "bad split"))?, b.parse().map_err(|_| bad(1, "bad split"))?);
                }
                _ => return Err(bad(1, &format!("unknown setting {k}"))),
            }
        }
        match lines.next() {
            Some((_, LOG_HEADER)) => {}
            _ => return Err(bad(2, "missing column header")),
        }
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad(no, "expected 5 columns"));
            }
            let real = |s: &str| s.parse::<f64>().map_err(|_| bad(no, &format!("bad number {s:?}")));
            run.log.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad(no, "bad epoch"))?,
                train_loss: real(f[1])?,
                val_loss: real(f[2])?,
                val_top1: real(f[3])?,
                lr: real(f[4])?,
            });
        }
        Ok(run)
    }
}

/// A training run that stopped early. `last_good` is the state at the end
/// of the last completed epoch.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub last_good: Box<TrainState>,
    pub run: TrainRun,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (last good state after epoch {})", self.error, self.last_good.epoch)
    }
}

impl std::error::Error for TrainFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<TrainFailure> for Error {
    fn from(f: TrainFailure) -> Self {
        f.error
    }
}

/// Indices `0..n` shuffled with a seed derived from `(seed, epoch)` and
/// cut into batches; the last batch may be short.
pub fn shuffled_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[EPOCH_TAG, epoch as u64])));
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Eval-mode logits for every sample, `[n, classes]`.
pub fn predict_latent(weights: &LatentWeights, config: &NetworkConfig, data: &Dataset) -> Result<Vec<f64>> {
    let mut logits = Vec::with_capacity(data.len() * config.class_count());
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let (batch, _) = data.batch(chunk);
        logits.extend(forward_train(weights, config, &batch, Mode::Eval)?.logits);
    }
    Ok(logits)
}

/// Mean cross-entropy and top-1 accuracy in eval mode.
pub fn evaluate_latent(weights: &LatentWeights, config: &NetworkConfig, data: &Dataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Usage("cannot evaluate on an empty dataset".into()));
    }
    let classes = config.class_count();
    let logits = predict_latent(weights, config, data)?;
    let (loss, _) = cross_entropy_batch(&logits, &data.labels, classes)?;
    let correct = logits.chunks(classes).zip(&data.labels).filter(|(row, &l)| argmax(row) == l).count();
    Ok((loss, correct as f64 / data.len() as f64))
}

/// Fraction of samples whose arg-max score (lowest index on ties) equals
/// the label, computed with the bit-packed engine.
pub fn top1_accuracy(model: &BinarizedModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Usage("cannot score an empty dataset".into()));
    }
    if let Some(&l) = data.labels.iter().find(|&&l| l >= model.class_count()) {
        return Err(Error::Usage(format!("label {l} out of range for {} classes", model.class_count())));
    }
    let hits = (0..data.len())
        .into_par_iter()
        .map(|i| forward_infer(model, data.input(i)).map(|s| usize::from(argmax(&s) == data.labels[i])))
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / data.len() as f64)
}

/// Trains a fresh state for `hp.epochs` epochs of shuffled minibatches.
pub fn train(
    config: &NetworkConfig,
    train: &Dataset,
    val: &Dataset,
    hp: &TrainConfig,
) -> std::result::Result<(TrainState, TrainRun), TrainFailure> {
    let state = TrainState::init(config, hp).map_err(|error| TrainFailure {
        error,
        last_good: Box::new(placeholder_state(config, hp)),
        run: empty_run(hp),
    })?;
    let (seed, n, bs) = (hp.seed, train.len(), hp.batch_size);
    let mut sampler = |epoch: usize| shuffled_batches(n, bs, seed, epoch);
    let (state, log) = train_epochs(state, train, Some(val), hp.epochs, &mut sampler, &mut |_| {}).map_err(|mut f| {
        f.run = TrainRun { log: std::mem::take(&mut f.run.log), ..empty_run(hp) };
        f
    })?;
    Ok((state, TrainRun { log, ..empty_run(hp) }))
}

fn empty_run(hp: &TrainConfig) -> TrainRun {
    TrainRun { seed: hp.seed, epochs: hp.epochs, batch_size: hp.batch_size, split: hp.split, log: vec![] }
}

fn placeholder_state(config: &NetworkConfig, hp: &TrainConfig) -> TrainState {
    let weights = LatentWeights::init(config, hp.precision, 0);
    TrainState {
        config: config.clone(),
        adam: AdamState::new(&weights, AdamConfig::default()).expect("default Adam settings are valid"),
        scheduler: PlateauScheduler::new(SchedulerConfig::default()).expect("default scheduler is valid"),
        weights,
        epoch: 0,
        seed: hp.seed,
    }
}

/// Runs `epochs` further epochs. `sampler(epoch)` yields the batches of an
/// epoch as indices into `train`; `on_step` sees the state after every
/// optimizer step. Without validation data the scheduler is not stepped
/// and validation columns are logged as NaN.
pub fn train_epochs(
    mut state: TrainState,
    train: &Dataset,
    val: Option<&Dataset>,
    epochs: usize,
    sampler: &mut dyn FnMut(usize) -> Vec<Vec<usize>>,
    on_step: &mut dyn FnMut(&TrainState),
) -> std::result::Result<(TrainState, Vec<EpochRecord>), TrainFailure> {
    let mut log = Vec::with_capacity(epochs);
    let classes = state.config.class_count();
    let fail = |error: Error, last_good: &TrainState, log: &[EpochRecord]| TrainFailure {
        error,
        last_good: Box::new(last_good.clone()),
        run: TrainRun { seed: last_good.seed, epochs, batch_size: 0, split: (0.0, 0.0), log: log.to_vec() },
    };
    if epochs > 0 && train.is_empty() {
        return Err(fail(Error::Usage("training set is empty".into()), &state, &log));
    }
    if let Some(&l) = train.labels.iter().find(|&&l| l >= classes) {
        return Err(fail(Error::Usage(format!("label {l} out of range for {classes} classes")), &state, &log));
    }
    for _ in 0..epochs {
        let last_good = state.clone();
        let epoch = state.epoch;
        let lr = state.adam.lr;
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for indices in sampler(epoch) {
            if indices.is_empty() {
                continue;
            }
            let step = (|| -> Result<f64> {
                let (batch, labels) = train.batch(&indices);
                let out = forward_train(&state.weights, &state.config, &batch, Mode::Train)?;
                let (loss, grad) = cross_entropy_batch(&out.logits, &labels, classes)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch: epoch + 1, reason: format!("training loss is {loss}") });
                }
                let cache = out.cache.expect("train mode records a cache");
                let grads = backward_ste(&state.weights, &state.config, &cache, &grad)?;
                update_running_stats(&mut state.weights, &state.config, &cache);
                adam_step(&mut state.adam, &mut state.weights, &grads)?;
                Ok(loss)
            })();
            match step {
                Ok(loss) => {
                    loss_sum += loss * indices.len() as f64;
                    seen += indices.len();
                }
                Err(e) => return Err(fail(e, &last_good, &log)),
            }
            on_step(&state);
        }
        if !state.weights.latent_in_range() {
            return Err(fail(
                Error::Diverged { epoch: epoch + 1, reason: "latent weight left [-1, 1]".into() },
                &last_good,
                &log,
            ));
        }
        let (val_loss, val_top1) = match val {
            Some(v) if !v.is_empty() => match evaluate_latent(&state.weights, &state.config, v) {
                Ok(m) => m,
                Err(e) => return Err(fail(e, &last_good, &log)),
            },
            _ => (f64::NAN, f64::NAN),
        };
        if val.is_some_and(|v| !v.is_empty()) {
            if !val_loss.is_finite() {
                return Err(fail(
                    Error::Diverged { epoch: epoch + 1, reason: format!("validation loss is {val_loss}") },
                    &last_good,
                    &log,
                ));
            }
            state.adam.lr = scheduler_step(&mut state.scheduler, val_top1, lr);
        }
        state.epoch += 1;
        let record = EpochRecord {
            epoch: state.epoch,
            train_loss: if seen > 0 { loss_sum / seen as f64 } else { f64::NAN },
            val_loss,
            val_top1,
            lr,
        };
        log::info!(
            "epoch {} train_loss {:.4} val_loss {:.4} val_top1 {:.4} lr {:e}",
            record.epoch,
            record.train_loss,
            record.val_loss,
            record.val_top1,
            record.lr
        );
        log.push(record);
    }
    Ok((state, log))
}
