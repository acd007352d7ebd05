use crate::error::{Error, Result};
use crate::net::graph::{Gradients, LayerGrad};
use crate::net::params::{LatentWeights, LayerParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-7 }
    }
}

/// Adam moments, one slot per parameter array: a binary layer's latent
/// weights, or a batch norm's γ and β (two slots).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

fn slot_lens(params: &LatentWeights) -> Vec<usize> {
    let mut lens = Vec::new();
    for p in &params.layers {
        match p {
            LayerParams::Weights(w) => lens.push(w.len()),
            LayerParams::BatchNorm(bn) => lens.extend([bn.channels(), bn.channels()]),
            LayerParams::Empty => {}
        }
    }
    lens
}

impl AdamState {
    pub fn new(params: &LatentWeights, cfg: AdamConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) {
            return Err(Error::Parameter("Adam betas must lie in [0, 1)".into()));
        }
        if !(cfg.epsilon > 0.0) || !(cfg.lr >= 0.0) {
            return Err(Error::Parameter("Adam epsilon must be positive and lr non-negative".into()));
        }
        let lens = slot_lens(params);
        Ok(AdamState {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            t: 0,
            m: lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: lens.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }
}

/// Gradient arrays per slot, paired with their layer index and the offset
/// of the slot within that layer's diagnostic numbering.
fn grad_slots<'a>(params: &LatentWeights, grads: &'a Gradients) -> Result<Vec<(usize, usize, &'a [f64])>> {
    if grads.layers.len() != params.layers.len() {
        return Err(Error::dim(format!("{} gradient entries for {} layers", grads.layers.len(), params.layers.len())));
    }
    let mut out = Vec::new();
    for (li, (p, g)) in params.layers.iter().zip(&grads.layers).enumerate() {
        match (p, g) {
            (LayerParams::Weights(w), LayerGrad::Weights(gw)) if gw.len() == w.len() => out.push((li, 0, gw.as_slice())),
            (LayerParams::BatchNorm(bn), LayerGrad::BatchNorm { gamma, beta })
                if gamma.len() == bn.channels() && beta.len() == bn.channels() =>
            {
                out.push((li, 0, gamma.as_slice()));
                out.push((li, bn.channels(), beta.as_slice()));
            }
            (LayerParams::Empty, LayerGrad::None) => {}
            _ => return Err(Error::dim(format!("gradient for layer {li} does not match its parameters"))),
        }
    }
    Ok(out)
}

/// Bias-corrected Adam update, then latent weights of binary layers are
/// clipped to `[-1, 1]`. An all-zero gradient advances `t` and leaves the
/// parameters and moments untouched.
pub fn adam_step(state: &mut AdamState, params: &mut LatentWeights, grads: &Gradients) -> Result<()> {
    let slots = grad_slots(params, grads)?;
    if slots.len() != state.m.len() || slots.iter().zip(&state.m).any(|(s, m)| s.2.len() != m.len()) {
        return Err(Error::dim("optimizer state does not match the parameters"));
    }
    for &(layer, offset, g) in &slots {
        if let Some(i) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { layer, index: offset + i });
        }
    }
    state.t += 1;
    if slots.iter().all(|s| s.2.iter().all(|&x| x == 0.0)) {
        return Ok(());
    }
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powf(state.t as f64);
    let c2 = 1.0 - b2.powf(state.t as f64);
    let mut updates: Vec<Vec<f64>> = Vec::with_capacity(slots.len());
    for (k, &(_, _, g)) in slots.iter().enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        let mut step = Vec::with_capacity(g.len());
        for i in 0..g.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            step.push(state.lr * m_hat / (v_hat.sqrt() + state.epsilon));
        }
        updates.push(step);
    }
    let mut k = 0;
    for li in 0..params.layers.len() {
        match &params.layers[li] {
            LayerParams::Weights(_) => {
                let w = params.weights_mut(li).unwrap();
                w.iter_mut().zip(&updates[k]).for_each(|(x, d)| *x -= d);
                k += 1;
            }
            LayerParams::BatchNorm(_) => {
                let bn = params.batchnorm_mut(li).unwrap();
                bn.gamma.iter_mut().zip(&updates[k]).for_each(|(x, d)| *x -= d);
                bn.beta.iter_mut().zip(&updates[k + 1]).for_each(|(x, d)| *x -= d);
                k += 2;
            }
            LayerParams::Empty => {}
        }
    }
    params.clip_latent();
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerConfig {
    pub factor: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub min_lr: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig { factor: 0.5, patience: 5, min_delta: 1e-4, min_lr: 1e-5 }
    }
}

/// Reduce-on-plateau schedule monitoring validation top-1 accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub config: SchedulerConfig,
    pub best: f64,
    pub epochs_since_improve: usize,
}

impl PlateauScheduler {
    pub fn new(config: SchedulerConfig) -> Result<Self> {
        if !(config.factor > 0.0 && config.factor < 1.0) {
            return Err(Error::Parameter(format!("scheduler factor {} must lie in (0, 1)", config.factor)));
        }
        if !(config.min_lr >= 0.0) || !(config.min_delta >= 0.0) {
            return Err(Error::Parameter("scheduler min_lr and min_delta must be non-negative".into()));
        }
        Ok(PlateauScheduler { config, best: f64::NEG_INFINITY, epochs_since_improve: 0 })
    }
}

/// Records one epoch's validation accuracy and returns the learning rate
/// for the next epoch.
pub fn scheduler_step(s: &mut PlateauScheduler, val_acc: f64, lr: f64) -> f64 {
    if val_acc > s.best + s.config.min_delta {
        s.best = val_acc;
        s.epochs_since_improve = 0;
        return lr;
    }
    s.epochs_since_improve += 1;
    if s.epochs_since_improve > s.config.patience {
        s.epochs_since_improve = 0;
        return (lr * s.config.factor).max(s.config.min_lr).min(lr);
    }
    lr
}
