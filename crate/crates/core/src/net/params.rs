use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::SignVector;
use crate::error::{Error, Result};
use crate::net::config::{LayerSpec, NetworkConfig};

/// Whether binary layers binarize their latent weights and whether `sign`
/// layers threshold (binary) or clip (full precision).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Precision {
    Binary,
    Full,
}

/// Half-width of the uniform latent-weight initializer.
pub const LATENT_INIT_RANGE: f64 = 0.1;

/// `+1` where strictly positive, `-1` otherwise (zero maps to `-1`).
pub fn binarize(latent: &[f64]) -> SignVector {
    SignVector::from_bools(latent.iter().map(|&w| w > 0.0))
}

#[inline]
pub(crate) fn sign_value(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Batch-norm state for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Per-channel `y = scale * x + shift`, stored at deployment precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
}

impl BatchNormParams {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_EPSILON: f64 = 1e-3;

    pub fn identity(channels: usize) -> Self {
        BatchNormParams {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: Self::DEFAULT_MOMENTUM,
            epsilon: Self::DEFAULT_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        if [self.beta.len(), self.running_mean.len(), self.running_var.len()] != [c; 3] {
            return Err(Error::Parameter("batch-norm arrays differ in length".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Parameter(format!("epsilon {} must be positive", self.epsilon)));
        }
        if let Some(i) = self.running_var.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Parameter(format!(
                "running variance {} at channel {i} must be positive",
                self.running_var[i]
            )));
        }
        Ok(())
    }

    /// Inference-time affine: `scale = γ/√(σ²+ε)`, `shift = β − scale·μ`,
    /// rounded to `f32` as stored in model files.
    pub fn deploy_affine(&self) -> Affine {
        let mut scale = Vec::with_capacity(self.channels());
        let mut shift = Vec::with_capacity(self.channels());
        for c in 0..self.channels() {
            let a = self.gamma[c] / (self.running_var[c] + self.epsilon).sqrt();
            scale.push(a as f32);
            shift.push((self.beta[c] - a * self.running_mean[c]) as f32);
        }
        Affine { scale, shift }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    /// Latent weights of a binary layer, laid out like its weight tensor.
    Weights(Vec<f64>),
    BatchNorm(BatchNormParams),
    Empty,
}

/// Trainable state of a network: one entry per layer of its config.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentWeights {
    pub precision: Precision,
    pub layers: Vec<LayerParams>,
    version: u64,
}

impl LatentWeights {
    /// Latent weights uniform in `[-0.1, 0.1]`, batch norm at identity.
    pub fn init(config: &NetworkConfig, precision: Precision, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = config
            .layers()
            .iter()
            .enumerate()
            .map(|(i, l)| match l {
                LayerSpec::BatchNorm { channels } => LayerParams::BatchNorm(BatchNormParams::identity(*channels)),
                l if l.is_binary() => LayerParams::Weights(
                    (0..config.weight_len(i))
                        .map(|_| rng.random_range(-LATENT_INIT_RANGE..=LATENT_INIT_RANGE))
                        .collect(),
                ),
                _ => LayerParams::Empty,
            })
            .collect();
        LatentWeights { precision, layers, version: 0 }
    }

    pub fn from_layers(precision: Precision, layers: Vec<LayerParams>) -> Self {
        LatentWeights { precision, layers, version: 0 }
    }

    /// Incremented on every mutation made through the training API; forward
    /// caches record it so stale caches are caught.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump(&mut self) {
        self.version = self.version.wrapping_add(1);
    }

    pub fn validate_for(&self, config: &NetworkConfig) -> Result<()> {
        if self.layers.len() != config.layers().len() {
            return Err(Error::dim(format!(
                "{} parameter entries for {} layers",
                self.layers.len(),
                config.layers().len()
            )));
        }
        for (i, (p, spec)) in self.layers.iter().zip(config.layers()).enumerate() {
            match (p, spec) {
                (LayerParams::Weights(w), s) if s.is_binary() => {
                    if w.len() != config.weight_len(i) {
                        return Err(Error::dim(format!(
                            "layer {i}: {} weights, expected {}",
                            w.len(),
                            config.weight_len(i)
                        )));
                    }
                }
                (LayerParams::BatchNorm(bn), LayerSpec::BatchNorm { channels }) => {
                    if bn.channels() != *channels {
                        return Err(Error::dim(format!("layer {i}: batch-norm channel count")));
                    }
                    bn.validate()?;
                }
                (LayerParams::Empty, s) if !s.is_binary() && !matches!(s, LayerSpec::BatchNorm { .. }) => {}
                _ => return Err(Error::dim(format!("layer {i}: parameter kind does not match {spec}"))),
            }
        }
        Ok(())
    }

    pub fn weights(&self, layer: usize) -> Option<&[f64]> {
        match &self.layers[layer] {
            LayerParams::Weights(w) => Some(w),
            _ => None,
        }
    }

    pub fn batchnorm(&self, layer: usize) -> Option<&BatchNormParams> {
        match &self.layers[layer] {
            LayerParams::BatchNorm(bn) => Some(bn),
            _ => None,
        }
    }

    pub fn batchnorm_mut(&mut self, layer: usize) -> Option<&mut BatchNormParams> {
        self.bump();
        match &mut self.layers[layer] {
            LayerParams::BatchNorm(bn) => Some(bn),
            _ => None,
        }
    }

    pub fn weights_mut(&mut self, layer: usize) -> Option<&mut Vec<f64>> {
        self.bump();
        match &mut self.layers[layer] {
            LayerParams::Weights(w) => Some(w),
            _ => None,
        }
    }

    /// Weights used in the forward pass: `±1` for binary precision,
    /// the latent values themselves for full precision.
    pub fn effective_weights(&self, layer: usize) -> Option<Vec<f64>> {
        let w = self.weights(layer)?;
        Some(match self.precision {
            Precision::Binary => w.iter().map(|&v| sign_value(v)).collect(),
            Precision::Full => w.to_vec(),
        })
    }

    /// Clips every binary-layer latent weight into `[-1, 1]`.
    pub fn clip_latent(&mut self) {
        if self.precision == Precision::Full {
            return;
        }
        for p in &mut self.layers {
            if let LayerParams::Weights(w) = p {
                for v in w.iter_mut() {
                    *v = v.clamp(-1.0, 1.0);
                }
            }
        }
        self.bump();
    }

    /// Returns true when every binary-layer latent weight lies in `[-1, 1]`.
    pub fn latent_in_range(&self) -> bool {
        self.layers.iter().all(|p| match p {
            LayerParams::Weights(w) => w.iter().all(|v| (-1.0..=1.0).contains(v)),
            _ => true,
        })
    }
}
