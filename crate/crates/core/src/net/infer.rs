//! Deployable models and the bit-packed inference path.
//!
//! Hidden binary layers run as XNOR/popcount over packed activations and
//! batch norm followed by `sign` collapses into a per-channel integer
//! threshold. The first layer sees real sensor values, so it accumulates
//! `±x` in floating point and compares against a real threshold. The
//! final batch norm (no `sign` after it) is applied as a real affine to
//! the integer accumulators to produce logits.

use std::collections::BTreeMap;

use crate::bits::BitTensor;
use crate::error::{Error, Result};
use crate::kernels::{xnor_gemm_nt, PackedRows, PatchGeometry};
use crate::net::config::{LayerSpec, NetworkConfig, Shape};
use crate::net::params::{binarize, Affine, BatchNormParams, LatentWeights, LayerParams, Precision};

/// Which side of the threshold produces `+1`. Comparisons are strict so
/// that a value landing exactly on the threshold maps to `-1`, the same as
/// `sign(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// `+1` iff `x > tau`.
    Above,
    /// `+1` iff `x < tau`.
    Below,
    /// Constant `+1` (zero gain, positive bias).
    Always,
    /// Constant `-1`.
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub tau: f64,
    pub comparison: Comparison,
}

impl Threshold {
    #[inline]
    pub fn fire(&self, x: f64) -> bool {
        match self.comparison {
            Comparison::Above => x > self.tau,
            Comparison::Below => x < self.tau,
            Comparison::Always => true,
            Comparison::Never => false,
        }
    }

    /// Threshold equivalent to `sign(scale·x + shift)`.
    pub fn from_affine(scale: f64, shift: f64) -> Self {
        if scale == 0.0 {
            let comparison = if shift > 0.0 { Comparison::Always } else { Comparison::Never };
            return Threshold { tau: 0.0, comparison };
        }
        let comparison = if scale > 0.0 { Comparison::Above } else { Comparison::Below };
        Threshold { tau: -shift / scale, comparison }
    }
}

/// Folds `sign(γ·(x−μ)/√(σ²+ε) + β)` into a threshold on `x`:
/// `τ = μ − β·√(σ²+ε)/γ`, compared above for `γ > 0` and below for `γ < 0`.
pub fn fold_batchnorm(gamma: f64, beta: f64, mean: f64, var: f64, epsilon: f64) -> Result<Threshold> {
    if !(var > 0.0) {
        return Err(Error::Parameter(format!("variance {var} must be positive")));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::Parameter(format!("epsilon {epsilon} must be non-negative")));
    }
    let std = (var + epsilon).sqrt();
    if gamma == 0.0 {
        let comparison = if beta > 0.0 { Comparison::Always } else { Comparison::Never };
        return Ok(Threshold { tau: mean, comparison });
    }
    let comparison = if gamma > 0.0 { Comparison::Above } else { Comparison::Below };
    Ok(Threshold { tau: mean - beta * std / gamma, comparison })
}

/// Integer form of a folded threshold: exact for integer accumulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IntThreshold {
    AtLeast(i64),
    AtMost(i64),
    Always,
    Never,
}

impl IntThreshold {
    /// Reproduces `scale·x + shift > 0` exactly over the integers, with the
    /// expression evaluated in `f64` the same way the real-valued path does.
    fn from_affine(scale: f64, shift: f64) -> Self {
        let fires = |x: i64| scale * x as f64 + shift > 0.0;
        const LIMIT: f64 = (1u64 << 40) as f64;
        if scale == 0.0 {
            return if shift > 0.0 { IntThreshold::Always } else { IntThreshold::Never };
        }
        let tau = (-shift / scale).clamp(-LIMIT, LIMIT);
        let mut t = tau.floor() as i64;
        if scale > 0.0 {
            while fires(t - 1) {
                t -= 1;
            }
            while !fires(t) {
                t += 1;
            }
            IntThreshold::AtLeast(t)
        } else {
            while !fires(t) {
                t -= 1;
            }
            while fires(t + 1) {
                t += 1;
            }
            IntThreshold::AtMost(t)
        }
    }

    #[inline]
    fn fire(self, x: i32) -> bool {
        let x = i64::from(x);
        match self {
            IntThreshold::AtLeast(t) => x >= t,
            IntThreshold::AtMost(t) => x <= t,
            IntThreshold::Always => true,
            IntThreshold::Never => false,
        }
    }
}

/// Stored parameters of one layer of a deployable model.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelLayer {
    Binary(BitTensor),
    /// Full-precision twin weights.
    Real(Vec<f32>),
    BatchNorm(Affine),
    None,
}

#[derive(Debug, Clone)]
enum Step {
    Conv { geom: PatchGeometry, filters: usize, packed: PackedRows, signs: Vec<i8> },
    Dense { packed: PackedRows, signs: Vec<i8>, units: usize },
    RealConv { geom: PatchGeometry, filters: usize, weights: Vec<f64> },
    RealDense { weights: Vec<f64>, units: usize },
    MaxPool { input: Shape, output: Shape, pool: (usize, usize) },
    /// Batch norm followed by `sign`.
    Threshold { plane: usize, real: Vec<Threshold>, int: Vec<IntThreshold> },
    Affine { plane: usize, scale: Vec<f64>, shift: Vec<f64> },
    Sign,
    Clip,
}

/// Deployable model: packed binary weights plus per-channel affines.
#[derive(Debug, Clone)]
pub struct BinarizedModel {
    config: NetworkConfig,
    precision: Precision,
    layers: Vec<ModelLayer>,
    input_scale: Vec<f32>,
    metadata: BTreeMap<String, String>,
    plan: Vec<Step>,
}

impl PartialEq for BinarizedModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.precision == other.precision
            && self.layers == other.layers
            && self.input_scale == other.input_scale
            && self.metadata == other.metadata
    }
}

impl BinarizedModel {
    pub fn new(
        config: NetworkConfig,
        precision: Precision,
        layers: Vec<ModelLayer>,
        input_scale: Vec<f32>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        if layers.len() != config.layers().len() {
            return Err(Error::dim(format!(
                "{} stored layers for {} config layers",
                layers.len(),
                config.layers().len()
            )));
        }
        if !input_scale.is_empty() && input_scale.len() != config.input_shape().height {
            return Err(Error::dim(format!(
                "{} input scales for {} sensor rows",
                input_scale.len(),
                config.input_shape().height
            )));
        }
        for (i, (stored, spec)) in layers.iter().zip(config.layers()).enumerate() {
            let ok = match (stored, spec) {
                (ModelLayer::Binary(t), s) if s.is_binary() && precision == Precision::Binary => {
                    Some(t.shape()) == config.weight_shape(i).as_deref()
                }
                (ModelLayer::Real(w), s) if s.is_binary() && precision == Precision::Full => {
                    w.len() == config.weight_len(i)
                }
                (ModelLayer::BatchNorm(a), LayerSpec::BatchNorm { channels }) => {
                    a.scale.len() == *channels && a.shift.len() == *channels
                }
                (ModelLayer::None, s) => !s.is_binary() && !matches!(s, LayerSpec::BatchNorm { .. }),
                _ => false,
            };
            if !ok {
                return Err(Error::dim(format!("stored layer {i} does not match {spec}")));
            }
        }
        let plan = compile(&config, precision, &layers)?;
        Ok(BinarizedModel { config, precision, layers, input_scale, metadata, plan })
    }

    /// Drops latent weights, keeping `binarize(latent)` and the deployable
    /// batch-norm affines.
    pub fn from_latent(config: &NetworkConfig, weights: &LatentWeights, input_scale: Vec<f32>) -> Result<Self> {
        weights.validate_for(config)?;
        let layers = weights
            .layers
            .iter()
            .enumerate()
            .map(|(i, p)| match p {
                LayerParams::Weights(w) => match weights.precision {
                    Precision::Binary => BitTensor::from_signs(config.weight_shape(i).unwrap(), &binarize(w))
                        .map(ModelLayer::Binary),
                    Precision::Full => Ok(ModelLayer::Real(w.iter().map(|&v| v as f32).collect())),
                },
                LayerParams::BatchNorm(bn) => Ok(ModelLayer::BatchNorm(bn.deploy_affine())),
                LayerParams::Empty => Ok(ModelLayer::None),
            })
            .collect::<Result<Vec<_>>>()?;
        BinarizedModel::new(config.clone(), weights.precision, layers, input_scale, BTreeMap::new())
    }

    /// Rebuilds latent weights from the stored model. Binary weights become
    /// `±1` latents; batch norm becomes zero-mean unit-variance statistics
    /// with gains chosen so that re-exporting gives back the same affine.
    pub fn to_latent(&self) -> LatentWeights {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                ModelLayer::Binary(t) => LayerParams::Weights((0..t.logical_len()).map(|i| f64::from(t.sign(i))).collect()),
                ModelLayer::Real(w) => LayerParams::Weights(w.iter().map(|&v| f64::from(v)).collect()),
                ModelLayer::BatchNorm(a) => {
                    let mut bn = BatchNormParams::identity(a.scale.len());
                    let std = (1.0 + bn.epsilon).sqrt();
                    bn.gamma = a.scale.iter().map(|&s| f64::from(s) * std).collect();
                    bn.beta = a.shift.iter().map(|&s| f64::from(s)).collect();
                    LayerParams::BatchNorm(bn)
                }
                ModelLayer::None => LayerParams::Empty,
            })
            .collect();
        LatentWeights::from_layers(self.precision, layers)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn layers(&self) -> &[ModelLayer] {
        &self.layers
    }

    /// Per-sensor-row standard deviations applied to cycles before
    /// inference (empty means identity).
    pub fn input_scale(&self) -> &[f32] {
        &self.input_scale
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn with_metadata(mut self, metadata: BTreeMap<String, String>) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn with_input_scale(mut self, scale: Vec<f32>) -> Result<Self> {
        if !scale.is_empty() && scale.len() != self.config.input_shape().height {
            return Err(Error::dim("input scale length must equal sensor rows"));
        }
        self.input_scale = scale;
        Ok(self)
    }

    pub fn class_count(&self) -> usize {
        self.config.class_count()
    }
}

fn compile(config: &NetworkConfig, precision: Precision, layers: &[ModelLayer]) -> Result<Vec<Step>> {
    let specs = config.layers();
    let mut plan = Vec::with_capacity(specs.len());
    let mut i = 0;
    while i < specs.len() {
        let input = config.shape_before(i);
        let spec = &specs[i];
        match (spec, &layers[i]) {
            (LayerSpec::BinConv2d { filters, kernel, stride }, stored) => {
                let geom = PatchGeometry::new(input.channels, input.height, input.width, *kernel, *stride)?;
                plan.push(conv_step(geom, *filters, stored)?);
            }
            (LayerSpec::BinConv1d { filters, kernel, stride }, stored) => {
                let geom = PatchGeometry::new(input.channels, 1, input.width, (1, *kernel), (1, *stride))?;
                plan.push(conv_step(geom, *filters, stored)?);
            }
            (LayerSpec::BinDense { units }, ModelLayer::Binary(t)) => {
                let d = input.len();
                plan.push(Step::Dense {
                    packed: PackedRows::from_tensor(t, *units, d)?,
                    signs: (0..t.logical_len()).map(|j| t.sign(j)).collect(),
                    units: *units,
                });
            }
            (LayerSpec::BinDense { units }, ModelLayer::Real(w)) => {
                plan.push(Step::RealDense { weights: w.iter().map(|&v| f64::from(v)).collect(), units: *units });
            }
            (LayerSpec::MaxPool { pool }, _) => {
                plan.push(Step::MaxPool { input, output: config.shape_after(i), pool: *pool })
            }
            (LayerSpec::BatchNorm { .. }, ModelLayer::BatchNorm(a)) => {
                let scale: Vec<f64> = a.scale.iter().map(|&v| f64::from(v)).collect();
                let shift: Vec<f64> = a.shift.iter().map(|&v| f64::from(v)).collect();
                let fuse = precision == Precision::Binary && matches!(specs.get(i + 1), Some(LayerSpec::Sign));
                if fuse {
                    plan.push(Step::Threshold {
                        plane: input.plane(),
                        real: scale.iter().zip(&shift).map(|(&s, &b)| Threshold::from_affine(s, b)).collect(),
                        int: scale.iter().zip(&shift).map(|(&s, &b)| IntThreshold::from_affine(s, b)).collect(),
                    });
                    i += 1;
                } else {
                    plan.push(Step::Affine { plane: input.plane(), scale, shift });
                }
            }
            (LayerSpec::Sign, _) => plan.push(match precision {
                Precision::Binary => Step::Sign,
                Precision::Full => Step::Clip,
            }),
            (LayerSpec::Softmax, _) => {}
            _ => return Err(Error::dim(format!("layer {i}: stored parameters do not match {spec}"))),
        }
        i += 1;
    }
    Ok(plan)
}

fn conv_step(geom: PatchGeometry, filters: usize, stored: &ModelLayer) -> Result<Step> {
    Ok(match stored {
        ModelLayer::Binary(t) => Step::Conv {
            geom,
            filters,
            packed: PackedRows::from_tensor(t, filters, geom.patch_len())?,
            signs: (0..t.logical_len()).map(|j| t.sign(j)).collect(),
        },
        ModelLayer::Real(w) => Step::RealConv { geom, filters, weights: w.iter().map(|&v| f64::from(v)).collect() },
        _ => return Err(Error::dim("convolution without weights")),
    })
}

/// Activation between inference steps.
#[derive(Debug, Clone)]
enum Act {
    Real(Vec<f64>),
    Int(Vec<i32>),
    /// `true` for `+1`.
    Bits(Vec<bool>),
}

impl Act {
    fn into_real(self) -> Vec<f64> {
        match self {
            Act::Real(v) => v,
            Act::Int(v) => v.into_iter().map(f64::from).collect(),
            Act::Bits(v) => v.into_iter().map(|b| if b { 1.0 } else { -1.0 }).collect(),
        }
    }
}

/// `Σ ±x` in patch order, signs taken from a `±1` weight row.
#[inline]
fn signed_sum<T: Copy + std::ops::Add<Output = T> + std::ops::Sub<Output = T>>(
    zero: T,
    signs: &[i8],
    values: impl Iterator<Item = T>,
) -> T {
    signs
        .iter()
        .zip(values)
        .fold(zero, |acc, (&s, v)| if s > 0 { acc + v } else { acc - v })
}

fn binary_layer(act: Act, rows: usize, k: usize, p: usize, index: impl Fn(usize, usize) -> usize, packed: &PackedRows, signs: &[i8]) -> Act {
    match act {
        Act::Bits(bits) => {
            let patches = PackedRows::from_fn(p, k, |pos, r| bits[index(r, pos)]);
            Act::Int(xnor_gemm_nt(packed, &patches).expect("plan shapes agree"))
        }
        Act::Int(x) => {
            let mut out = Vec::with_capacity(rows * p);
            for f in 0..rows {
                let w = &signs[f * k..(f + 1) * k];
                out.extend((0..p).map(|pos| signed_sum(0i32, w, (0..k).map(|r| x[index(r, pos)]))));
            }
            Act::Int(out)
        }
        Act::Real(x) => {
            let mut out = Vec::with_capacity(rows * p);
            for f in 0..rows {
                let w = &signs[f * k..(f + 1) * k];
                out.extend((0..p).map(|pos| signed_sum(0.0f64, w, (0..k).map(|r| x[index(r, pos)]))));
            }
            Act::Real(out)
        }
    }
}

fn real_layer(x: Vec<f64>, rows: usize, k: usize, p: usize, index: impl Fn(usize, usize) -> usize, weights: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * p);
    for f in 0..rows {
        let w = &weights[f * k..(f + 1) * k];
        out.extend((0..p).map(|pos| w.iter().enumerate().map(|(r, wv)| wv * x[index(r, pos)]).sum::<f64>()));
    }
    out
}

fn pool<T: Copy + PartialOrd>(x: &[T], input: Shape, output: Shape, (ph, pw): (usize, usize)) -> Vec<T> {
    let mut out = Vec::with_capacity(output.len());
    for c in 0..output.channels {
        for oy in 0..output.height {
            for ox in 0..output.width {
                let mut best = x[(c * input.height + oy * ph) * input.width + ox * pw];
                for i in 0..ph {
                    for j in 0..pw {
                        let v = x[(c * input.height + oy * ph + i) * input.width + ox * pw + j];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out.push(best);
            }
        }
    }
    out
}

/// Class scores (pre-softmax logits) for one normalized window laid out
/// like the network input.
pub fn forward_infer(model: &BinarizedModel, window: &[f64]) -> Result<Vec<f64>> {
    let input = model.config.input_shape();
    if window.len() != input.len() {
        return Err(Error::dim(format!(
            "window of {} values for model input {input}",
            window.len()
        )));
    }
    let mut act = Act::Real(window.to_vec());
    for step in &model.plan {
        act = match step {
            Step::Conv { geom, filters, packed, signs } => {
                binary_layer(act, *filters, geom.patch_len(), geom.positions(), |r, p| geom.source_index(r, p), packed, signs)
            }
            Step::Dense { packed, signs, units } => {
                let d = packed.bits();
                binary_layer(act, *units, d, 1, |r, _| r, packed, signs)
            }
            Step::RealConv { geom, filters, weights } => Act::Real(real_layer(
                act.into_real(),
                *filters,
                geom.patch_len(),
                geom.positions(),
                |r, p| geom.source_index(r, p),
                weights,
            )),
            Step::RealDense { weights, units } => {
                let x = act.into_real();
                let d = x.len();
                Act::Real(real_layer(x, *units, d, 1, |r, _| r, weights))
            }
            Step::MaxPool { input, output, pool: extent } => match act {
                Act::Real(x) => Act::Real(pool(&x, *input, *output, *extent)),
                Act::Int(x) => Act::Int(pool(&x, *input, *output, *extent)),
                Act::Bits(x) => Act::Bits(pool(&x, *input, *output, *extent)),
            },
            Step::Threshold { plane, real, int } => match act {
                Act::Real(x) => Act::Bits(x.iter().enumerate().map(|(i, &v)| real[i / plane].fire(v)).collect()),
                Act::Int(x) => Act::Bits(x.iter().enumerate().map(|(i, &v)| int[i / plane].fire(v)).collect()),
                Act::Bits(x) => Act::Bits(
                    x.iter()
                        .enumerate()
                        .map(|(i, &b)| int[i / plane].fire(if b { 1 } else { -1 }))
                        .collect(),
                ),
            },
            Step::Affine { plane, scale, shift } => {
                let x = act.into_real();
                Act::Real(x.iter().enumerate().map(|(i, &v)| scale[i / plane] * v + shift[i / plane]).collect())
            }
            Step::Sign => match act {
                Act::Real(x) => Act::Bits(x.iter().map(|&v| v > 0.0).collect()),
                Act::Int(x) => Act::Bits(x.iter().map(|&v| v > 0).collect()),
                bits @ Act::Bits(_) => bits,
            },
            Step::Clip => Act::Real(act.into_real().into_iter().map(|v| v.clamp(-1.0, 1.0)).collect()),
        };
    }
    Ok(act.into_real())
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::config::bipedalnet_v1;
    use crate::net::graph::{forward_trace, forward_train, Batch, Mode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bn_sign(g: f64, b: f64, m: f64, v: f64, e: f64, x: f64) -> bool {
        g * (x - m) / (v + e).sqrt() + b > 0.0
    }

    #[test]
    fn fold_examples() {
        let t = fold_batchnorm(1.0, 0.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(t, Threshold { tau: 0.0, comparison: Comparison::Above });
        let t = fold_batchnorm(2.0, 1.0, 3.0, 4.0, 0.0).unwrap();
        assert_eq!(t, Threshold { tau: 2.0, comparison: Comparison::Above });
        let t = fold_batchnorm(-1.0, 0.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(t.tau, 0.0);
        assert_eq!(t.comparison, Comparison::Below);
        assert!(fold_batchnorm(1.0, 0.0, 0.0, 0.0, 1e-3).is_err());
        assert_eq!(fold_batchnorm(0.0, 0.5, 0.0, 1.0, 0.0).unwrap().comparison, Comparison::Always);
        assert_eq!(fold_batchnorm(0.0, -0.5, 0.0, 1.0, 0.0).unwrap().comparison, Comparison::Never);
    }

    #[test]
    fn fold_matches_unfolded_on_dense_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let g = if rng.random_bool(0.05) { 0.0 } else { rng.random_range(-3.0..3.0) };
            let b = rng.random_range(-2.0..2.0);
            let m = rng.random_range(-5.0..5.0);
            let v = rng.random_range(0.01..4.0);
            let t = fold_batchnorm(g, b, m, v, 0.0).unwrap();
            // include the threshold itself and its neighbours
            let mut xs: Vec<f64> = (0..100).map(|_| rng.random_range(-20.0..20.0)).collect();
            xs.extend([t.tau, t.tau.next_up(), t.tau.next_down()]);
            for x in xs {
                // the folded form is exact in real arithmetic; skip points so
                // close to τ that rounding in the unfolded form decides
                let margin = (x - t.tau).abs();
                if margin != 0.0 && margin < 1e-9 {
                    continue;
                }
                let folded = t.fire(x);
                let direct = if margin == 0.0 && g != 0.0 { false } else { bn_sign(g, b, m, v, 0.0, x) };
                assert_eq!(folded, direct, "g={g} b={b} m={m} v={v} x={x} tau={}", t.tau);
            }
        }
    }

    #[test]
    fn integer_threshold_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..2000 {
            let scale = f64::from(rng.random_range(-4.0f32..4.0));
            let shift = if rng.random_bool(0.3) {
                // shift landing the threshold on an integer
                f64::from((-scale * f64::from(rng.random_range(-50i32..50))) as f32)
            } else {
                f64::from(rng.random_range(-200.0f32..200.0))
            };
            let t = IntThreshold::from_affine(scale, shift);
            for x in -300..300 {
                assert_eq!(t.fire(x), scale * f64::from(x) + shift > 0.0, "scale={scale} shift={shift} x={x}");
            }
        }
    }

    fn randomized_bipedalnet(seed: u64) -> (NetworkConfig, LatentWeights) {
        let cfg = bipedalnet_v1();
        let mut w = LatentWeights::init(&cfg, Precision::Binary, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        for p in &mut w.layers {
            if let LayerParams::BatchNorm(bn) = p {
                for c in 0..bn.channels() {
                    bn.gamma[c] = rng.random_range(-2.0..2.0);
                    bn.beta[c] = rng.random_range(-1.0..1.0);
                    bn.running_mean[c] = rng.random_range(-5.0..5.0);
                    bn.running_var[c] = rng.random_range(0.5..40.0);
                }
            }
        }
        (cfg, w)
    }

    #[test]
    fn packed_path_matches_real_path() {
        let (cfg, w) = randomized_bipedalnet(5);
        let model = BinarizedModel::from_latent(&cfg, &w, vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 8;
        let data: Vec<f64> = (0..n * 1200).map(|_| rng.random_range(-3.0..3.0)).collect();
        let batch = Batch::new(n, cfg.input_shape(), data).unwrap();
        let reference = forward_train(&w, &cfg, &batch, Mode::Eval).unwrap().logits;
        for s in 0..n {
            let logits = forward_infer(&model, batch.sample(s)).unwrap();
            let expect = &reference[s * 50..(s + 1) * 50];
            for (a, b) in logits.iter().zip(expect) {
                assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            }
            assert_eq!(argmax(&logits), argmax(expect));
        }
    }

    #[test]
    fn zero_window_through_fresh_model() {
        let cfg = bipedalnet_v1();
        let w = LatentWeights::init(&cfg, Precision::Binary, 8);
        let model = BinarizedModel::from_latent(&cfg, &w, vec![]).unwrap();
        let window = vec![0.0; 1200];
        let logits = forward_infer(&model, &window).unwrap();
        assert_eq!(logits.len(), 50);
        let batch = Batch::new(1, cfg.input_shape(), window).unwrap();
        let trace = forward_trace(&w, &cfg, &batch, Mode::Eval).unwrap();
        assert!(trace[0].iter().all(|&v| v == 0.0));
        assert!(trace[3].iter().all(|&v| v == -1.0));
    }

    #[test]
    fn import_then_export_is_identity() {
        let (cfg, w) = randomized_bipedalnet(6);
        let model = BinarizedModel::from_latent(&cfg, &w, vec![1.0; 6]).unwrap();
        let again = BinarizedModel::from_latent(&cfg, &model.to_latent(), vec![1.0; 6]).unwrap();
        assert_eq!(model, again);
    }

    #[test]
    fn window_shape_checked() {
        let cfg = bipedalnet_v1();
        let w = LatentWeights::init(&cfg, Precision::Binary, 8);
        let model = BinarizedModel::from_latent(&cfg, &w, vec![]).unwrap();
        assert!(matches!(forward_infer(&model, &[0.0; 600]), Err(Error::Dimension(_))));
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn full_precision_twin_matches_real_path() {
        let cfg = bipedalnet_v1();
        let mut w = LatentWeights::init(&cfg, Precision::Full, 4);
        // f32-representable latents so export is lossless
        for p in &mut w.layers {
            if let LayerParams::Weights(v) = p {
                for x in v.iter_mut() {
                    *x = f64::from(*x as f32);
                }
            }
        }
        let model = BinarizedModel::from_latent(&cfg, &w, vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..1200).map(|_| rng.random_range(-2.0..2.0)).collect();
        let reference = forward_train(&w, &cfg, &Batch::new(1, cfg.input_shape(), x.clone()).unwrap(), Mode::Eval)
            .unwrap()
            .logits;
        let logits = forward_infer(&model, &x).unwrap();
        for (a, b) in logits.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
