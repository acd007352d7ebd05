//! Real-valued execution of a network over a batch, with the cache and
//! backward pass needed for latent-weight training.
//!
//! Binary layers multiply by `binarize(latent)`; `sign` layers threshold
//! (`x > 0 → +1`, otherwise `-1`). Gradients pass through both sign
//! functions as the identity where the pre-sign value lies in `[-1, 1]`
//! and are cancelled outside it.
//!
//! In [`Mode::Eval`] batch norm applies the deployable `f32` affine, so
//! this path computes the same values as the bit-packed engine.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::PatchGeometry;
use crate::net::config::{LayerSpec, NetworkConfig, Shape};
use crate::net::params::{sign_value, LatentWeights, LayerParams, Precision};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm; records a cache for backward.
    Train,
    /// Running statistics (deployable affine); no cache.
    Eval,
}

/// A batch of samples laid out `[n, channels, height, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub n: usize,
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Batch {
    pub fn new(n: usize, shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * shape.len() {
            return Err(Error::dim(format!(
                "batch of {n} x {shape} needs {} values, got {}",
                n * shape.len(),
                data.len()
            )));
        }
        Ok(Batch { n, shape, data })
    }

    pub fn from_samples<'a>(shape: Shape, samples: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut data = Vec::new();
        let mut n = 0;
        for s in samples {
            if s.len() != shape.len() {
                return Err(Error::dim(format!("sample of {} values for {shape}", s.len())));
            }
            data.extend_from_slice(s);
            n += 1;
        }
        Ok(Batch { n, shape, data })
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let len = self.shape.len();
        &self.data[i * len..(i + 1) * len]
    }
}

#[derive(Debug, Clone)]
enum LayerCache {
    Conv { geom: PatchGeometry, cols: Vec<f64>, weights: Vec<f64>, input_grad: bool },
    Dense { input: Vec<f64>, weights: Vec<f64>, input_grad: bool },
    MaxPool { argmax: Vec<u32>, input_len: usize },
    BatchNorm { x_hat: Vec<f64>, inv_std: Vec<f64>, batch_mean: Vec<f64>, batch_var: Vec<f64> },
    Sign { input: Vec<f64> },
    Identity,
}

/// Intermediate state recorded by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    n: usize,
    classes: usize,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.n
    }
}

/// Gradient for one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerGrad {
    Weights(Vec<f64>),
    BatchNorm { gamma: Vec<f64>, beta: Vec<f64> },
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

pub struct ForwardOutput {
    /// `[n, classes]` pre-softmax scores.
    pub logits: Vec<f64>,
    pub cache: Option<ForwardCache>,
}

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    beta: f64,
    c: (&mut [f64], isize, isize),
) {
    debug_assert!(m == 0 || k == 0 || n == 0 || {
        let last = |rows: usize, cols: usize, rs: isize, cs: isize| {
            (rows as isize - 1) * rs + (cols as isize - 1) * cs
        };
        (last(m, k, a.1, a.2) as usize) < a.0.len()
            && (last(k, n, b.1, b.2) as usize) < b.0.len()
            && (last(m, n, c.1, c.2) as usize) < c.0.len()
    });
    // SAFETY: the debug assertion above documents the bounds every caller
    // upholds: each operand slice covers its full strided extent.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.0.as_mut_ptr(),
            c.1,
            c.2,
        );
    }
}

fn conv_geometry(spec: &LayerSpec, input: Shape) -> Result<PatchGeometry> {
    match *spec {
        LayerSpec::BinConv2d { kernel, stride, .. } => {
            PatchGeometry::new(input.channels, input.height, input.width, kernel, stride)
        }
        LayerSpec::BinConv1d { kernel, stride, .. } => {
            PatchGeometry::new(input.channels, 1, input.width, (1, kernel), (1, stride))
        }
        _ => unreachable!("not a convolution"),
    }
}

/// Runs the network over a batch. In [`Mode::Train`] the returned cache
/// feeds [`backward_ste`].
pub fn forward_train(
    weights: &LatentWeights,
    config: &NetworkConfig,
    batch: &Batch,
    mode: Mode,
) -> Result<ForwardOutput> {
    run_forward(weights, config, batch, mode, None)
}

/// Forward pass that also returns every layer's output (`[n, shape]` each).
pub fn forward_trace(
    weights: &LatentWeights,
    config: &NetworkConfig,
    batch: &Batch,
    mode: Mode,
) -> Result<Vec<Vec<f64>>> {
    let mut trace = Vec::new();
    run_forward(weights, config, batch, mode, Some(&mut trace))?;
    Ok(trace)
}

fn run_forward(
    weights: &LatentWeights,
    config: &NetworkConfig,
    batch: &Batch,
    mode: Mode,
    mut trace: Option<&mut Vec<Vec<f64>>>,
) -> Result<ForwardOutput> {
    if batch.shape != config.input_shape() {
        return Err(Error::dim(format!(
            "batch shape {} does not match network input {}",
            batch.shape,
            config.input_shape()
        )));
    }
    if batch.n == 0 {
        return Err(Error::dim("empty batch"));
    }
    weights.validate_for(config)?;
    let n = batch.n;
    let train = mode == Mode::Train;
    let mut x = batch.data.clone();
    let mut caches = Vec::with_capacity(config.layers().len());

    for (li, spec) in config.layers().iter().enumerate() {
        let in_shape = config.shape_before(li);
        let out_shape = config.shape_after(li);
        let (y, cache) = match spec {
            LayerSpec::BinConv2d { filters, .. } | LayerSpec::BinConv1d { filters, .. } => {
                let geom = conv_geometry(spec, in_shape)?;
                let w = weights.effective_weights(li).expect("validated");
                let (k, p) = (geom.patch_len(), geom.positions());
                let mut cols = vec![0.0; n * k * p];
                let mut y = vec![0.0; n * filters * p];
                cols.par_chunks_mut(k * p)
                    .zip(y.par_chunks_mut(filters * p))
                    .zip(x.par_chunks(in_shape.len()))
                    .for_each(|((c, out), xs)| {
                        geom.fill(xs, c);
                        gemm(*filters, k, p, (&w, k as isize, 1), (c, p as isize, 1), 0.0, (out, p as isize, 1));
                    });
                let cache = train.then_some(LayerCache::Conv { geom, cols, weights: w, input_grad: li > 0 });
                (y, cache)
            }
            LayerSpec::BinDense { units } => {
                let d = in_shape.len();
                let w = weights.effective_weights(li).expect("validated");
                let mut y = vec![0.0; n * units];
                gemm(n, d, *units, (&x, d as isize, 1), (&w, 1, d as isize), 0.0, (&mut y, *units as isize, 1));
                let cache = train.then(|| LayerCache::Dense { input: std::mem::take(&mut x), weights: w, input_grad: li > 0 });
                (y, cache)
            }
            LayerSpec::MaxPool { pool } => {
                let (y, argmax) = maxpool_forward(&x, n, in_shape, out_shape, *pool);
                (y, train.then_some(LayerCache::MaxPool { argmax, input_len: x.len() }))
            }
            LayerSpec::BatchNorm { .. } => {
                let LayerParams::BatchNorm(bn) = &weights.layers[li] else { unreachable!() };
                let (c, plane) = (in_shape.channels, in_shape.plane());
                let mut y = vec![0.0; x.len()];
                if train {
                    let m = (n * plane) as f64;
                    let mut x_hat = vec![0.0; x.len()];
                    let mut inv_std = vec![0.0; c];
                    let mut batch_mean = vec![0.0; c];
                    let mut batch_var = vec![0.0; c];
                    for ch in 0..c {
                        let idx = |s: usize, j: usize| s * c * plane + ch * plane + j;
                        let mut sum = 0.0;
                        for s in 0..n {
                            for j in 0..plane {
                                sum += x[idx(s, j)];
                            }
                        }
                        let mean = sum / m;
                        let mut sq = 0.0;
                        for s in 0..n {
                            for j in 0..plane {
                                let d = x[idx(s, j)] - mean;
                                sq += d * d;
                            }
                        }
                        let var = sq / m;
                        let is = 1.0 / (var + bn.epsilon).sqrt();
                        for s in 0..n {
                            for j in 0..plane {
                                let i = idx(s, j);
                                x_hat[i] = (x[i] - mean) * is;
                                y[i] = bn.gamma[ch] * x_hat[i] + bn.beta[ch];
                            }
                        }
                        inv_std[ch] = is;
                        batch_mean[ch] = mean;
                        batch_var[ch] = var;
                    }
                    (y, Some(LayerCache::BatchNorm { x_hat, inv_std, batch_mean, batch_var }))
                } else {
                    let affine = bn.deploy_affine();
                    for (i, (out, v)) in y.iter_mut().zip(&x).enumerate() {
                        let ch = i / plane % c;
                        *out = f64::from(affine.scale[ch]) * v + f64::from(affine.shift[ch]);
                    }
                    (y, None)
                }
            }
            LayerSpec::Sign => {
                let y: Vec<f64> = match weights.precision {
                    Precision::Binary => x.iter().map(|&v| sign_value(v)).collect(),
                    Precision::Full => x.iter().map(|&v| v.clamp(-1.0, 1.0)).collect(),
                };
                let cache = train.then(|| LayerCache::Sign { input: std::mem::take(&mut x) });
                (y, cache)
            }
            LayerSpec::Softmax => (std::mem::take(&mut x), train.then_some(LayerCache::Identity)),
        };
        if let Some(t) = trace.as_deref_mut() {
            t.push(y.clone());
        }
        if let Some(c) = cache {
            caches.push(c);
        }
        x = y;
    }

    let cache = train.then(|| ForwardCache {
        version: weights.version(),
        n,
        classes: config.class_count(),
        layers: caches,
    });
    Ok(ForwardOutput { logits: x, cache })
}

fn maxpool_forward(x: &[f64], n: usize, ins: Shape, outs: Shape, (ph, pw): (usize, usize)) -> (Vec<f64>, Vec<u32>) {
    let mut y = vec![0.0; n * outs.len()];
    let mut argmax = vec![0u32; n * outs.len()];
    for s in 0..n {
        let xs = &x[s * ins.len()..(s + 1) * ins.len()];
        for c in 0..outs.channels {
            for oy in 0..outs.height {
                for ox in 0..outs.width {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0;
                    for i in 0..ph {
                        for j in 0..pw {
                            let idx = (c * ins.height + oy * ph + i) * ins.width + ox * pw + j;
                            if xs[idx] > best {
                                best = xs[idx];
                                at = idx;
                            }
                        }
                    }
                    let o = s * outs.len() + (c * outs.height + oy) * outs.width + ox;
                    y[o] = best;
                    argmax[o] = at as u32;
                }
            }
        }
    }
    (y, argmax)
}

/// Backpropagates `grad_logits` (`[n, classes]`, gradient of the loss with
/// respect to the logits) through a training-mode cache.
pub fn backward_ste(
    weights: &LatentWeights,
    config: &NetworkConfig,
    cache: &ForwardCache,
    grad_logits: &[f64],
) -> Result<Gradients> {
    if cache.version != weights.version() {
        return Err(Error::Usage(format!(
            "stale forward cache: recorded for weight version {}, weights are at {}",
            cache.version,
            weights.version()
        )));
    }
    if cache.layers.len() != config.layers().len() || cache.classes != config.class_count() {
        return Err(Error::Usage("forward cache was produced by a different network".into()));
    }
    if grad_logits.len() != cache.n * cache.classes {
        return Err(Error::dim(format!(
            "logit gradient has {} values, expected {}",
            grad_logits.len(),
            cache.n * cache.classes
        )));
    }
    let n = cache.n;
    let mut grads = vec![LayerGrad::None; config.layers().len()];
    let mut dy = grad_logits.to_vec();

    for li in (0..config.layers().len()).rev() {
        let in_shape = config.shape_before(li);
        let spec = &config.layers()[li];
        dy = match (&cache.layers[li], spec) {
            (LayerCache::Conv { geom, cols, weights: w, input_grad }, LayerSpec::BinConv2d { filters, .. } | LayerSpec::BinConv1d { filters, .. }) => {
                let f = *filters;
                let (k, p) = (geom.patch_len(), geom.positions());
                let mut dw = vec![0.0; f * k];
                for s in 0..n {
                    let dout = &dy[s * f * p..(s + 1) * f * p];
                    let c = &cols[s * k * p..(s + 1) * k * p];
                    gemm(f, p, k, (dout, p as isize, 1), (c, 1, p as isize), 1.0, (&mut dw, k as isize, 1));
                }
                grads[li] = LayerGrad::Weights(latent_grad(weights, li, dw));
                let mut dx = vec![0.0; n * in_shape.len()];
                if *input_grad {
                    dx.par_chunks_mut(in_shape.len())
                        .zip(dy.par_chunks(f * p))
                        .for_each(|(dxs, dout)| {
                            let mut dcols = vec![0.0; k * p];
                            gemm(k, f, p, (w, 1, k as isize), (dout, p as isize, 1), 0.0, (&mut dcols, p as isize, 1));
                            geom.accumulate(&dcols, dxs);
                        });
                }
                dx
            }
            (LayerCache::Dense { input, weights: w, input_grad }, LayerSpec::BinDense { units }) => {
                let (u, d) = (*units, in_shape.len());
                let mut dw = vec![0.0; u * d];
                gemm(u, n, d, (&dy, 1, u as isize), (input, d as isize, 1), 0.0, (&mut dw, d as isize, 1));
                grads[li] = LayerGrad::Weights(latent_grad(weights, li, dw));
                let mut dx = vec![0.0; n * d];
                if *input_grad {
                    gemm(n, u, d, (&dy, u as isize, 1), (w, d as isize, 1), 0.0, (&mut dx, d as isize, 1));
                }
                dx
            }
            (LayerCache::MaxPool { argmax, input_len }, LayerSpec::MaxPool { .. }) => {
                let out_len = config.shape_after(li).len();
                let mut dx = vec![0.0; *input_len];
                for (o, g) in dy.iter().enumerate() {
                    let s = o / out_len;
                    dx[s * in_shape.len() + argmax[o] as usize] += g;
                }
                dx
            }
            (LayerCache::BatchNorm { x_hat, inv_std, .. }, LayerSpec::BatchNorm { .. }) => {
                let bn = weights.batchnorm(li).expect("validated");
                let (c, plane) = (in_shape.channels, in_shape.plane());
                let m = (n * plane) as f64;
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for (i, g) in dy.iter().enumerate() {
                    let ch = i / plane % c;
                    dbeta[ch] += g;
                    dgamma[ch] += g * x_hat[i];
                }
                let mut dx = vec![0.0; dy.len()];
                for (i, out) in dx.iter_mut().enumerate() {
                    let ch = i / plane % c;
                    *out = bn.gamma[ch] * inv_std[ch] / m * (m * dy[i] - dbeta[ch] - x_hat[i] * dgamma[ch]);
                }
                grads[li] = LayerGrad::BatchNorm { gamma: dgamma, beta: dbeta };
                dx
            }
            (LayerCache::Sign { input }, LayerSpec::Sign) => dy
                .iter()
                .zip(input)
                .map(|(g, x)| if x.abs() <= 1.0 { *g } else { 0.0 })
                .collect(),
            (LayerCache::Identity, LayerSpec::Softmax) => dy,
            _ => return Err(Error::Usage(format!("cache entry {li} does not match layer {spec}"))),
        };
    }
    Ok(Gradients { layers: grads })
}

fn latent_grad(weights: &LatentWeights, layer: usize, mut dw: Vec<f64>) -> Vec<f64> {
    if weights.precision == Precision::Binary {
        let latent = weights.weights(layer).expect("validated");
        for (g, w) in dw.iter_mut().zip(latent) {
            if w.abs() > 1.0 {
                *g = 0.0;
            }
        }
    }
    dw
}

/// Folds the batch statistics of a training-mode pass into running
/// statistics: `running ← momentum·running + (1−momentum)·batch`, with the
/// unbiased batch variance.
pub fn update_running_stats(weights: &mut LatentWeights, config: &NetworkConfig, cache: &ForwardCache) {
    let n = cache.n;
    for (li, c) in cache.layers.iter().enumerate() {
        if let LayerCache::BatchNorm { batch_mean, batch_var, .. } = c {
            let m = n * config.shape_before(li).plane();
            let correction = if m > 1 { m as f64 / (m - 1) as f64 } else { 1.0 };
            let bn = weights.batchnorm_mut(li).expect("cache matches weights");
            for ch in 0..batch_mean.len() {
                bn.running_mean[ch] = bn.momentum * bn.running_mean[ch] + (1.0 - bn.momentum) * batch_mean[ch];
                let v = bn.momentum * bn.running_var[ch] + (1.0 - bn.momentum) * batch_var[ch] * correction;
                bn.running_var[ch] = v.max(f64::MIN_POSITIVE);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::pack;
    use crate::kernels::xnor_dot;
    use crate::net::config::bipedalnet_v1;
    use crate::net::params::binarize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_net(input: usize, units: usize) -> NetworkConfig {
        NetworkConfig::new("dense", Shape::flat(input), vec![LayerSpec::BinDense { units }], units).unwrap()
    }

    #[test]
    fn dense_layer_reproduces_xnor_dot() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (d, u) = (37, 4);
        let cfg = dense_net(d, u);
        let mut w = LatentWeights::init(&cfg, Precision::Binary, 0);
        let latent: Vec<f64> = (0..d * u).map(|_| rng.random_range(-1.0..1.0)).collect();
        *w.weights_mut(0).unwrap() = latent.clone();
        let x: Vec<f64> = (0..d).map(|_| if rng.random() { 1.0 } else { -1.0 }).collect();
        let out = forward_train(&w, &cfg, &Batch::new(1, Shape::flat(d), x.clone()).unwrap(), Mode::Eval).unwrap();
        let xb = pack(&binarize(&x));
        for j in 0..u {
            let row = pack(&binarize(&latent[j * d..(j + 1) * d]));
            assert_eq!(out.logits[j], f64::from(xnor_dot(&row, &xb).unwrap()));
        }
    }

    #[test]
    fn bipedalnet_yields_50_logits() {
        let cfg = bipedalnet_v1();
        let w = LatentWeights::init(&cfg, Precision::Binary, 3);
        let batch = Batch::new(2, cfg.input_shape(), vec![0.5; 2 * 1200]).unwrap();
        let out = forward_train(&w, &cfg, &batch, Mode::Train).unwrap();
        assert_eq!(out.logits.len(), 100);
        assert!(out.cache.is_some());
        let out = forward_train(&w, &cfg, &batch, Mode::Eval).unwrap();
        assert_eq!(out.logits.len(), 100);
        assert!(out.cache.is_none());
    }

    #[test]
    fn wrong_input_shape() {
        let cfg = bipedalnet_v1();
        let w = LatentWeights::init(&cfg, Precision::Binary, 3);
        let batch = Batch::new(1, Shape::new(1, 3, 200), vec![0.0; 600]).unwrap();
        assert!(matches!(forward_train(&w, &cfg, &batch, Mode::Eval), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_input_first_layer() {
        let cfg = bipedalnet_v1();
        let w = LatentWeights::init(&cfg, Precision::Binary, 3);
        let batch = Batch::new(1, cfg.input_shape(), vec![0.0; 1200]).unwrap();
        let trace = forward_trace(&w, &cfg, &batch, Mode::Eval).unwrap();
        assert!(trace[0].iter().all(|&v| v == 0.0));
        assert!(trace[3].iter().all(|&v| v == -1.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let cfg = dense_net(8, 2);
        let mut w = LatentWeights::init(&cfg, Precision::Binary, 0);
        let batch = Batch::new(1, Shape::flat(8), vec![1.0; 8]).unwrap();
        let out = forward_train(&w, &cfg, &batch, Mode::Train).unwrap();
        let cache = out.cache.unwrap();
        backward_ste(&w, &cfg, &cache, &[0.1, -0.1]).unwrap();
        w.clip_latent();
        assert!(matches!(backward_ste(&w, &cfg, &cache, &[0.1, -0.1]), Err(Error::Usage(_))));
    }

    #[test]
    fn weights_outside_unit_interval_get_no_gradient() {
        let cfg = dense_net(4, 1);
        let mut w = LatentWeights::init(&cfg, Precision::Binary, 0);
        *w.weights_mut(0).unwrap() = vec![1.5, 0.5, -0.5, -2.0];
        let batch = Batch::new(1, Shape::flat(4), vec![1.0, -1.0, 1.0, 1.0]).unwrap();
        let out = forward_train(&w, &cfg, &batch, Mode::Train).unwrap();
        let g = backward_ste(&w, &cfg, &out.cache.unwrap(), &[1.0]).unwrap();
        let LayerGrad::Weights(dw) = &g.layers[0] else { panic!() };
        assert_eq!(dw, &vec![0.0, -1.0, 1.0, 0.0]);
    }

    #[test]
    fn sign_gradient_is_clipped_identity() {
        let cfg = NetworkConfig::new(
            "s",
            Shape::flat(3),
            vec![LayerSpec::Sign, LayerSpec::BinDense { units: 1 }],
            1,
        )
        .unwrap();
        let mut w = LatentWeights::init(&cfg, Precision::Binary, 0);
        *w.weights_mut(1).unwrap() = vec![0.5, 0.5, -0.5];
        let batch = Batch::new(1, Shape::flat(3), vec![0.3, -4.0, 1.0]).unwrap();
        let out = forward_train(&w, &cfg, &batch, Mode::Train).unwrap();
        assert_eq!(out.logits, vec![1.0 - 1.0 - 1.0]);
        let g = backward_ste(&w, &cfg, &out.cache.unwrap(), &[2.0]).unwrap();
        let LayerGrad::Weights(dw) = &g.layers[1] else { panic!() };
        assert_eq!(dw, &vec![2.0, -2.0, 2.0]);
    }

    #[test]
    fn running_stats_move_toward_batch() {
        let cfg = NetworkConfig::new(
            "bn",
            Shape::flat(2),
            vec![LayerSpec::BatchNorm { channels: 2 }],
            2,
        )
        .unwrap();
        let mut w = LatentWeights::init(&cfg, Precision::Binary, 0);
        let batch = Batch::new(2, Shape::flat(2), vec![1.0, 10.0, 3.0, 10.0]).unwrap();
        let out = forward_train(&w, &cfg, &batch, Mode::Train).unwrap();
        update_running_stats(&mut w, &cfg, &out.cache.unwrap());
        let bn = w.batchnorm(0).unwrap();
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_mean[1] - 1.0).abs() < 1e-12);
        // unbiased variance of [1, 3] is 2
        assert!((bn.running_var[0] - (0.9 + 0.2)).abs() < 1e-12);
        assert!(bn.running_var[1] > 0.0);
    }
}
