#![allow(dead_code)]

use bpnet::net::{LatentWeights, LayerParams, LayerSpec, NetworkConfig, Precision, Shape};
use rand::Rng;

/// A small conv → pool → bn → sign → dense → bn → sign → dense → bn
/// network with random sizes.
pub fn random_network(rng: &mut impl Rng) -> NetworkConfig {
    use LayerSpec::*;
    let h = rng.random_range(1..=4);
    let w = rng.random_range(12..=40);
    let kh = rng.random_range(1..=h);
    let kw = rng.random_range(1..=5);
    let classes = rng.random_range(2..=6);
    let mut layers = vec![
        BinConv2d { filters: rng.random_range(1..=6), kernel: (kh, kw), stride: (1, rng.random_range(1..=2)) },
    ];
    if rng.random_bool(0.5) {
        layers.push(MaxPool { pool: (1, 2) });
    }
    layers.extend([
        BatchNorm { channels: 0 },
        Sign,
        BinDense { units: rng.random_range(3..=20) },
        BatchNorm { channels: 0 },
        Sign,
        BinDense { units: classes },
        BatchNorm { channels: 0 },
        Softmax,
    ]);
    NetworkConfig::new("rand", Shape::new(1, h, w), layers, classes).unwrap()
}

/// Latents uniform in [-1, 1] and batch norm with random affine and
/// running statistics.
pub fn random_weights(cfg: &NetworkConfig, precision: Precision, rng: &mut impl Rng) -> LatentWeights {
    let mut w = LatentWeights::init(cfg, precision, rng.random());
    for p in &mut w.layers {
        match p {
            // f32-representable so a full-precision export is lossless
            LayerParams::Weights(v) => v.iter_mut().for_each(|x| *x = f64::from(rng.random_range(-1.0f32..1.0))),
            LayerParams::BatchNorm(bn) => {
                for c in 0..bn.gamma.len() {
                    bn.gamma[c] = rng.random_range(-2.0..2.0);
                    bn.beta[c] = rng.random_range(-1.0..1.0);
                    bn.running_mean[c] = rng.random_range(-3.0..3.0);
                    bn.running_var[c] = rng.random_range(0.1..5.0);
                }
            }
            LayerParams::Empty => {}
        }
    }
    w
}

/// One binary convolution over all six sensor rows, then a dense layer.
pub fn tiny_gait_network(classes: usize) -> NetworkConfig {
    use LayerSpec::*;
    NetworkConfig::new(
        "tiny",
        Shape::new(1, 6, 200),
        vec![
            BinConv2d { filters: 16, kernel: (6, 5), stride: (1, 5) },
            BatchNorm { channels: 0 },
            Sign,
            BinDense { units: classes },
            BatchNorm { channels: 0 },
            Softmax,
        ],
        classes,
    )
    .unwrap()
}

/// Scaled train and validation sets from synthetic users `0..users`.
pub fn gait_datasets(users: usize, cycles: usize, seed: u64) -> (bpnet::train::Dataset, bpnet::train::Dataset) {
    use bpnet::gait::{channel_scale, generate_synthetic, SyntheticConfig};
    use bpnet::train::{split_dataset, Dataset, LabelMap};
    let all = generate_synthetic(&SyntheticConfig::new(users, cycles, seed)).unwrap();
    let labels = LabelMap::from_cycles(&all);
    let split = split_dataset(&all, (0.8, 0.2), seed).unwrap();
    let scale = channel_scale(&split.train, 6);
    let shape = Shape::new(1, 6, 200);
    let make = |c: &[bpnet::gait::GaitCycle]| Dataset::from_cycles(c, shape, &scale, |g| labels.class_of(g.user_id)).unwrap();
    (make(&split.train), make(&split.val))
}
