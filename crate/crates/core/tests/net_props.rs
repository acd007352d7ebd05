mod common;

use bpnet::net::{
    argmax, bipedalnet_v1, fold_batchnorm, forward_infer, forward_train, BinarizedModel, Batch, Mode, Precision,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// sign(γ(x − μ)/q + β) on dyadic rationals scaled to integers: with q > 0
/// the sign is that of γ(x − μ) + βq.
fn exact_fires(gamma: i128, beta: i128, mean: i128, q: i128, x: i128) -> bool {
    gamma * (x - mean) + beta * q > 0
}

proptest! {
    #[test]
    fn fold_reproduces_sign_of_batchnorm(
        gk in -3i32..=3, gsign in prop::bool::ANY, zero_gamma in prop::bool::weighted(0.05),
        bi in -32i64..=32, qj in 1i64..=32, mi in -64i64..=64,
        offsets in prop::collection::vec(-300i64..=300, 50),
    ) {
        // γ = ±2^gk, β = bi/16, q = √(σ²) = qj/8, μ = mi/16: τ is exact in f64
        let gamma = if zero_gamma { 0.0 } else if gsign { 2f64.powi(gk) } else { -(2f64.powi(gk)) };
        let (beta, q, mean) = (bi as f64 / 16.0, qj as f64 / 8.0, mi as f64 / 16.0);
        let t = fold_batchnorm(gamma, beta, mean, q * q, 0.0).unwrap();
        // common denominator 2^20 keeps every quantity integral
        let scale = (1i128 << 20) as f64;
        let int = |v: f64| { let s = v * scale; assert_eq!(s.fract(), 0.0); s as i128 };
        let mut xs: Vec<f64> = offsets.iter().map(|&d| t.tau + d as f64 / 1024.0).collect();
        xs.push(t.tau);
        for x in xs {
            let expect = exact_fires(int(gamma), int(beta), int(mean), int(q), int(x));
            prop_assert_eq!(t.fire(x), expect, "γ={} β={} μ={} q={} x={} τ={}", gamma, beta, mean, q, x, t.tau);
        }
    }
}

#[test]
fn packed_and_real_paths_agree_on_random_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..60 {
        let cfg = common::random_network(&mut rng);
        let precision = if rng.random_bool(0.2) { Precision::Full } else { Precision::Binary };
        let w = common::random_weights(&cfg, precision, &mut rng);
        let model = BinarizedModel::from_latent(&cfg, &w, vec![]).unwrap();
        let n = 16;
        let len = cfg.input_shape().len();
        let data: Vec<f64> = (0..n * len).map(|_| rng.random_range(-3.0..3.0)).collect();
        let batch = Batch::new(n, cfg.input_shape(), data).unwrap();
        let reference = forward_train(&w, &cfg, &batch, Mode::Eval).unwrap().logits;
        let k = cfg.class_count();
        for s in 0..n {
            let got = forward_infer(&model, batch.sample(s)).unwrap();
            let want = &reference[s * k..(s + 1) * k];
            assert_eq!(argmax(&got), argmax(want));
            for (a, b) in got.iter().zip(want) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn bipedalnet_shape_chain() {
    let cfg = bipedalnet_v1();
    let dims: Vec<(usize, usize, usize)> = (0..cfg.layers().len())
        .map(|i| {
            let s = cfg.shape_after(i);
            (s.channels, s.height, s.width)
        })
        .collect();
    let convs_and_pools: Vec<(usize, usize, usize)> = [0, 1, 4, 5, 8, 9, 12, 13, 16, 20].iter().map(|&i| dims[i]).collect();
    assert_eq!(
        convs_and_pools,
        vec![
            (32, 4, 196),
            (32, 2, 98),
            (64, 1, 94),
            (64, 1, 47),
            (128, 1, 45),
            (128, 1, 22),
            (128, 1, 20),
            (128, 1, 10),
            (152, 1, 1),
            (50, 1, 1),
        ]
    );
    assert_eq!(cfg.binary_param_count(), 296_848);
    assert_eq!(cfg.real_param_count(), 2 * (32 + 64 + 128 + 128 + 152) + 2 * 50);
}
