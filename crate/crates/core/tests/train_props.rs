mod common;

use bpnet::net::{Gradients, LatentWeights, LayerGrad, LayerParams, LayerSpec, NetworkConfig, Precision, Shape};
use bpnet::train::{
    adam_step, scheduler_step, shuffled_batches, train, train_epochs, AdamConfig, AdamState, PlateauScheduler, SchedulerConfig,
    TrainConfig, TrainState,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn zero_grads(w: &LatentWeights) -> Gradients {
    Gradients {
        layers: w
            .layers
            .iter()
            .map(|p| match p {
                LayerParams::Weights(v) => LayerGrad::Weights(vec![0.0; v.len()]),
                LayerParams::BatchNorm(bn) => {
                    LayerGrad::BatchNorm { gamma: vec![0.0; bn.channels()], beta: vec![0.0; bn.channels()] }
                }
                LayerParams::Empty => LayerGrad::None,
            })
            .collect(),
    }
}

fn scalar_net() -> NetworkConfig {
    NetworkConfig::new("s", Shape::flat(1), vec![LayerSpec::BinDense { units: 1 }], 1).unwrap()
}

proptest! {
    #[test]
    fn zero_gradient_changes_nothing(seed in any::<u64>(), t in 0u64..10_000, lr in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = common::random_network(&mut rng);
        let mut w = common::random_weights(&cfg, Precision::Binary, &mut rng);
        let mut state = AdamState::new(&w, AdamConfig { lr, ..AdamConfig::default() }).unwrap();
        state.t = t;
        for (m, v) in state.m.iter_mut().zip(&mut state.v) {
            m.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
            v.iter_mut().for_each(|x| *x = rng.random_range(0.0..1.0));
        }
        let (w0, s0) = (w.clone(), state.clone());
        adam_step(&mut state, &mut w, &zero_grads(&w0)).unwrap();
        prop_assert_eq!(&w.layers, &w0.layers);
        prop_assert_eq!(&state.m, &s0.m);
        prop_assert_eq!(&state.v, &s0.v);
        prop_assert_eq!(state.t, t + 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_gradient_sign(g in -10.0f64..10.0, x in -0.5f64..0.5, lr in 1e-5f64..0.1) {
        prop_assume!(g != 0.0);
        let cfg = AdamConfig { lr, ..AdamConfig::default() };
        let mut w = LatentWeights::init(&scalar_net(), Precision::Binary, 0);
        w.weights_mut(0).unwrap()[0] = x;
        let mut state = AdamState::new(&w, cfg).unwrap();
        adam_step(&mut state, &mut w, &Gradients { layers: vec![LayerGrad::Weights(vec![g])] }).unwrap();
        // bias correction makes m̂ = g and v̂ = g² on the first step
        let expect = (x - lr * g / (g.abs() + cfg.epsilon)).clamp(-1.0, 1.0);
        let got = w.weights(0).unwrap()[0];
        prop_assert!((got - expect).abs() <= 1e-15, "{got} vs {expect}");
    }

    #[test]
    fn steps_keep_latents_clipped(gs in prop::collection::vec(-1e3f64..1e3, 1..200), lr in 0.0f64..5.0) {
        let mut w = LatentWeights::init(&scalar_net(), Precision::Binary, 0);
        let mut state = AdamState::new(&w, AdamConfig { lr, ..AdamConfig::default() }).unwrap();
        for g in gs {
            adam_step(&mut state, &mut w, &Gradients { layers: vec![LayerGrad::Weights(vec![g])] }).unwrap();
            prop_assert!(w.latent_in_range());
        }
    }

    #[test]
    fn scheduler_only_decays_and_respects_floor(
        accs in prop::collection::vec(0.0f64..1.0, 1..200),
        patience in 0usize..8, factor in 0.05f64..0.95, min_lr in 0.0f64..1e-3,
    ) {
        let cfg = SchedulerConfig { factor, patience, min_delta: 1e-4, min_lr };
        let mut s = PlateauScheduler::new(cfg).unwrap();
        let mut lr = 1e-2;
        for a in accs {
            let next = scheduler_step(&mut s, a, lr);
            prop_assert!(next <= lr);
            prop_assert!(next >= min_lr);
            prop_assert!(next == lr || next == (lr * factor).max(min_lr));
            lr = next;
        }
    }
}

#[test]
fn six_flat_epochs_halve_the_rate() {
    let mut s = PlateauScheduler::new(SchedulerConfig::default()).unwrap();
    let mut lr = 1e-3;
    let mut trace = vec![];
    for _ in 0..7 {
        lr = scheduler_step(&mut s, 0.5, lr);
        trace.push(lr);
    }
    // the first epoch sets the best value, the next six do not improve on it
    assert_eq!(trace, [1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 5e-4]);
}

#[test]
fn training_is_deterministic_and_latents_stay_clipped() {
    let (tr, val) = common::gait_datasets(3, 30, 4);
    let cfg = common::tiny_gait_network(3);
    let hp = TrainConfig { seed: 11, epochs: 3, batch_size: 16, ..TrainConfig::default() };
    let (a, run_a) = train(&cfg, &tr, &val, &hp).unwrap();
    let (b, run_b) = train(&cfg, &tr, &val, &hp).unwrap();
    assert_eq!(a, b);
    assert_eq!(run_a, run_b);
    let other = train(&cfg, &tr, &val, &TrainConfig { seed: 12, ..hp.clone() }).unwrap().0;
    assert_ne!(other.weights, a.weights);

    let state = TrainState::init(&cfg, &hp).unwrap();
    let mut steps = 0;
    let mut sampler = |e: usize| shuffled_batches(tr.len(), 16, 11, e);
    let mut check = |s: &TrainState| {
        assert!(s.weights.latent_in_range());
        steps += 1;
    };
    let (resumed, log) = train_epochs(state, &tr, Some(&val), 3, &mut sampler, &mut check).unwrap();
    assert_eq!(steps, 3 * tr.len().div_ceil(16));
    assert_eq!(resumed, a);
    assert_eq!(log, run_a.log);
}

#[test]
fn two_plus_one_epochs_equal_three() {
    let (tr, val) = common::gait_datasets(3, 20, 6);
    let cfg = common::tiny_gait_network(3);
    let hp = TrainConfig { seed: 2, epochs: 3, batch_size: 16, ..TrainConfig::default() };
    let (full, _) = train(&cfg, &tr, &val, &hp).unwrap();
    let (two, _) = train(&cfg, &tr, &val, &TrainConfig { epochs: 2, ..hp.clone() }).unwrap();
    let mut sampler = |e: usize| shuffled_batches(tr.len(), 16, 2, e);
    let (three, _) = train_epochs(two, &tr, Some(&val), 1, &mut sampler, &mut |_| {}).unwrap();
    assert_eq!(three, full);
}
