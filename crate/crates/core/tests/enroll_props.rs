mod common;

use std::cmp::Ordering;
use std::sync::OnceLock;

use bpnet::enroll::{enroll, evaluate, train_global, verify, EnrollmentConfig, UserModel, VerifyReport};
use bpnet::gait::{generate_synthetic, GaitCycle, SyntheticConfig};
use bpnet::model_io::{from_bytes, to_bytes};
use bpnet::train::TrainConfig;
use num_bigint::BigInt;
use proptest::prelude::*;

/// Exact value of a finite non-negative f64 as `num / 2^shift`.
fn exact(x: f64) -> (BigInt, u32) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let mant = bits & ((1u64 << 52) - 1);
    let (m, e) = if exp == 0 { (mant, -1074) } else { (mant | 1 << 52, exp - 1075) };
    if e >= 0 {
        (BigInt::from(m) << e as usize, 0)
    } else {
        (BigInt::from(m), (-e) as u32)
    }
}

/// |x − p/q| compared against |y − p/q|, all in integers.
fn closer_or_equal(x: f64, y: f64, p: &BigInt, q: &BigInt) -> bool {
    let dist = |v: f64| {
        let (n, s) = exact(v);
        // |n/2^s − p/q| · q · 2^1100, scaled to a common denominator
        let num = n * q - (p << s as usize);
        num.magnitude().clone() << (1100 - s) as usize
    };
    dist(x).cmp(&dist(y)) != Ordering::Greater
}

/// `x` is the f64 nearest to `p/q`.
fn correctly_rounded(x: f64, p: u64, q: u64) -> bool {
    let (p, q) = (BigInt::from(p), BigInt::from(q));
    [x.next_up(), x.next_down()].into_iter().filter(|v| *v >= 0.0).all(|v| closer_or_equal(x, v, &p, &q))
}

proptest! {
    #[test]
    fn rates_are_the_exact_ratios(tp in 0usize..5000, fn_ in 0usize..5000, fp in 0usize..5000, tn in 0usize..5000) {
        prop_assume!(tp + fn_ > 0 && fp + tn > 0);
        let r = VerifyReport::from_counts(tp, fn_, fp, tn).unwrap();
        let (tp, fn_, fp, tn) = (tp as u64, fn_ as u64, fp as u64, tn as u64);
        prop_assert!(correctly_rounded(r.uar, tp, tp + fn_));
        prop_assert!(correctly_rounded(r.arr, tn, tn + fp));
        if tp == 0 {
            prop_assert_eq!(r.f1, 0.0);
        } else {
            // F1 as the harmonic mean of precision P = tp/(tp+fp) and recall
            // R = tp/(tp+fn): 2PR/(P+R) reduces to 2tp·tp / (tp(2tp+fp+fn))
            let (a, b) = (BigInt::from(tp), BigInt::from(tp + fp));
            let (c, d) = (BigInt::from(tp), BigInt::from(tp + fn_));
            let num = BigInt::from(2) * &a * &c * &b * &d;
            let den = (&a * &d + &c * &b) * &b * &d;
            prop_assert_eq!(&num * BigInt::from(2 * tp + fp + fn_), &den * BigInt::from(2 * tp));
            prop_assert!(correctly_rounded(r.f1, 2 * tp, 2 * tp + fp + fn_));
        }
        prop_assert!((0.0..=1.0).contains(&r.uar) && (0.0..=1.0).contains(&r.arr) && (0.0..=1.0).contains(&r.f1));
    }
}

#[test]
fn worked_example() {
    let r = VerifyReport::from_counts(40, 10, 5, 45).unwrap();
    assert_eq!((r.uar, r.arr), (0.8, 0.9));
    assert!(correctly_rounded(r.f1, 16, 19));
}

struct Fixture {
    user: UserModel,
    test: Vec<GaitCycle>,
    attackers: Vec<GaitCycle>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let background = generate_synthetic(&SyntheticConfig::new(4, 40, 3)).unwrap();
        let hp = TrainConfig { seed: 3, epochs: 5, batch_size: 32, ..TrainConfig::default() };
        let global = train_global(&common::tiny_gait_network(5), &background, &hp).unwrap();
        let others = generate_synthetic(&SyntheticConfig { first_user: 100, ..SyntheticConfig::new(3, 40, 4) }).unwrap();
        let (mine, attackers): (Vec<_>, Vec<_>) = others.into_iter().partition(|c| c.user_id == 100);
        let cfg = EnrollmentConfig { lr: 1e-2, fine_tune_epochs: 6, ..EnrollmentConfig::default() };
        let user = enroll(&global, 100, &mine[..25], &cfg).unwrap();
        Fixture { user, test: mine[25..].to_vec(), attackers }
    })
}

#[test]
fn verification_is_pure() {
    let f = fixture();
    let reloaded = UserModel::from_model(from_bytes(&to_bytes(&f.user.model).unwrap()).unwrap()).unwrap();
    assert_eq!(reloaded.user_id, 100);
    for c in f.test.iter().chain(&f.attackers) {
        let first = verify(&f.user, c).unwrap();
        assert_eq!(verify(&f.user, c).unwrap(), first);
        assert_eq!(verify(&reloaded, c).unwrap(), first);
    }
    assert_eq!(evaluate(&f.user, &f.test, &f.attackers).unwrap(), evaluate(&reloaded, &f.test, &f.attackers).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn evaluation_is_balanced(n_user in 1usize..=15, n_att in 1usize..=80) {
        let f = fixture();
        let r = evaluate(&f.user, &f.test[..n_user], &f.attackers[..n_att]).unwrap();
        let n = n_user.min(n_att);
        prop_assert_eq!(r.tp + r.fn_, n);
        prop_assert_eq!(r.fp + r.tn, n);
    }
}
