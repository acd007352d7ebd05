use std::f64::consts::TAU;

use bpnet::gait::{
    extract_cycles, magnitude, read_csv, segment_cycles, synthetic_stream, user_profile, write_csv, Sample, SensorStream,
    SinusoidFit, CYCLE_LEN,
};
use proptest::prelude::*;

/// Rotation matrix from a (not necessarily unit) quaternion.
fn rotation(q: [f64; 4]) -> [[f64; 3]; 3] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn stream_of(values: &[[f64; 6]], rate: f64) -> SensorStream {
    let samples = values.iter().enumerate().map(|(i, &v)| Sample { t: i as f64 / rate, values: v }).collect();
    SensorStream::new(rate, samples, None).unwrap()
}

proptest! {
    #[test]
    fn magnitude_ignores_phone_orientation(
        q in prop::array::uniform4(-1.0f64..1.0).prop_filter("non-degenerate", |q| q.iter().map(|v| v * v).sum::<f64>() > 0.01),
        acc in prop::collection::vec(prop::array::uniform3(-20.0f64..20.0), 2..100),
    ) {
        let r = rotation(q);
        let plain: Vec<[f64; 6]> = acc.iter().map(|a| [a[0], a[1], a[2], 0.0, 0.0, 0.0]).collect();
        let turned: Vec<[f64; 6]> = acc
            .iter()
            .map(|a| {
                let v: Vec<f64> = (0..3).map(|i| (0..3).map(|j| r[i][j] * a[j]).sum()).collect();
                [v[0], v[1], v[2], 0.0, 0.0, 0.0]
            })
            .collect();
        let m0 = magnitude(&stream_of(&plain, 100.0));
        let m1 = magnitude(&stream_of(&turned, 100.0));
        for (a, b) in m0.iter().zip(&m1) {
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn windows_tile_the_stream(
        f in 0.5f64..4.0, phase in -10.0f64..10.0, rate in 20.0f64..400.0, secs in 0.0f64..30.0,
    ) {
        let n = (secs * rate) as usize;
        let values = vec![[0.0; 6]; n.max(2)];
        let stream = stream_of(&values, rate);
        let fit = SinusoidFit { frequency: f, amplitude: 1.0, phase, offset: 0.0, residual_rms: 0.0 };
        let cycles = segment_cycles(&stream, &fit);
        let (period, window, dt) = (1.0 / f, 2.0 / f, 1.0 / rate);
        for c in &cycles {
            prop_assert!(c.start >= 0.0 && c.end <= stream.len() as f64 * dt + 1e-9);
            prop_assert!((c.end - c.start - window).abs() <= dt + 1e-9);
            prop_assert_eq!(c.data.len(), 6 * c.len);
        }
        for w in cycles.windows(2) {
            // consecutive and non-overlapping
            prop_assert!((w[1].start - w[0].end).abs() < 1e-9);
        }
        // what is left uncovered: less than one period before the first
        // window and less than one window after the last
        let total = stream.len() as f64 * dt;
        let head = cycles.first().map_or(total, |c| c.start);
        let tail = cycles.last().map_or(0.0, |c| total - c.end);
        if let Some(c) = cycles.first() {
            prop_assert!(head < period + dt, "head {head}");
            prop_assert!(tail < window + dt, "tail {tail}");
            // the first window begins on a rising crossing of the fit
            let t = c.start;
            let arg = (TAU * f * t + phase).rem_euclid(TAU);
            let dist = arg.min(TAU - arg);
            prop_assert!(dist <= TAU * f * dt, "start {t} is {dist} rad off a crossing");
        } else {
            prop_assert!(total < window + period + dt, "nothing cut from {total} s");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthetic_stream_survives_csv_and_extraction(
        user in 0u32..1000, seed in any::<u64>(), cycles in 10usize..40,
        noise in 0.0f64..0.1, rate in prop::sample::select(vec![50.0, 100.0, 200.0]),
    ) {
        let profile = user_profile(seed, user);
        let stream = synthetic_stream(&profile, cycles, seed, noise, rate).unwrap();
        let again = synthetic_stream(&profile, cycles, seed, noise, rate).unwrap();
        prop_assert_eq!(&stream, &again);

        let mut csv = Vec::new();
        write_csv(std::slice::from_ref(&stream), &mut csv).unwrap();
        let back = read_csv(csv.as_slice()).unwrap();
        prop_assert_eq!(back.len(), 1);
        // the reader re-estimates the rate from the timestamps
        prop_assert!(back[0].samples == stream.samples && back[0].user_id == stream.user_id);
        prop_assert!((back[0].sample_rate - rate).abs() <= 1e-9 * rate);

        let (fit, out) = extract_cycles(&back[0], user, 0).unwrap();
        prop_assert!((fit.frequency - profile.frequency).abs() <= 0.02 * profile.frequency,
            "fitted {} true {}", fit.frequency, profile.frequency);
        prop_assert!(out.len().abs_diff(cycles) <= 1, "{} cycles from {}", out.len(), cycles);
        for (i, c) in out.iter().enumerate() {
            prop_assert_eq!(c.user_id, user);
            prop_assert_eq!(c.id, (u64::from(user) << 32) | i as u64);
            prop_assert_eq!(c.data.len(), 6 * CYCLE_LEN);
            for ch in 0..6 {
                let mean = c.channel(ch).iter().sum::<f64>() / CYCLE_LEN as f64;
                prop_assert!(mean.abs() < 1e-9);
            }
        }
    }
}
