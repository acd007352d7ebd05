//! Sensor streams, gait-cycle extraction and the synthetic gait generator.

mod archive;
mod csv_io;
mod fit;
mod segment;
mod synth;

pub use archive::{read_archive, write_archive, CycleArchive};
pub use csv_io::{read_csv, write_csv};
pub use fit::{fit_sinusoid, SinusoidFit, WALKING_BAND};
pub use segment::{channel_scale, normalize_cycle, resample_linear, segment_cycles, RawCycle};
pub use synth::{generate_synthetic, synthetic_stream, user_profile, SyntheticConfig, UserProfile};

use crate::error::{Error, Result};

/// Sensor channels per sample: three accelerometer axes then three
/// gyroscope axes.
pub const CHANNELS: usize = 6;
/// Samples per channel in a normalized cycle.
pub const CYCLE_LEN: usize = 200;

/// Allowed relative deviation of a sampling interval from `1/sample_rate`.
pub const GAP_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Seconds.
    pub t: f64,
    /// `ax, ay, az` in m/s², then `gx, gy, gz` in rad/s.
    pub values: [f64; CHANNELS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    pub sample_rate: f64,
    pub samples: Vec<Sample>,
    pub user_id: Option<u32>,
}

impl SensorStream {
    /// Checks timestamps are strictly increasing and every interval is
    /// within [`GAP_TOLERANCE`] of `1/sample_rate`.
    pub fn new(sample_rate: f64, samples: Vec<Sample>, user_id: Option<u32>) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::Data(format!("sample rate {sample_rate} must be positive")));
        }
        let dt = 1.0 / sample_rate;
        for (i, w) in samples.windows(2).enumerate() {
            let gap = w[1].t - w[0].t;
            if !(gap > 0.0) {
                return Err(Error::Data(format!("timestamps not increasing at sample {}", i + 1)));
            }
            if (gap - dt).abs() > GAP_TOLERANCE * dt {
                return Err(Error::Data(format!(
                    "sampling gap of {gap} s at sample {} exceeds tolerance around {dt} s",
                    i + 1
                )));
            }
        }
        Ok(SensorStream { sample_rate, samples, user_id })
    }

    /// Rate estimated from the first and last timestamps.
    pub fn from_samples(samples: Vec<Sample>, user_id: Option<u32>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Data("a stream needs at least two samples".into()));
        }
        let span = samples[samples.len() - 1].t - samples[0].t;
        let rate = (samples.len() - 1) as f64 / span;
        SensorStream::new(rate, samples, user_id)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.values[c]).collect()
    }
}

/// Fixed-length, mean-removed sensor window: the sample unit for every
/// dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitCycle {
    /// Stable identifier; dataset splits are keyed on it.
    pub id: u64,
    pub user_id: u32,
    /// `CHANNELS × CYCLE_LEN`, channel-major.
    pub data: Vec<f64>,
    /// Start and end of the source window, seconds.
    pub span: (f64, f64),
}

impl GaitCycle {
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * CYCLE_LEN..(c + 1) * CYCLE_LEN]
    }

    /// Network input built from the first `rows` channels, each divided by
    /// its entry of `scale` (empty scale means no scaling).
    pub fn to_input(&self, rows: usize, scale: &[f32]) -> Vec<f64> {
        let mut out = self.data[..rows * CYCLE_LEN].to_vec();
        if !scale.is_empty() {
            for (c, chunk) in out.chunks_mut(CYCLE_LEN).enumerate() {
                let s = f64::from(scale[c]);
                chunk.iter_mut().for_each(|v| *v /= s);
            }
        }
        out
    }
}

/// Cycle identifier: user in the high half, per-user sequence number in
/// the low half.
pub fn cycle_id(user: u32, index: u32) -> u64 {
    (u64::from(user) << 32) | u64::from(index)
}

/// Pointwise `√(ax² + ay² + az²)`.
pub fn magnitude(stream: &SensorStream) -> Vec<f64> {
    stream
        .samples
        .iter()
        .map(|s| {
            let [ax, ay, az, ..] = s.values;
            (ax * ax + ay * ay + az * az).sqrt()
        })
        .collect()
}

/// Magnitude, sinusoid fit, segmentation and normalization of one stream.
/// Cycles are numbered from `first_index` in time order.
pub fn extract_cycles(stream: &SensorStream, user_id: u32, first_index: u32) -> Result<(SinusoidFit, Vec<GaitCycle>)> {
    let fit = fit_sinusoid(&magnitude(stream), stream.sample_rate)?;
    let cycles = segment_cycles(stream, &fit)
        .into_iter()
        .enumerate()
        .map(|(i, raw)| normalize_cycle(&raw, user_id, cycle_id(user_id, first_index + i as u32)))
        .collect::<Result<Vec<_>>>()?;
    Ok((fit, cycles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stream_of(values: Vec<[f64; 6]>) -> SensorStream {
        let samples = values.into_iter().enumerate().map(|(i, v)| Sample { t: i as f64 / 100.0, values: v }).collect();
        SensorStream::new(100.0, samples, None).unwrap()
    }

    #[test]
    fn magnitude_examples() {
        let s = stream_of(vec![[0.0, 0.0, 9.81, 1.0, 1.0, 1.0], [3.0, 4.0, 0.0, 0.0, 0.0, 0.0]]);
        assert_eq!(magnitude(&s), vec![9.81, 5.0]);
    }

    #[test]
    fn magnitude_is_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (a, b, c): (f64, f64, f64) = (rng.random_range(0.0..6.3), rng.random_range(0.0..6.3), rng.random_range(0.0..6.3));
            // z-y-x Euler rotation
            let r = [
                [a.cos() * b.cos(), a.cos() * b.sin() * c.sin() - a.sin() * c.cos(), a.cos() * b.sin() * c.cos() + a.sin() * c.sin()],
                [a.sin() * b.cos(), a.sin() * b.sin() * c.sin() + a.cos() * c.cos(), a.sin() * b.sin() * c.cos() - a.cos() * c.sin()],
                [-b.sin(), b.cos() * c.sin(), b.cos() * c.cos()],
            ];
            let v: [f64; 3] = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
            let rv: Vec<f64> = (0..3).map(|i| (0..3).map(|j| r[i][j] * v[j]).sum()).collect();
            let s = stream_of(vec![[v[0], v[1], v[2], 0.0, 0.0, 0.0], [rv[0], rv[1], rv[2], 0.0, 0.0, 0.0]]);
            let m = magnitude(&s);
            assert!((m[0] - m[1]).abs() <= 1e-9);
        }
    }

    #[test]
    fn stream_validation() {
        let mk = |ts: &[f64]| ts.iter().map(|&t| Sample { t, values: [0.0; 6] }).collect::<Vec<_>>();
        assert!(SensorStream::new(100.0, mk(&[0.0, 0.01, 0.02]), None).is_ok());
        assert!(SensorStream::new(100.0, mk(&[0.0, 0.01, 0.01]), None).is_err());
        assert!(SensorStream::new(100.0, mk(&[0.0, 0.01, 0.025]), None).is_err());
        assert!(SensorStream::new(0.0, mk(&[0.0]), None).is_err());
        let s = SensorStream::from_samples(mk(&[0.0, 0.02, 0.04, 0.06]), Some(2)).unwrap();
        assert!((s.sample_rate - 50.0).abs() < 1e-9);
    }

    #[test]
    fn cycle_input_scales_rows() {
        let data: Vec<f64> = (0..CHANNELS * CYCLE_LEN).map(|i| (i / CYCLE_LEN) as f64 + 1.0).collect();
        let c = GaitCycle { id: 0, user_id: 0, data, span: (0.0, 1.0) };
        let x = c.to_input(3, &[1.0, 2.0, 4.0]);
        assert_eq!(x.len(), 600);
        assert_eq!((x[0], x[200], x[400]), (1.0, 1.0, 0.75));
        assert_eq!(c.to_input(6, &[]), c.data);
    }
}
