use std::f64::consts::TAU;

use super::{GaitCycle, SensorStream, SinusoidFit, CHANNELS, CYCLE_LEN};
use crate::error::{Error, Result};

/// A two-period window cut from a stream, before resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCycle {
    /// `CHANNELS` rows of `len` samples, channel-major.
    pub data: Vec<f64>,
    pub len: usize,
    /// Seconds from the start of the stream.
    pub start: f64,
    pub end: f64,
}

impl RawCycle {
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }
}

/// Cuts consecutive windows of `2/frequency` seconds starting at the first
/// rising zero crossing of the fitted sinusoid. Sample `i` sits at
/// `i / sample_rate`; a trailing partial window is dropped.
pub fn segment_cycles(stream: &SensorStream, fit: &SinusoidFit) -> Vec<RawCycle> {
    let rate = stream.sample_rate;
    let n = stream.len();
    let period = 1.0 / fit.frequency;
    // rising crossings where 2πft + φ ≡ 0 (mod 2π); half a sample of slack
    // lets a crossing just before t = 0 anchor the first window
    let mut first = (-fit.phase / TAU).rem_euclid(1.0) * period;
    if first > period - 0.5 / rate {
        first -= period;
    }
    let window = 2.0 * period;
    let mut cycles = Vec::new();
    for k in 0.. {
        let start = first + window * k as f64;
        let end = start + window;
        let i0 = (start * rate).round().max(0.0) as usize;
        let i1 = (end * rate).round() as usize;
        if i1 > n {
            break;
        }
        let len = i1 - i0;
        let mut data = Vec::with_capacity(CHANNELS * len);
        for c in 0..CHANNELS {
            data.extend(stream.samples[i0..i1].iter().map(|s| s.values[c]));
        }
        cycles.push(RawCycle { data, len, start: i0 as f64 / rate, end: i1 as f64 / rate });
    }
    cycles
}

/// Linear resampling to `len` points. Output `j` reads input position
/// `j·n/len`; positions past the last sample extrapolate the final
/// segment, so affine signals stay affine.
pub fn resample_linear(x: &[f64], len: usize) -> Vec<f64> {
    let n = x.len();
    assert!(n >= 2, "resampling needs at least two samples");
    (0..len)
        .map(|j| {
            let pos = j as f64 * n as f64 / len as f64;
            let i = (pos.floor() as usize).min(n - 2);
            x[i] + (pos - i as f64) * (x[i + 1] - x[i])
        })
        .collect()
}

/// Resamples every channel to [`CYCLE_LEN`] and removes each channel's
/// mean. Scaling by training-set deviations happens at model input.
pub fn normalize_cycle(raw: &RawCycle, user_id: u32, id: u64) -> Result<GaitCycle> {
    if raw.len < 8 {
        return Err(Error::Data(format!("cycle of {} samples; at least 8 needed", raw.len)));
    }
    if let Some(i) = raw.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite value in channel {} at sample {} of the cycle starting at {:.3} s",
            i / raw.len,
            i % raw.len,
            raw.start
        )));
    }
    let mut data = Vec::with_capacity(CHANNELS * CYCLE_LEN);
    for c in 0..CHANNELS {
        let mut ch = resample_linear(raw.channel(c), CYCLE_LEN);
        let mean = ch.iter().sum::<f64>() / CYCLE_LEN as f64;
        ch.iter_mut().for_each(|v| *v -= mean);
        data.extend(ch);
    }
    Ok(GaitCycle { id, user_id, data, span: (raw.start, raw.end) })
}

/// Per-channel root mean square over a set of mean-removed cycles, used to
/// scale model inputs. Channels with no energy get scale 1.
pub fn channel_scale<'a>(cycles: impl IntoIterator<Item = &'a GaitCycle>, rows: usize) -> Vec<f32> {
    let mut sum = vec![0.0f64; rows];
    let mut count = 0usize;
    for cycle in cycles {
        for (c, s) in sum.iter_mut().enumerate() {
            *s += cycle.channel(c).iter().map(|v| v * v).sum::<f64>();
        }
        count += CYCLE_LEN;
    }
    sum.into_iter()
        .map(|s| {
            let std = if count > 0 { (s / count as f64).sqrt() as f32 } else { 0.0 };
            if std > 0.0 && std.is_finite() {
                std
            } else {
                1.0
            }
        })
        .collect()
}
