use crate::error::{Error, Result};

/// Accepted step-frequency band in Hz.
pub const WALKING_BAND: (f64, f64) = (0.5, 4.0);

/// `amplitude·sin(2π·frequency·t + phase) + offset`, with `t` in seconds
/// from the first sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidFit {
    pub frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    pub residual_rms: f64,
}

impl SinusoidFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (std::f64::consts::TAU * self.frequency * t + self.phase).sin() + self.offset
    }
}

/// Linear least squares on `[sin, cos, 1]` at a fixed frequency.
/// Returns `(a, b, c, residual sum of squares)`.
fn project(m: &[f64], rate: f64, f: f64) -> (f64, f64, f64, f64) {
    let w = std::f64::consts::TAU * f / rate;
    // normal equations, accumulated with a rotating phasor recomputed
    // every 256 samples to bound drift
    let mut g = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    let (mut s, mut c) = (0.0, 1.0);
    let (sw, cw) = w.sin_cos();
    for (i, &y) in m.iter().enumerate() {
        if i % 256 == 0 {
            (s, c) = (w * i as f64).sin_cos();
        }
        let basis = [s, c, 1.0];
        for p in 0..3 {
            r[p] += basis[p] * y;
            for q in p..3 {
                g[p][q] += basis[p] * basis[q];
            }
        }
        (s, c) = (s * cw + c * sw, c * cw - s * sw);
    }
    for p in 0..3 {
        for q in 0..p {
            g[p][q] = g[q][p];
        }
    }
    let coef = solve3(g, r);
    let rss = m
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let (si, ci) = (w * i as f64).sin_cos();
            let e = y - coef[0] * si - coef[1] * ci - coef[2];
            e * e
        })
        .sum();
    (coef[0], coef[1], coef[2], rss)
}

/// Gaussian elimination with partial pivoting on a 3×3 system. A singular
/// system yields zeros for the undetermined coefficients.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        if a[col][col].abs() < 1e-300 {
            continue;
        }
        for row in col + 1..3 {
            let k = a[row][col] / a[col][col];
            for j in col..3 {
                a[row][j] -= k * a[col][j];
            }
            b[row] -= k * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        if a[row][row].abs() < 1e-300 {
            continue;
        }
        let tail: f64 = (row + 1..3).map(|j| a[row][j] * x[j]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

/// Golden-section search for the residual minimum in `[lo, hi]`.
fn refine(m: &[f64], rate: f64, lo: f64, hi: f64) -> f64 {
    // coarse grid first: the residual has side lobes
    let steps = 24;
    let h = (hi - lo) / steps as f64;
    let mut best = (f64::INFINITY, lo);
    for k in 0..=steps {
        let f = lo + h * k as f64;
        let rss = project(m, rate, f).3;
        if rss < best.0 {
            best = (rss, f);
        }
    }
    let (mut a, mut b) = ((best.1 - h).max(lo), (best.1 + h).min(hi));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = project(m, rate, x1).3;
    let mut f2 = project(m, rate, x2).3;
    for _ in 0..40 {
        if f1 <= f2 {
            b = x2;
            (x2, f2) = (x1, f1);
            x1 = b - phi * (b - a);
            f1 = project(m, rate, x1).3;
        } else {
            a = x1;
            (x1, f1) = (x2, f2);
            x2 = a + phi * (b - a);
            f2 = project(m, rate, x2).3;
        }
    }
    (a + b) / 2.0
}

/// Autocorrelation estimate of the fundamental within the walking band,
/// refined by least squares on progressively longer prefixes.
pub fn fit_sinusoid(m: &[f64], sample_rate: f64) -> Result<SinusoidFit> {
    if !(sample_rate > 0.0) {
        return Err(Error::Data(format!("sample rate {sample_rate} must be positive")));
    }
    let n = m.len();
    if (n as f64) < 4.0 * sample_rate {
        return Err(Error::Data(format!(
            "{n} samples is {:.2} s of data; at least 4 s are needed",
            n as f64 / sample_rate
        )));
    }
    if let Some(i) = m.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite magnitude at sample {i}")));
    }
    let mean = m.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = m.iter().map(|v| v - mean).collect();
    let energy = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if energy <= 1e-24 * (1.0 + mean * mean) {
        return Err(Error::NoGait("signal is constant".into()));
    }

    let lag_min = ((sample_rate / WALKING_BAND.1).floor() as usize).max(1);
    let lag_max = ((sample_rate / WALKING_BAND.0).ceil() as usize).min(n / 2);
    // acf[lag] for lag_min-1 ..= lag_max+1, normalized per overlap
    let acf = |lag: usize| -> f64 {
        let s: f64 = x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum();
        s / ((n - lag) as f64 * energy)
    };
    let lo = lag_min.saturating_sub(1).max(1);
    let hi = lag_max + 1;
    let r: Vec<f64> = (lo..=hi).map(acf).collect();
    let peaks: Vec<usize> = (1..r.len() - 1)
        .filter(|&i| {
            let lag = lo + i;
            (lag_min..=lag_max).contains(&lag) && r[i] > 0.0 && r[i] > r[i - 1] && r[i] >= r[i + 1]
        })
        .collect();
    let top = peaks.iter().map(|&i| r[i]).fold(f64::NEG_INFINITY, f64::max);
    let Some(&peak) = peaks.iter().find(|&&i| r[i] >= 0.8 * top) else {
        return Err(Error::NoGait("no autocorrelation peak in the walking band".into()));
    };
    let (y0, y1, y2) = (r[peak - 1], r[peak], r[peak + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let offset = if denom.abs() > 1e-300 { (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    let mut f = sample_rate / ((lo + peak) as f64 + offset);

    let mut len = ((4.0 * sample_rate) as usize).min(n);
    let mut width = 0.15 * f;
    loop {
        let duration = len as f64 / sample_rate;
        f = refine(&m[..len], sample_rate, (f - width).max(WALKING_BAND.0 * 0.5), f + width);
        if len == n {
            break;
        }
        len = (len * 2).min(n);
        width = 1.0 / duration;
    }

    let (a, b, c, rss) = project(m, sample_rate, f);
    if !(WALKING_BAND.0..=WALKING_BAND.1).contains(&f) {
        return Err(Error::NoGait(format!("fitted frequency {f:.3} Hz outside the walking band")));
    }
    Ok(SinusoidFit {
        frequency: f,
        amplitude: a.hypot(b),
        phase: b.atan2(a),
        offset: c,
        residual_rms: (rss / n as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::TAU;

    fn sine(f: f64, amp: f64, phase: f64, offset: f64, rate: f64, secs: f64) -> Vec<f64> {
        (0..(rate * secs) as usize)
            .map(|i| amp * (TAU * f * i as f64 / rate + phase).sin() + offset)
            .collect()
    }

    #[test]
    fn pure_sine_self_fit() {
        let m = sine(1.0, 1.0, 0.0, 0.0, 100.0, 10.0);
        let fit = fit_sinusoid(&m, 100.0).unwrap();
        assert!((fit.frequency - 1.0).abs() <= 0.01, "{fit:?}");
        assert!(fit.residual_rms < 1e-6, "{fit:?}");
        assert!((fit.amplitude - 1.0).abs() < 1e-6);
    }

    #[test]
    fn recovers_phase_and_offset() {
        let m = sine(1.7, 2.5, 0.9, 9.81, 100.0, 12.0);
        let fit = fit_sinusoid(&m, 100.0).unwrap();
        assert!((fit.frequency - 1.7).abs() < 1e-6);
        assert!((fit.phase - 0.9).abs() < 1e-6);
        assert!((fit.offset - 9.81).abs() < 1e-6);
        assert!((fit.eval(0.3) - m[30]).abs() < 1e-6);
    }

    #[test]
    fn noisy_sine_at_10_db() {
        // SNR 10 dB: noise power is a tenth of the sine power (1/2)
        let sigma = (0.5f64 / 10.0).sqrt();
        let noise = Normal::new(0.0, sigma).unwrap();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m: Vec<f64> = sine(1.8, 1.0, 0.3, 0.0, 100.0, 20.0).into_iter().map(|v| v + noise.sample(&mut rng)).collect();
            let fit = fit_sinusoid(&m, 100.0).unwrap();
            assert!((fit.frequency - 1.8).abs() <= 0.02 * 1.8, "{fit:?}");
        }
    }

    #[test]
    fn constant_signal_is_no_gait() {
        assert!(matches!(fit_sinusoid(&vec![9.81; 1000], 100.0), Err(Error::NoGait(_))));
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(fit_sinusoid(&sine(1.0, 1.0, 0.0, 0.0, 100.0, 3.9), 100.0), Err(Error::Data(_))));
    }

    #[test]
    fn out_of_band_is_no_gait() {
        assert!(matches!(fit_sinusoid(&sine(0.1, 1.0, 0.0, 0.0, 100.0, 30.0), 100.0), Err(Error::NoGait(_))));
    }

    #[test]
    fn long_stream_frequency_is_tight() {
        let m = sine(2.13, 1.0, 0.0, 9.8, 100.0, 300.0);
        let fit = fit_sinusoid(&m, 100.0).unwrap();
        assert!((fit.frequency - 2.13).abs() < 1e-6, "{fit:?}");
    }
}
