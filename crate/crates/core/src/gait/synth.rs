//! Seeded synthetic walkers.
//!
//! A user is a step frequency `f` plus, for every channel, the amplitudes
//! and phases of five harmonics of the stride frequency `f/2`. The
//! vertical axis carries gravity and a dominant component at `f` (the
//! second stride harmonic, zero phase), so the acceleration magnitude has
//! its fundamental at the step frequency.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{cycle_id, normalize_cycle, GaitCycle, RawCycle, Sample, SensorStream, CHANNELS};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const HARMONICS: usize = 5;
pub const GRAVITY: f64 = 9.81;
pub const STEP_BAND: (f64, f64) = (1.4, 2.3);

const PROFILE_TAG: u64 = 0x5052_4F46;
const CYCLE_TAG: u64 = 0x4359_434C;
const STREAM_TAG: u64 = 0x5354_524D;

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub user_id: u32,
    /// Step frequency in Hz.
    pub frequency: f64,
    /// `[channel][h-1]`: harmonic `h` oscillates at `h·f/2`.
    pub amplitude: [[f64; HARMONICS]; CHANNELS],
    pub phase: [[f64; HARMONICS]; CHANNELS],
}

impl UserProfile {
    /// Noise-free channel values at signal time `t`.
    pub fn signal(&self, t: f64) -> [f64; CHANNELS] {
        let mut out = [0.0; CHANNELS];
        out[2] = GRAVITY;
        for (c, v) in out.iter_mut().enumerate() {
            for h in 0..HARMONICS {
                let w = TAU * (h + 1) as f64 * self.frequency / 2.0;
                *v += self.amplitude[c][h] * (w * t + self.phase[c][h]).sin();
            }
        }
        out
    }

    /// RMS of each channel's oscillating part.
    pub fn channel_rms(&self) -> [f64; CHANNELS] {
        self.amplitude.map(|a| (a.iter().map(|x| x * x).sum::<f64>() / 2.0).sqrt())
    }

    /// Flattened amplitudes and phases, for comparing users.
    pub fn signature(&self) -> Vec<f64> {
        let mut v = vec![self.frequency];
        for c in 0..CHANNELS {
            v.extend_from_slice(&self.amplitude[c]);
            v.extend_from_slice(&self.phase[c]);
        }
        v
    }
}

pub fn user_profile(seed: u64, user_id: u32) -> UserProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[PROFILE_TAG, u64::from(user_id)]));
    let frequency = rng.random_range(STEP_BAND.0..=STEP_BAND.1);
    let mut amplitude = [[0.0; HARMONICS]; CHANNELS];
    let mut phase = [[0.0; HARMONICS]; CHANNELS];
    for c in 0..CHANNELS {
        for h in 0..HARMONICS {
            amplitude[c][h] = match (c, h) {
                (2, 1) => rng.random_range(2.0..3.0),
                (2, _) => rng.random_range(0.0..0.3),
                (0 | 1, _) => rng.random_range(0.1..1.2),
                _ => rng.random_range(0.05..1.0),
            };
            phase[c][h] = if (c, h) == (2, 1) { 0.0 } else { rng.random_range(0.0..TAU) };
        }
    }
    UserProfile { user_id, frequency, amplitude, phase }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub users: usize,
    pub cycles_per_user: usize,
    pub seed: u64,
    /// Noise standard deviation as a fraction of each channel's RMS.
    pub noise: f64,
    pub sample_rate: f64,
    /// Id of the first generated user; users are numbered consecutively.
    pub first_user: u32,
}

impl SyntheticConfig {
    pub fn new(users: usize, cycles_per_user: usize, seed: u64) -> Self {
        SyntheticConfig { users, cycles_per_user, seed, noise: 0.05, sample_rate: 100.0, first_user: 0 }
    }

    pub fn user_ids(&self) -> impl Iterator<Item = u32> {
        let first = self.first_user;
        (0..self.users as u32).map(move |u| first + u)
    }
}

fn noise_models(profile: &UserProfile, noise: f64) -> Result<[Normal<f64>; CHANNELS]> {
    let rms = profile.channel_rms();
    let mut out = [Normal::new(0.0, 0.0).unwrap(); CHANNELS];
    for c in 0..CHANNELS {
        out[c] = Normal::new(0.0, noise * rms[c]).map_err(|e| Error::Parameter(format!("noise level {noise}: {e}")))?;
    }
    Ok(out)
}

/// `users × cycles_per_user` normalized cycles. Each cycle covers two step
/// periods starting at the upward zero crossing of the vertical component.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<GaitCycle>> {
    if cfg.users < 2 || cfg.cycles_per_user < 10 {
        return Err(Error::Usage(format!(
            "synthetic data needs at least 2 users and 10 cycles each, got {} and {}",
            cfg.users, cfg.cycles_per_user
        )));
    }
    if !(cfg.noise >= 0.0) || !(cfg.sample_rate > 0.0) {
        return Err(Error::Parameter("noise must be non-negative and sample rate positive".into()));
    }
    let mut cycles = Vec::with_capacity(cfg.users * cfg.cycles_per_user);
    for user in cfg.user_ids() {
        let profile = user_profile(cfg.seed, user);
        let dist = noise_models(&profile, cfg.noise)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[CYCLE_TAG, u64::from(user)]));
        let len = (2.0 * cfg.sample_rate / profile.frequency).round() as usize;
        let clean: Vec<[f64; CHANNELS]> = (0..len).map(|i| profile.signal(i as f64 / cfg.sample_rate)).collect();
        for k in 0..cfg.cycles_per_user {
            let mut data = Vec::with_capacity(CHANNELS * len);
            for c in 0..CHANNELS {
                data.extend(clean.iter().map(|v| v[c] + dist[c].sample(&mut rng)));
            }
            let start = k as f64 * len as f64 / cfg.sample_rate;
            let raw = RawCycle { data, len, start, end: start + len as f64 / cfg.sample_rate };
            cycles.push(normalize_cycle(&raw, user, cycle_id(user, k as u32))?);
        }
    }
    Ok(cycles)
}

/// A continuous recording of `cycles` two-step windows. The stream opens a
/// quarter step before the first upward crossing and runs half a step past
/// the last full window.
pub fn synthetic_stream(profile: &UserProfile, cycles: usize, seed: u64, noise: f64, sample_rate: f64) -> Result<SensorStream> {
    let dist = noise_models(profile, noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STREAM_TAG, u64::from(profile.user_id)]));
    let period = 1.0 / profile.frequency;
    let lead = 0.25 * period;
    let duration = lead + 2.0 * period * cycles as f64 + 0.5 * period;
    let n = (duration * sample_rate).floor() as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate;
            let mut values = profile.signal(t - lead);
            for (c, v) in values.iter_mut().enumerate() {
                *v += dist[c].sample(&mut rng);
            }
            Sample { t, values }
        })
        .collect();
    SensorStream::new(sample_rate, samples, Some(profile.user_id))
}
