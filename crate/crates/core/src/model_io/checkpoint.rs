//! Training checkpoints (`"BPS1"`): the full [`TrainState`] in `f64`.
//!
//! Layout after magic and `u16` version: config text (string), precision
//! `u8`, seed `u64`, completed epochs `u64`; per layer a tag `u8`
//! (0 empty, 1 weights, 2 batch norm) followed by `f64` arrays (`u32`
//! length prefix) and, for batch norm, momentum and epsilon; then Adam
//! (`lr`, `β1`, `β2`, `ε`, `t`, slot count and the `m`, `v` arrays) and the
//! scheduler (factor, patience, min_delta, min_lr, best, counter). CRC-32
//! footer.

use std::path::Path;

use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, FormatError, Result};
use crate::net::config::NetworkConfig;
use crate::net::params::{BatchNormParams, LatentWeights, LayerParams, Precision};
use crate::train::{AdamState, PlateauScheduler, SchedulerConfig, TrainState};

const MAGIC: &[u8; 4] = b"BPS1";
const VERSION: u16 = 1;

fn put_vec(w: &mut ByteWriter, v: &[f64]) {
    w.u32(v.len() as u32);
    v.iter().for_each(|&x| w.f64(x));
}

fn get_vec(r: &mut ByteReader) -> Result<Vec<f64>> {
    let n = r.u32()? as usize;
    if n > r.remaining() / 8 {
        return Err(FormatError::Truncated { offset: r.pos(), needed: 8 * n, available: r.remaining() }.into());
    }
    (0..n).map(|_| r.f64()).collect()
}

pub fn write_checkpoint(state: &TrainState) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.str(&state.config.to_text());
    w.u8(match state.weights.precision {
        Precision::Binary => 0,
        Precision::Full => 1,
    });
    w.u64(state.seed);
    w.u64(state.epoch as u64);
    for p in &state.weights.layers {
        match p {
            LayerParams::Empty => w.u8(0),
            LayerParams::Weights(v) => {
                w.u8(1);
                put_vec(&mut w, v);
            }
            LayerParams::BatchNorm(bn) => {
                w.u8(2);
                for v in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                    put_vec(&mut w, v);
                }
                w.f64(bn.momentum);
                w.f64(bn.epsilon);
            }
        }
    }
    let a = &state.adam;
    for x in [a.lr, a.beta1, a.beta2, a.epsilon] {
        w.f64(x);
    }
    w.u64(a.t);
    w.u32(a.m.len() as u32);
    for (m, v) in a.m.iter().zip(&a.v) {
        put_vec(&mut w, m);
        put_vec(&mut w, v);
    }
    let s = &state.scheduler;
    w.f64(s.config.factor);
    w.u64(s.config.patience as u64);
    w.f64(s.config.min_delta);
    w.f64(s.config.min_lr);
    w.f64(s.best);
    w.u64(s.epochs_since_improve as u64);
    w.finish()
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<TrainState> {
    let mut r = ByteReader::checked(bytes, MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let config = NetworkConfig::parse(&r.str()?).map_err(|e| FormatError::ShapeInconsistency(format!("checkpoint config: {e}")))?;
    let precision = match r.u8()? {
        0 => Precision::Binary,
        1 => Precision::Full,
        p => return Err(FormatError::InvalidField(format!("precision {p}")).into()),
    };
    let seed = r.u64()?;
    let epoch = r.u64()? as usize;
    let mut layers = Vec::with_capacity(config.layers().len());
    for _ in config.layers() {
        layers.push(match r.u8()? {
            0 => LayerParams::Empty,
            1 => LayerParams::Weights(get_vec(&mut r)?),
            2 => LayerParams::BatchNorm(BatchNormParams {
                gamma: get_vec(&mut r)?,
                beta: get_vec(&mut r)?,
                running_mean: get_vec(&mut r)?,
                running_var: get_vec(&mut r)?,
                momentum: r.f64()?,
                epsilon: r.f64()?,
            }),
            t => return Err(FormatError::InvalidField(format!("layer tag {t}")).into()),
        });
    }
    let weights = LatentWeights::from_layers(precision, layers);
    weights.validate_for(&config).map_err(|e| FormatError::ShapeInconsistency(e.to_string()))?;
    let (lr, beta1, beta2, epsilon) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let t = r.u64()?;
    let slots = r.u32()? as usize;
    let mut m = Vec::new();
    let mut v = Vec::new();
    for _ in 0..slots {
        m.push(get_vec(&mut r)?);
        v.push(get_vec(&mut r)?);
    }
    let adam = AdamState { lr, beta1, beta2, epsilon, t, m, v };
    let fresh = AdamState::new(&weights, crate::train::AdamConfig { lr, beta1, beta2, epsilon })
        .map_err(|e| FormatError::InvalidField(e.to_string()))?;
    if fresh.m.len() != adam.m.len() || fresh.m.iter().zip(&adam.m).any(|(a, b)| a.len() != b.len()) {
        return Err(FormatError::ShapeInconsistency("optimizer moments do not match the parameters".into()).into());
    }
    let config_s = SchedulerConfig { factor: r.f64()?, patience: r.u64()? as usize, min_delta: r.f64()?, min_lr: r.f64()? };
    let mut scheduler = PlateauScheduler::new(config_s).map_err(|e| FormatError::InvalidField(e.to_string()))?;
    scheduler.best = r.f64()?;
    scheduler.epochs_since_improve = r.u64()? as usize;
    r.end()?;
    Ok(TrainState { config, weights, adam, scheduler, epoch, seed })
}

pub fn save_checkpoint(state: &TrainState, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let bytes = write_checkpoint(state);
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len() as u64)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    read_checkpoint(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::config::bipedalnet_v1;
    use crate::train::TrainConfig;

    #[test]
    fn round_trip() {
        let mut state = TrainState::init(&bipedalnet_v1(), &TrainConfig { seed: 4, ..TrainConfig::default() }).unwrap();
        state.adam.t = 17;
        state.adam.m[0][3] = 0.25;
        state.scheduler.best = 0.5;
        state.epoch = 3;
        let bytes = write_checkpoint(&state);
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back.weights.layers, state.weights.layers);
        assert_eq!((back.adam, back.scheduler, back.epoch, back.seed), (state.adam.clone(), state.scheduler.clone(), 3, 4));
        let mut bad = bytes.clone();
        bad[50] ^= 1;
        assert!(read_checkpoint(&bad).is_err());
    }
}
