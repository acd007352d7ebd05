//! On-disk model files.
//!
//! All integers and reals are little-endian. Layout:
//!
//! | field | bytes |
//! |---|---|
//! | magic `"BPN1"` | 4 |
//! | version (`u16`, = 1) | 2 |
//! | weight encoding (`u8`: 0 packed bits, 1 `f32`) | 1 |
//! | flags (`u8`, bit 0: extension block present) | 1 |
//! | SHA-256 of the canonical config text | 32 |
//! | name (`u32` length + UTF-8) | 4 + len |
//! | input shape (`u32` channels, height, width) | 12 |
//! | class count (`u32`) | 4 |
//! | input scale (`u16` count + `f32` each) | 2 + 4·count |
//! | layer count (`u16`) | 2 |
//! | descriptors: kind `u8`, dim count `u8`, dims `u32` each | per layer |
//! | normalization block: per batch norm, `f32` scales then `f32` shifts | 4 per real |
//! | weight block: per binary layer, packed bits (byte aligned) or `f32`s | per layer |
//! | extension (if flagged): `u16` count, key/value strings | optional |
//! | CRC-32 of all preceding bytes | 4 |

mod checkpoint;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::bits::{byte_len, BitTensor};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, FormatError, Result};
use crate::net::config::{LayerKind, LayerSpec, NetworkConfig, Shape};
use crate::net::infer::{BinarizedModel, ModelLayer};
use crate::net::params::{Affine, Precision};

pub const MAGIC: &[u8; 4] = b"BPN1";
pub const VERSION: u16 = 1;
const FLAG_EXTENSION: u8 = 1;

pub fn config_digest(config: &NetworkConfig) -> [u8; 32] {
    Sha256::digest(config.to_text().as_bytes()).into()
}

fn encoding_code(p: Precision) -> u8 {
    match p {
        Precision::Binary => 0,
        Precision::Full => 1,
    }
}

/// Serializes a model to bytes.
pub fn to_bytes(model: &BinarizedModel) -> Result<Vec<u8>> {
    let config = model.config();
    let mut w = ByteWriter::default();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u8(encoding_code(model.precision()));
    w.u8(if model.metadata().is_empty() { 0 } else { FLAG_EXTENSION });
    w.bytes(&config_digest(config));
    w.str(config.name());
    let input = config.input_shape();
    for d in [input.channels, input.height, input.width] {
        w.u32(u32::try_from(d).map_err(|_| FormatError::InvalidField("input dimension exceeds u32".into()))?);
    }
    w.u32(config.class_count() as u32);
    let scale = model.input_scale();
    w.u16(u16::try_from(scale.len()).map_err(|_| FormatError::InvalidField("too many input scales".into()))?);
    scale.iter().for_each(|&s| w.f32(s));
    w.u16(u16::try_from(config.layers().len()).map_err(|_| FormatError::InvalidField("too many layers".into()))?);
    for l in config.layers() {
        let dims = l.dims();
        w.u8(l.kind().code());
        w.u8(dims.len() as u8);
        dims.iter().for_each(|&d| w.u32(d));
    }
    for l in model.layers() {
        if let ModelLayer::BatchNorm(a) = l {
            a.scale.iter().for_each(|&v| w.f32(v));
            a.shift.iter().for_each(|&v| w.f32(v));
        }
    }
    for l in model.layers() {
        match l {
            ModelLayer::Binary(t) => w.bytes(t.as_bytes()),
            ModelLayer::Real(v) => v.iter().for_each(|&x| w.f32(x)),
            _ => {}
        }
    }
    if !model.metadata().is_empty() {
        w.u16(u16::try_from(model.metadata().len()).map_err(|_| FormatError::InvalidField("too many metadata entries".into()))?);
        for (k, v) in model.metadata() {
            w.str(k);
            w.str(v);
        }
    }
    Ok(w.finish())
}

/// Parses and validates a model file image.
pub fn from_bytes(bytes: &[u8]) -> Result<BinarizedModel> {
    let mut r = ByteReader::checked(bytes, MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let precision = match r.u8()? {
        0 => Precision::Binary,
        1 => Precision::Full,
        e => return Err(FormatError::InvalidField(format!("weight encoding {e}")).into()),
    };
    let flags = r.u8()?;
    if flags & !FLAG_EXTENSION != 0 {
        return Err(FormatError::InvalidField(format!("unknown flags {flags:#04x}")).into());
    }
    let digest: [u8; 32] = r.take(32)?.try_into().unwrap();
    let name = r.str()?;
    let input = Shape::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let classes = r.u32()? as usize;
    let n_scale = r.u16()? as usize;
    let input_scale = (0..n_scale).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
    let n_layers = r.u16()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let code = r.u8()?;
        let kind = LayerKind::from_code(code).ok_or(FormatError::UnknownLayerKind(code))?;
        let n = r.u8()? as usize;
        let dims = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let spec = LayerSpec::from_dims(kind, &dims)
            .map_err(|e| FormatError::ShapeInconsistency(format!("layer descriptor: {e}")))?;
        layers.push(spec);
    }
    let config = NetworkConfig::new(name, input, layers, classes).map_err(|e| FormatError::ShapeInconsistency(e.to_string()))?;
    if config_digest(&config) != digest {
        return Err(FormatError::DigestMismatch.into());
    }

    let mut stored: Vec<ModelLayer> = Vec::with_capacity(n_layers);
    for spec in config.layers() {
        stored.push(match spec {
            LayerSpec::BatchNorm { channels } => {
                let scale = (0..*channels).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
                let shift = (0..*channels).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
                ModelLayer::BatchNorm(Affine { scale, shift })
            }
            _ => ModelLayer::None,
        });
    }
    for (i, spec) in config.layers().iter().enumerate() {
        if !spec.is_binary() {
            continue;
        }
        let shape = config.weight_shape(i).expect("binary layers have weights");
        let len = config.weight_len(i);
        stored[i] = match precision {
            Precision::Binary => {
                let data = r.take(byte_len(len))?.to_vec();
                ModelLayer::Binary(BitTensor::from_raw_parts(shape, data)?)
            }
            Precision::Full => ModelLayer::Real((0..len).map(|_| r.f32()).collect::<Result<Vec<_>>>()?),
        };
    }
    let mut metadata = BTreeMap::new();
    if flags & FLAG_EXTENSION != 0 {
        let n = r.u16()?;
        if n == 0 {
            return Err(FormatError::InvalidField("empty extension block".into()).into());
        }
        for _ in 0..n {
            let k = r.str()?;
            let v = r.str()?;
            if metadata.insert(k.clone(), v).is_some() {
                return Err(FormatError::InvalidField(format!("duplicate metadata key {k:?}")).into());
            }
        }
    }
    r.end()?;
    BinarizedModel::new(config, precision, stored, input_scale, metadata)
        .map_err(|e| FormatError::ShapeInconsistency(e.to_string()).into())
}

/// Writes the model file; returns the number of bytes written.
pub fn save(model: &BinarizedModel, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let bytes = to_bytes(model)?;
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len() as u64)
}

pub fn load(path: impl AsRef<Path>) -> Result<BinarizedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Exact size of a saved model with the given config, weight encoding,
/// number of input scales and metadata.
pub fn file_size(config: &NetworkConfig, precision: Precision, input_scales: usize, metadata: &BTreeMap<String, String>) -> u64 {
    let mut n = 4 + 2 + 1 + 1 + 32;
    n += 4 + config.name().len();
    n += 12 + 4;
    n += 2 + 4 * input_scales;
    n += 2;
    n += config.layers().iter().map(|l| 2 + 4 * l.dims().len()).sum::<usize>();
    n += 4 * config.real_param_count();
    n += weight_bytes(config, precision) as usize;
    if !metadata.is_empty() {
        n += 2 + metadata.iter().map(|(k, v)| 8 + k.len() + v.len()).sum::<usize>();
    }
    (n + 4) as u64
}

fn weight_bytes(config: &NetworkConfig, precision: Precision) -> u64 {
    (0..config.layers().len())
        .filter(|&i| config.layers()[i].is_binary())
        .map(|i| match precision {
            Precision::Binary => byte_len(config.weight_len(i)) as u64,
            Precision::Full => 4 * config.weight_len(i) as u64,
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeReport {
    pub binary_params: usize,
    pub real_params: usize,
    /// Size of the saved binary model (one input scale per sensor row, no
    /// metadata).
    pub packed_bytes: u64,
    /// Bytes of the packed weight block alone.
    pub weight_bytes: u64,
    pub float32_equivalent_bytes: u64,
    /// `float32_equivalent_bytes / packed_bytes`.
    pub ratio: f64,
}

pub fn size_report(config: &NetworkConfig) -> SizeReport {
    let binary_params = config.binary_param_count();
    let real_params = config.real_param_count();
    let packed_bytes = file_size(config, Precision::Binary, config.input_shape().height, &BTreeMap::new());
    let float32_equivalent_bytes = 4 * (binary_params + real_params) as u64;
    SizeReport {
        binary_params,
        real_params,
        packed_bytes,
        weight_bytes: weight_bytes(config, Precision::Binary),
        float32_equivalent_bytes,
        ratio: float32_equivalent_bytes as f64 / packed_bytes as f64,
    }
}

/// Size in MB (10^6 bytes) with two decimals.
pub fn format_mb(bytes: u64) -> String {
    format!("{:.2}", bytes as f64 / 1e6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::config::bipedalnet_v1;
    use crate::net::params::{LatentWeights, LayerParams};

    fn model(precision: Precision, seed: u64) -> BinarizedModel {
        let cfg = bipedalnet_v1();
        let mut w = LatentWeights::init(&cfg, precision, seed);
        for p in &mut w.layers {
            if let LayerParams::BatchNorm(bn) = p {
                bn.gamma.iter_mut().enumerate().for_each(|(i, g)| *g = 0.5 + i as f64 * 0.01);
            }
        }
        BinarizedModel::from_latent(&cfg, &w, vec![1.5; 6]).unwrap()
    }

    #[test]
    fn bipedalnet_byte_accounting() {
        let cfg = bipedalnet_v1();
        let report = size_report(&cfg);
        assert_eq!(report.weight_bytes, 37_106);
        assert_eq!(4 * report.real_params, 4_432);
        assert_eq!(format_mb(report.packed_bytes), "0.04");
        assert!(report.ratio >= 25.0, "{report:?}");
        let m = model(Precision::Binary, 1);
        let bytes = to_bytes(&m).unwrap();
        assert_eq!(bytes.len() as u64, report.packed_bytes);
        assert_eq!(from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn single_dense_has_one_weight_byte() {
        let cfg = NetworkConfig::new("d", Shape::flat(8), vec![LayerSpec::BinDense { units: 1 }], 1).unwrap();
        assert_eq!(size_report(&cfg).weight_bytes, 1);
    }

    #[test]
    fn ratio_limits() {
        let big = NetworkConfig::new("d", Shape::flat(8192), vec![LayerSpec::BinDense { units: 1 }], 1).unwrap();
        let r = size_report(&big);
        assert_eq!(r.float32_equivalent_bytes as f64 / r.weight_bytes as f64, 32.0);
        assert!(r.ratio > 28.0 && r.ratio < 32.0);
        let none = NetworkConfig::new("n", Shape::new(20_000, 1, 1), vec![LayerSpec::BatchNorm { channels: 20_000 }], 20_000).unwrap();
        assert!((size_report(&none).ratio - 1.0).abs() < 0.01);
    }

    #[test]
    fn full_precision_twin_is_larger() {
        let binary = to_bytes(&model(Precision::Binary, 2)).unwrap();
        let full = model(Precision::Full, 2);
        let bytes = to_bytes(&full).unwrap();
        assert!(bytes.len() >= 25 * binary.len());
        assert_eq!(from_bytes(&bytes).unwrap(), full);
        assert_eq!(bytes.len() as u64, file_size(full.config(), Precision::Full, 6, &BTreeMap::new()));
    }

    #[test]
    fn metadata_round_trip() {
        let mut meta = BTreeMap::new();
        meta.insert("user_id".to_string(), "42".to_string());
        meta.insert("epochs".to_string(), "5".to_string());
        let m = model(Precision::Binary, 3).with_metadata(meta.clone());
        let bytes = to_bytes(&m).unwrap();
        assert_eq!(bytes.len() as u64, file_size(m.config(), Precision::Binary, 6, &meta));
        assert_eq!(from_bytes(&bytes).unwrap().metadata(), &meta);
    }

    #[test]
    fn structural_errors_are_named() {
        let bytes = to_bytes(&model(Precision::Binary, 4)).unwrap();
        let mut trailing = bytes.clone();
        trailing.insert(bytes.len() - 4, 0);
        let crc = crc32fast::hash(&trailing[..trailing.len() - 4]);
        let n = trailing.len();
        trailing[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(from_bytes(&trailing), Err(Error::Format(FormatError::TrailingBytes(1)))));

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(from_bytes(&bad_magic), Err(Error::Format(FormatError::BadMagic { .. }))));

        let mut flipped = bytes.clone();
        flipped[2000] ^= 0x04;
        assert!(matches!(from_bytes(&flipped), Err(Error::Format(FormatError::CrcMismatch { .. }))));

        for cut in [0, 3, 10, 100, bytes.len() - 1] {
            assert!(matches!(from_bytes(&bytes[..cut]), Err(Error::Format(_))));
        }
    }

    #[test]
    fn save_and_load_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bpn");
        let m = model(Precision::Binary, 5);
        let n = save(&m, &path).unwrap();
        assert_eq!(n, std::fs::metadata(&path).unwrap().len());
        assert_eq!(load(&path).unwrap(), m);
        assert!(matches!(load(dir.path().join("missing.bpn")), Err(Error::Io { .. })));
    }
}
