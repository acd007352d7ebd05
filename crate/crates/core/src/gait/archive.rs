//! Cycle archives: normalized cycles with their provenance.
//!
//! Layout (little-endian): `"BPC1"`, `u16` version, source string
//! (`u32` length + UTF-8), `u16` channels, `u16` samples per channel,
//! `u32` cycle count, then per cycle `u64` id, `u32` user, `f64` start,
//! `f64` end and `channels × samples` `f64` values; CRC-32 footer.

use super::{GaitCycle, CHANNELS, CYCLE_LEN};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{FormatError, Result};

const MAGIC: &[u8; 4] = b"BPC1";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CycleArchive {
    /// Where the cycles came from, e.g. the input CSV path.
    pub source: String,
    pub cycles: Vec<GaitCycle>,
}

pub fn write_archive(archive: &CycleArchive) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.str(&archive.source);
    w.u16(CHANNELS as u16);
    w.u16(CYCLE_LEN as u16);
    w.u32(archive.cycles.len() as u32);
    for c in &archive.cycles {
        w.u64(c.id);
        w.u32(c.user_id);
        w.f64(c.span.0);
        w.f64(c.span.1);
        for &v in &c.data {
            w.f64(v);
        }
    }
    w.finish()
}

pub fn read_archive(bytes: &[u8]) -> Result<CycleArchive> {
    let mut r = ByteReader::checked(bytes, MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let source = r.str()?;
    let (channels, len) = (r.u16()? as usize, r.u16()? as usize);
    if (channels, len) != (CHANNELS, CYCLE_LEN) {
        return Err(FormatError::ShapeInconsistency(format!("cycles of {channels}x{len}, expected {CHANNELS}x{CYCLE_LEN}")).into());
    }
    let count = r.u32()? as usize;
    let per_cycle = 8 + 4 + 16 + 8 * CHANNELS * CYCLE_LEN;
    if r.remaining() != count * per_cycle {
        return Err(FormatError::ShapeInconsistency(format!(
            "{count} cycles need {} bytes, body has {}",
            count * per_cycle,
            r.remaining()
        ))
        .into());
    }
    let mut cycles = Vec::with_capacity(count);
    for _ in 0..count {
        let id = r.u64()?;
        let user_id = r.u32()?;
        let span = (r.f64()?, r.f64()?);
        let data = (0..CHANNELS * CYCLE_LEN).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::InvalidField(format!("cycle {id:#x} value {i} is not finite")).into());
        }
        cycles.push(GaitCycle { id, user_id, data, span });
    }
    r.end()?;
    Ok(CycleArchive { source, cycles })
}
