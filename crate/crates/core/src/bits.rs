//! Packed 1-bit tensors.
//!
//! A `+1` is stored as a set bit and a `-1` as a cleared bit. Bits are packed
//! LSB-first into bytes, row-major with the innermost dimension varying
//! fastest, and the final byte is zero-padded. This layout is shared by the
//! kernels and by the on-disk model format.

use crate::error::{Error, FormatError, Result};

/// A sequence of `-1`/`+1` entries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|&v| v != 1 && v != -1) {
            return Err(Error::Parameter(format!(
                "sign vector entry {pos} is {}, expected -1 or +1",
                values[pos]
            )));
        }
        Ok(SignVector(values))
    }

    pub fn from_bools(bits: impl IntoIterator<Item = bool>) -> Self {
        SignVector(bits.into_iter().map(|b| if b { 1 } else { -1 }).collect())
    }

    pub fn values(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn negate(&self) -> Self {
        SignVector(self.0.iter().map(|v| -v).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn into_inner(self) -> Vec<i8> {
        self.0
    }
}

/// Bit-packed tensor of `±1` values with a logical shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitTensor {
    shape: Vec<usize>,
    data: Vec<u8>,
}

pub(crate) fn byte_len(bits: usize) -> usize {
    bits.div_ceil(8)
}

impl BitTensor {
    /// Builds a tensor from raw packed bytes, checking length and padding.
    pub fn from_raw_parts(shape: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != byte_len(len) {
            return Err(Error::dim(format!(
                "{} bytes for {len} bits, expected {}",
                data.len(),
                byte_len(len)
            )));
        }
        check_padding(&data, len)?;
        Ok(BitTensor { shape, data })
    }

    /// Packs a sign vector under the given shape.
    pub fn from_signs(shape: Vec<usize>, signs: &SignVector) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != signs.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} holds {len} values, got {}",
                signs.len()
            )));
        }
        Ok(Self::from_bits(shape, signs.values().iter().map(|&v| v > 0)))
    }

    pub(crate) fn from_bits(shape: Vec<usize>, bits: impl IntoIterator<Item = bool>) -> Self {
        let len: usize = shape.iter().product();
        let mut data = vec![0u8; byte_len(len)];
        let mut count = 0;
        for (i, bit) in bits.into_iter().enumerate() {
            if bit {
                data[i / 8] |= 1 << (i % 8);
            }
            count += 1;
        }
        debug_assert_eq!(count, len);
        BitTensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn logical_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    /// True where the stored value is `+1`.
    #[inline]
    pub fn bit(&self, index: usize) -> bool {
        self.data[index / 8] >> (index % 8) & 1 == 1
    }

    pub fn sign(&self, index: usize) -> i8 {
        if self.bit(index) {
            1
        } else {
            -1
        }
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.logical_len() {
            return Err(Error::dim(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }
}

fn check_padding(data: &[u8], len: usize) -> Result<()> {
    let used = len % 8;
    if used != 0 {
        if let Some(&last) = data.last() {
            if last >> used != 0 {
                return Err(FormatError::NonZeroPadding.into());
            }
        }
    }
    Ok(())
}

/// Packs a sign vector into a one-dimensional bit tensor.
pub fn pack(v: &SignVector) -> BitTensor {
    BitTensor::from_bits(vec![v.len()], v.values().iter().map(|&s| s > 0))
}

/// Expands a bit tensor back into signs, in storage order.
pub fn unpack(t: &BitTensor) -> Result<SignVector> {
    let len = t.logical_len();
    if t.data.len() != byte_len(len) {
        return Err(FormatError::ShapeInconsistency(format!(
            "{} bytes for {len} bits",
            t.data.len()
        ))
        .into());
    }
    check_padding(&t.data, len)?;
    Ok(SignVector((0..len).map(|i| t.sign(i)).collect()))
}
