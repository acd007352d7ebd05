//! XNOR/popcount arithmetic over packed sign vectors, and im2col lowering of
//! valid (unpadded) convolutions onto matrix products.

use crate::bits::BitTensor;
use crate::error::{Error, Result};

/// Dot product of two `±1` vectors stored as bits: `n - 2 * popcount(a ^ b)`.
pub fn xnor_dot(a: &BitTensor, b: &BitTensor) -> Result<i32> {
    let n = a.logical_len();
    if n != b.logical_len() {
        return Err(Error::dim(format!(
            "xnor_dot length {n} vs {}",
            b.logical_len()
        )));
    }
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let mut mismatches = 0u32;
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        let x = u64::from_le_bytes(x.try_into().unwrap());
        let y = u64::from_le_bytes(y.try_into().unwrap());
        mismatches += (x ^ y).count_ones();
    }
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        mismatches += (x ^ y).count_ones();
    }
    Ok(n as i32 - 2 * mismatches as i32)
}

/// Rows of `±1` values packed into 64-bit words, each row word-aligned.
///
/// Padding bits beyond `bits` are zero in every row, so they never count
/// as mismatches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedRows {
    rows: usize,
    bits: usize,
    words: usize,
    data: Vec<u64>,
}

impl PackedRows {
    pub fn zeros(rows: usize, bits: usize) -> Self {
        let words = bits.div_ceil(64);
        PackedRows { rows, bits, words, data: vec![0; rows * words] }
    }

    /// Builds `rows × bits` from a predicate giving `true` for `+1`.
    pub fn from_fn(rows: usize, bits: usize, mut positive: impl FnMut(usize, usize) -> bool) -> Self {
        let mut out = Self::zeros(rows, bits);
        for r in 0..rows {
            let row = &mut out.data[r * out.words..(r + 1) * out.words];
            for c in 0..bits {
                if positive(r, c) {
                    row[c / 64] |= 1 << (c % 64);
                }
            }
        }
        out
    }

    /// Interprets a `[rows, bits]` bit tensor row by row.
    pub fn from_tensor(t: &BitTensor, rows: usize, bits: usize) -> Result<Self> {
        if rows * bits != t.logical_len() {
            return Err(Error::dim(format!(
                "{rows}x{bits} rows from tensor of {} bits",
                t.logical_len()
            )));
        }
        Ok(Self::from_fn(rows, bits, |r, c| t.bit(r * bits + c)))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words..(r + 1) * self.words]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize) {
        self.data[r * self.words + c / 64] |= 1 << (c % 64);
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.words + c / 64] >> (c % 64) & 1 == 1
    }
}

#[inline]
fn xnor_words(a: &[u64], b: &[u64], bits: usize) -> i32 {
    let mismatches: u32 = a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum();
    bits as i32 - 2 * mismatches as i32
}

/// `out[i][j] = xnor dot of a.row(i) and b.row(j)`, i.e. `A · Bᵀ` on the
/// `±1` expansions. Output is row-major `a.rows() × b.rows()`.
pub fn xnor_gemm_nt(a: &PackedRows, b: &PackedRows) -> Result<Vec<i32>> {
    if a.bits != b.bits {
        return Err(Error::dim(format!(
            "inner dimension {} vs {}",
            a.bits, b.bits
        )));
    }
    let mut out = Vec::with_capacity(a.rows * b.rows);
    for i in 0..a.rows {
        let ra = a.row(i);
        out.extend((0..b.rows).map(|j| xnor_words(ra, b.row(j), a.bits)));
    }
    Ok(out)
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }
}

/// Binary matrix product of `A [m, k]` and `B [k, n]`; integer accumulation.
pub fn xnor_gemm(a: &BitTensor, b: &BitTensor) -> Result<Matrix<i32>> {
    let (&[m, k], &[k2, n]) = (a.shape(), b.shape()) else {
        return Err(Error::dim(format!(
            "xnor_gemm expects 2-d operands, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    };
    if k != k2 {
        return Err(Error::dim(format!("inner dimensions {k} vs {k2}")));
    }
    let lhs = PackedRows::from_tensor(a, m, k)?;
    let rhs_t = PackedRows::from_fn(n, k, |j, i| b.bit(i * n + j));
    Ok(Matrix { rows: m, cols: n, data: xnor_gemm_nt(&lhs, &rhs_t)? })
}

/// Output extent of a valid convolution or pooling window.
pub fn valid_out_len(len: usize, kernel: usize, stride: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::dim("kernel and stride must be positive"));
    }
    if kernel > len {
        return Err(Error::dim(format!("kernel {kernel} larger than input {len}")));
    }
    Ok((len - kernel) / stride + 1)
}

/// Patch geometry for a valid 2-d convolution over `[channels, height, width]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub out_h: usize,
    pub out_w: usize,
}

impl PatchGeometry {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
    ) -> Result<Self> {
        let out_h = valid_out_len(height, kernel.0, stride.0)?;
        let out_w = valid_out_len(width, kernel.1, stride.1)?;
        Ok(PatchGeometry { channels, height, width, kernel, stride, out_h, out_w })
    }

    /// Patch length: `channels · kh · kw`.
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel.0 * self.kernel.1
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input offset of patch element `row` for output position `col`.
    /// Rows are ordered channel-major, then kernel row, then kernel column,
    /// matching the `[filters, channels, kh, kw]` weight layout.
    #[inline]
    pub fn source_index(&self, row: usize, col: usize) -> usize {
        let (kh, kw) = self.kernel;
        let c = row / (kh * kw);
        let i = row / kw % kh;
        let j = row % kw;
        let oy = col / self.out_w;
        let ox = col % self.out_w;
        (c * self.height + oy * self.stride.0 + i) * self.width + ox * self.stride.1 + j
    }

    /// Writes the `patch_len × positions` matrix for one input into `out`.
    pub fn fill<T: Copy>(&self, x: &[T], out: &mut [T]) {
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let p = self.positions();
        debug_assert_eq!(out.len(), self.patch_len() * p);
        let mut row = 0;
        for c in 0..self.channels {
            for i in 0..kh {
                for j in 0..kw {
                    let dst = &mut out[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let src = (c * self.height + oy * sh + i) * self.width + j;
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        for (ox, d) in line.iter_mut().enumerate() {
                            *d = x[src + ox * sw];
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Adds a `patch_len × positions` gradient back onto the input layout.
    pub fn accumulate(&self, cols: &[f64], dx: &mut [f64]) {
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let p = self.positions();
        let mut row = 0;
        for c in 0..self.channels {
            for i in 0..kh {
                for j in 0..kw {
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let base = (c * self.height + oy * sh + i) * self.width + j;
                        for ox in 0..self.out_w {
                            dx[base + ox * sw] += src[oy * self.out_w + ox];
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Lowers a `[channels, height, width]` input to a
/// `(channels·kh·kw) × (out_h·out_w)` patch matrix.
pub fn im2col_2d<T: Copy + Default>(
    x: &[T],
    channels: usize,
    height: usize,
    width: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
) -> Result<Matrix<T>> {
    if x.len() != channels * height * width {
        return Err(Error::dim(format!(
            "input of {} values for {channels}x{height}x{width}",
            x.len()
        )));
    }
    let g = PatchGeometry::new(channels, height, width, kernel, stride)?;
    let mut data = vec![T::default(); g.patch_len() * g.positions()];
    g.fill(x, &mut data);
    Ok(Matrix { rows: g.patch_len(), cols: g.positions(), data })
}

/// One-dimensional lowering of `[channels, length]`; column `j` holds the
/// patch starting at `j · stride`.
pub fn im2col_1d<T: Copy + Default>(
    x: &[T],
    channels: usize,
    length: usize,
    kernel: usize,
    stride: usize,
) -> Result<Matrix<T>> {
    im2col_2d(x, channels, 1, length, (1, kernel), (1, stride))
}
