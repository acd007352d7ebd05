//! Binarized convolutional networks for smartphone gait identification.

// NaN-rejecting `!(x > 0.0)` checks and index loops over small matrices are
// deliberate
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bits;
mod codec;
pub mod enroll;
pub mod error;
pub mod gait;
pub mod kernels;
pub mod model_io;
pub mod net;
pub mod seed;
pub mod train;

pub use bits::{pack, unpack, BitTensor, SignVector};
pub use error::{Error, FormatError, Result};
