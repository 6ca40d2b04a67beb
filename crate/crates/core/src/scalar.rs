//! Element types that a [`Tensor`](crate::Tensor) can hold.
//!
//! The numeric code in this crate is written against the [`Element`] trait so
//! that the same routines serve label images (`u8`), counters (`i32`) and
//! intensity images (`f32`/`f64`).

use std::fmt;

use num_traits::{NumCast, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Runtime tag of the element type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Uint8,
    Int32,
    Float32,
    Float64,
}

impl DType {
    pub const ALL: [DType; 4] = [DType::Uint8, DType::Int32, DType::Float32, DType::Float64];

    /// Size of one element in bytes.
    pub fn size(self) -> usize {
        match self {
            DType::Uint8 => 1,
            DType::Int32 | DType::Float32 => 4,
            DType::Float64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::Uint8 => "uint8",
            DType::Int32 => "int32",
            DType::Float32 => "float32",
            DType::Float64 => "float64",
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, DType::Float32 | DType::Float64)
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scalar types storable in a tensor.
///
/// Byte conversion is always little-endian; every on-disk format written by
/// this crate is little-endian.
pub trait Element:
    Copy + Default + PartialEq + PartialOrd + fmt::Debug + Zero + NumCast + ToPrimitive + Send + Sync + 'static
{
    const DTYPE: DType;
    const SIZE: usize;

    fn from_le_slice(bytes: &[u8]) -> Self;
    fn write_le(self, out: &mut [u8]);

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Saturating conversion from `f64`; NaN maps to zero for integer types.
    fn from_f64_lossy(v: f64) -> Self;
}

macro_rules! impl_int_element {
    ($t:ty, $dtype:expr) => {
        impl Element for $t {
            const DTYPE: DType = $dtype;
            const SIZE: usize = std::mem::size_of::<$t>();

            #[inline]
            fn from_le_slice(bytes: &[u8]) -> Self {
                let mut buf = [0u8; std::mem::size_of::<$t>()];
                buf.copy_from_slice(&bytes[..Self::SIZE]);
                <$t>::from_le_bytes(buf)
            }

            #[inline]
            fn write_le(self, out: &mut [u8]) {
                out[..Self::SIZE].copy_from_slice(&self.to_le_bytes());
            }

            fn from_f64_lossy(v: f64) -> Self {
                if v.is_nan() {
                    0
                } else {
                    // `as` saturates for float-to-int casts.
                    v.round() as $t
                }
            }
        }
    };
}

macro_rules! impl_float_element {
    ($t:ty, $dtype:expr) => {
        impl Element for $t {
            const DTYPE: DType = $dtype;
            const SIZE: usize = std::mem::size_of::<$t>();

            #[inline]
            fn from_le_slice(bytes: &[u8]) -> Self {
                let mut buf = [0u8; std::mem::size_of::<$t>()];
                buf.copy_from_slice(&bytes[..Self::SIZE]);
                <$t>::from_le_bytes(buf)
            }

            #[inline]
            fn write_le(self, out: &mut [u8]) {
                out[..Self::SIZE].copy_from_slice(&self.to_le_bytes());
            }

            fn from_f64_lossy(v: f64) -> Self {
                v as $t
            }
        }
    };
}

impl_int_element!(u8, DType::Uint8);
impl_int_element!(i32, DType::Int32);
impl_float_element!(f32, DType::Float32);
impl_float_element!(f64, DType::Float64);

/// Decodes a little-endian byte buffer into typed elements.
pub fn decode_le<T: Element>(bytes: &[u8]) -> Vec<T> {
    bytes.chunks_exact(T::SIZE).map(T::from_le_slice).collect()
}

/// Encodes typed elements as little-endian bytes.
pub fn encode_le<T: Element>(values: &[T]) -> Vec<u8> {
    let mut out = vec![0u8; values.len() * T::SIZE];
    for (chunk, v) in out.chunks_exact_mut(T::SIZE).zip(values) {
        v.write_le(chunk);
    }
    out
}
