pub mod access;
pub mod assembly;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod imageio;
pub mod intensity;
pub mod metrics;
mod rawio;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use geometry::{voxel_volume, ImageGeometry};
pub use scalar::{DType, Element};
pub use tensor::{
    extract_subtensor, linear_offset, write_region, IndexExpression, NdArray, PadMode, Region, Tensor,
    TensorElement,
};

/// Label image as stored in datasets.
pub type LabelVolume = NdArray<u8>;
/// Intensity image in the dtype used for network inputs and predictions.
pub type ImageVolume = NdArray<f32>;
/// Accumulation and distance precision.
pub type Volume64 = NdArray<f64>;
