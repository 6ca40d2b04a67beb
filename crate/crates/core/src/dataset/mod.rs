//! Chunk-addressable dataset container.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! 0       8-byte magic  "MIADS\0" + u16 format version (1)
//! 8       u64 offset of the metadata block
//! 16      u64 length of the metadata block
//! 24..64  zero
//! 64      data section: C-order payloads, each starting 64-byte aligned
//! ...     metadata block: UTF-8 JSON
//! ```
//!
//! Descriptor `byte_offset`s are relative to the start of the data section.
//! Because payloads are raw C-order arrays, an axis-0 slice is one contiguous
//! read and a 3-D patch is one read per (z, y) row.

mod create;
mod handle;
mod plan;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::ImageGeometry;
use crate::scalar::DType;

pub use create::{create_dataset, create_dataset_with, create_metadata_dataset, ContainerSummary, PayloadTransform};
pub use handle::{inspect, open_dataset, DatasetHandle, Listing};
pub use plan::{CreationPlan, EntrySource, InlineValues, SubjectSource, TransformSpec};

pub const MAGIC: [u8; 8] = *b"MIADS\x00\x01\x00";
pub const FORMAT_VERSION: u32 = 1;
/// Start of the data section.
pub const DATA_START: u64 = 64;
/// Alignment of every payload within the data section.
pub const PAYLOAD_ALIGN: u64 = 64;

/// Metadata stored at the tail of a container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataBlock {
    pub format_version: u32,
    pub name: String,
    /// True when payloads live in the source files rather than the container.
    pub metadata_only: bool,
    /// Canonical sample order.
    pub subjects: Vec<String>,
    pub categories: Vec<CategoryDescriptor>,
    pub provenance: Vec<ProvenanceEntry>,
    /// Channel identifiers per category, e.g. `images -> [T1, T2]`.
    pub names: BTreeMap<String, Vec<String>>,
    /// Write-time transforms; metadata-only readers replay them on load.
    pub transforms: Vec<TransformSpec>,
}

/// Location and layout of one (subject, category) payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDescriptor {
    pub category: String,
    pub subject_id: String,
    pub dtype: DType,
    /// Spatial axes followed by the channel axis for image categories.
    pub shape: Vec<usize>,
    pub byte_offset: u64,
    pub byte_length: u64,
    pub geometry: Option<ImageGeometry>,
    /// Source files, recorded only in metadata-only containers.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
    /// Inline values, recorded only in metadata-only containers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl CategoryDescriptor {
    /// Whether this entry is an image (has geometry and a channel axis).
    pub fn is_image(&self) -> bool {
        self.geometry.is_some()
    }

    /// Shape without the channel axis for images; the full shape otherwise.
    pub fn spatial_shape(&self) -> &[usize] {
        match &self.geometry {
            Some(g) => &self.shape[..g.ndim()],
            None => &self.shape,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub subject_id: String,
    pub category: String,
    pub source_path: String,
    pub sha256: Option<String>,
}
