//! Image and array file IO: MetaImage, `.npy`, and provenance hashing.

mod metaimage;
mod npy;

use std::fs::File;
use std::io::Read;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::ImageGeometry;
use crate::scalar::DType;
use crate::tensor::Tensor;

pub use metaimage::{read_metaimage, read_metaimage_header, write_metaimage, MetaHeader, COMPRESSION_LEVEL};
pub use npy::{encode_header as encode_npy_header, read_npy, read_npy_header, read_npy_region, write_npy, NpyHeader};

/// On-disk formats understood by [`read_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    MetaImage,
    Npy,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "mha" | "mhd" => Ok(ImageFormat::MetaImage),
            "npy" => Ok(ImageFormat::Npy),
            _ => Err(Error::UnsupportedFormat(format!(
                "cannot infer image format of {}",
                path.display()
            ))),
        }
    }
}

/// Shape, element type and geometry of an image file, read from its header.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageInfo {
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// `None` for formats without geometry (`.npy`).
    pub geometry: Option<ImageGeometry>,
}

/// Reads only the header of an image file.
pub fn probe_image(path: &Path) -> Result<ImageInfo> {
    match ImageFormat::from_path(path)? {
        ImageFormat::MetaImage => {
            let h = read_metaimage_header(path)?;
            Ok(ImageInfo {
                dtype: h.dtype,
                shape: h.shape,
                geometry: Some(h.geometry),
            })
        }
        ImageFormat::Npy => {
            let h = read_npy_header(path)?;
            Ok(ImageInfo {
                dtype: h.dtype,
                shape: h.shape,
                geometry: None,
            })
        }
    }
}

/// Reads an image of any supported format. `.npy` files carry no geometry.
pub fn read_image(path: &Path) -> Result<(Tensor, Option<ImageGeometry>)> {
    match ImageFormat::from_path(path)? {
        ImageFormat::MetaImage => read_metaimage(path).map(|(t, g)| (t, Some(g))),
        ImageFormat::Npy => read_npy(path).map(|t| (t, None)),
    }
}

/// SHA-256 of the file contents as lowercase hex.
pub fn hash_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
