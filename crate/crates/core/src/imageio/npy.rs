//! NumPy `.npy` (format version 1.0) reader and writer.
//!
//! Headers are written byte-for-byte like current NumPy: sorted dict keys,
//! spare space for growing the first axis, padded to a 64-byte boundary.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::DType;
use crate::tensor::{Region, Tensor};
use crate::with_tensor;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ARRAY_ALIGN: usize = 64;
const GROWTH_AXIS_MAX_DIGITS: usize = 21;

/// Parsed `.npy` header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpyHeader {
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub big_endian: bool,
    /// Byte offset of the payload from the start of the file.
    pub data_offset: u64,
}

fn descr_for(dtype: DType) -> &'static str {
    match dtype {
        DType::Uint8 => "|u1",
        DType::Int32 => "<i4",
        DType::Float32 => "<f4",
        DType::Float64 => "<f8",
    }
}

fn parse_descr(descr: &str) -> Result<(DType, bool)> {
    let (order, code) = descr.split_at(1.min(descr.len()));
    let big = match order {
        "<" | "|" | "=" => false,
        ">" => true,
        _ => return Err(Error::UnsupportedFormat(format!("npy descr {descr:?}"))),
    };
    let dtype = match code {
        "u1" | "b1" => DType::Uint8,
        "i4" => DType::Int32,
        "f4" => DType::Float32,
        "f8" => DType::Float64,
        _ => return Err(Error::UnsupportedFormat(format!("npy descr {descr:?}"))),
    };
    Ok((dtype, big))
}

fn header_text(dtype: DType, shape: &[usize]) -> String {
    let shape_repr = if shape.len() == 1 {
        format!("({},)", shape[0])
    } else {
        let parts: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        format!("({})", parts.join(", "))
    };
    let mut h = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {shape_repr}, }}",
        descr_for(dtype)
    );
    let first = shape[0].to_string().len();
    h.push_str(&" ".repeat(GROWTH_AXIS_MAX_DIGITS.saturating_sub(first)));
    let hlen = h.len() + 1;
    let padlen = ARRAY_ALIGN - ((MAGIC.len() + 2 + 2 + hlen) % ARRAY_ALIGN);
    h.push_str(&" ".repeat(padlen));
    h.push('\n');
    h
}

/// Serialized `.npy` header bytes for a C-order array.
pub fn encode_header(dtype: DType, shape: &[usize]) -> Vec<u8> {
    let text = header_text(dtype, shape);
    let mut out = Vec::with_capacity(10 + text.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(text.len() as u16).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out
}

pub fn write_npy(t: &Tensor, path: &Path) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_header(t.dtype(), t.shape()))
        .map_err(|e| Error::io(path, e))?;
    let bytes = with_tensor!(t, a => crate::scalar::encode_le(a.data()));
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn value_after<'a>(dict: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("'{key}':");
    let pos = dict
        .find(&pat)
        .ok_or_else(|| Error::CorruptFile(format!("npy header lacks {key:?}")))?;
    Ok(dict[pos + pat.len()..].trim_start())
}

fn parse_header_dict(dict: &str) -> Result<(DType, bool, Vec<usize>)> {
    let descr = value_after(dict, "descr")?;
    let quote = descr
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"')
        .ok_or_else(|| Error::CorruptFile("npy descr is not a string".into()))?;
    let end = descr[1..]
        .find(quote)
        .ok_or_else(|| Error::CorruptFile("unterminated npy descr".into()))?;
    let (dtype, big) = parse_descr(&descr[1..1 + end])?;

    let fortran = value_after(dict, "fortran_order")?;
    if fortran.starts_with("True") {
        return Err(Error::UnsupportedFormat("Fortran-ordered npy arrays".into()));
    } else if !fortran.starts_with("False") {
        return Err(Error::CorruptFile("bad npy fortran_order".into()));
    }

    let shape = value_after(dict, "shape")?;
    let close = shape
        .find(')')
        .filter(|_| shape.starts_with('('))
        .ok_or_else(|| Error::CorruptFile("bad npy shape".into()))?;
    let dims: Vec<usize> = shape[1..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.trim_end_matches('L').parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::CorruptFile(format!("bad npy shape {:?}", &shape[..=close])))?;
    if dims.is_empty() {
        return Err(Error::UnsupportedFormat("0-d npy arrays (shape must be at least 1-d)".into()));
    }
    Ok((dtype, big, dims))
}

fn parse_header_from<R: Read>(r: &mut R, path: &Path) -> Result<NpyHeader> {
    let mut pre = [0u8; 8];
    r.read_exact(&mut pre).map_err(|_| truncated(path))?;
    if &pre[..6] != MAGIC {
        return Err(Error::CorruptFile(format!("{}: not an npy file", path.display())));
    }
    let (len_bytes, prefix) = match pre[6] {
        1 => (2usize, 10u64),
        2 | 3 => (4usize, 12u64),
        v => return Err(Error::UnsupportedFormat(format!("npy format version {v}"))),
    };
    let mut lb = [0u8; 4];
    r.read_exact(&mut lb[..len_bytes]).map_err(|_| truncated(path))?;
    let hlen = u32::from_le_bytes(lb) as usize;
    let mut text = vec![0u8; hlen];
    r.read_exact(&mut text).map_err(|_| truncated(path))?;
    let dict = String::from_utf8_lossy(&text);
    let (dtype, big_endian, shape) = parse_header_dict(&dict)?;
    if shape.len() > crate::tensor::MAX_DIMS || shape.contains(&0) {
        return Err(Error::UnsupportedFormat(format!("npy shape {shape:?}")));
    }
    Ok(NpyHeader {
        dtype,
        shape,
        big_endian,
        data_offset: prefix + hlen as u64,
    })
}

fn truncated(path: &Path) -> Error {
    Error::CorruptFile(format!("{}: truncated npy file", path.display()))
}

pub fn read_npy_header(path: &Path) -> Result<NpyHeader> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_header_from(&mut f, path)
}

fn swap_if_needed(header: &NpyHeader, bytes: &mut [u8]) {
    let size = header.dtype.size();
    if header.big_endian && size > 1 {
        for c in bytes.chunks_exact_mut(size) {
            c.reverse();
        }
    }
}

pub fn read_npy(path: &Path) -> Result<Tensor> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header_from(&mut f, path)?;
    let n: usize = header.shape.iter().product();
    let mut bytes = vec![0u8; n * header.dtype.size()];
    f.read_exact(&mut bytes).map_err(|_| truncated(path))?;
    swap_if_needed(&header, &mut bytes);
    Tensor::from_le_bytes(header.dtype, header.shape, &bytes)
}

/// Reads only `region` (leading axes, must lie inside the array).
pub fn read_npy_region(path: &Path, region: &Region) -> Result<Tensor> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header_from(&mut f, path)?;
    let mut t = crate::rawio::read_region_at(&f, path, header.data_offset, header.dtype, &header.shape, region)?;
    if header.big_endian {
        let mut bytes = t.to_le_bytes();
        swap_if_needed(&header, &mut bytes);
        t = Tensor::from_le_bytes(header.dtype, t.shape().to_vec(), &bytes)?;
    }
    Ok(t)
}
