//! MetaImage (`.mha` single file, `.mhd` header + raw payload) reader and writer.
//!
//! MetaImage stores `x` fastest; tensors are returned in C-order with axis 0 the
//! slowest file axis, so `DimSize = X Y Z` becomes shape `[Z, Y, X]` and every
//! per-axis header vector is reversed. Multi-channel images gain a trailing
//! channel axis. `TransformMatrix` is written column-major with respect to the
//! direction matrix, which is what ITK-based readers expect.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::geometry::ImageGeometry;
use crate::scalar::DType;
use crate::tensor::Tensor;
use crate::with_tensor;

/// zlib level used for compressed output.
pub const COMPRESSION_LEVEL: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MetType {
    UChar,
    Short,
    UShort,
    Int,
    Float,
    Double,
}

impl MetType {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "MET_UCHAR" => MetType::UChar,
            "MET_SHORT" => MetType::Short,
            "MET_USHORT" => MetType::UShort,
            "MET_INT" => MetType::Int,
            "MET_FLOAT" => MetType::Float,
            "MET_DOUBLE" => MetType::Double,
            other => return Err(Error::UnsupportedFormat(format!("MetaImage element type {other}"))),
        })
    }

    fn for_dtype(dtype: DType) -> &'static str {
        match dtype {
            DType::Uint8 => "MET_UCHAR",
            DType::Int32 => "MET_INT",
            DType::Float32 => "MET_FLOAT",
            DType::Float64 => "MET_DOUBLE",
        }
    }

    fn file_size(self) -> usize {
        match self {
            MetType::UChar => 1,
            MetType::Short | MetType::UShort => 2,
            MetType::Int | MetType::Float => 4,
            MetType::Double => 8,
        }
    }

    /// Tensor dtype after decoding; 16-bit types widen to `int32`.
    fn dtype(self) -> DType {
        match self {
            MetType::UChar => DType::Uint8,
            MetType::Short | MetType::UShort | MetType::Int => DType::Int32,
            MetType::Float => DType::Float32,
            MetType::Double => DType::Float64,
        }
    }
}

/// Parsed header of a MetaImage file.
#[derive(Debug, Clone)]
pub struct MetaHeader {
    pub dtype: DType,
    /// Tensor shape (C-order, channel axis last when present).
    pub shape: Vec<usize>,
    pub geometry: ImageGeometry,
    pub compressed: bool,
    met_type: MetType,
    msb: bool,
    compressed_size: Option<usize>,
    data: DataLocation,
}

#[derive(Debug, Clone)]
enum DataLocation {
    /// Payload follows the header in the same file.
    Local,
    External { path: PathBuf, skip: Option<u64> },
}

fn parse_floats(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::CorruptFile(format!("bad value {t:?} for {key}")))
        })
        .collect()
}

fn parse_bool(v: &str) -> bool {
    matches!(v.trim().to_ascii_lowercase().as_str(), "true" | "1")
}

/// Reads only the header of a MetaImage file.
pub fn read_metaimage_header(path: &Path) -> Result<MetaHeader> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_header(&mut BufReader::new(file), path)
}

fn parse_header<R: BufRead>(reader: &mut R, path: &Path) -> Result<MetaHeader> {
    let mut ndims: Option<usize> = None;
    let mut dim_size: Option<Vec<usize>> = None;
    let mut spacing: Option<Vec<f64>> = None;
    let mut offset: Option<Vec<f64>> = None;
    let mut matrix: Option<Vec<f64>> = None;
    let mut channels = 1usize;
    let mut met_type: Option<MetType> = None;
    let mut msb = false;
    let mut compressed = false;
    let mut compressed_size = None;
    let mut header_size: Option<i64> = None;
    let mut data_file: Option<String> = None;

    let mut line = Vec::new();
    loop {
        line.clear();
        let n = reader
            .read_until(b'\n', &mut line)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        let text = String::from_utf8_lossy(&line);
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let Some((key, value)) = text.split_once('=') else {
            return Err(Error::CorruptFile(format!(
                "{}: malformed header line {text:?}",
                path.display()
            )));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "NDims" => {
                ndims = Some(value.parse().map_err(|_| Error::CorruptFile(format!("bad NDims {value:?}")))?)
            }
            "DimSize" => {
                dim_size = Some(
                    value
                        .split_whitespace()
                        .map(|t| t.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::CorruptFile(format!("bad DimSize {value:?}")))?,
                )
            }
            "ElementSpacing" => spacing = Some(parse_floats(key, value)?),
            "Offset" | "Position" | "Origin" => offset = Some(parse_floats(key, value)?),
            "TransformMatrix" | "Rotation" | "Orientation" => matrix = Some(parse_floats(key, value)?),
            "ElementNumberOfChannels" => {
                channels = value
                    .parse()
                    .map_err(|_| Error::CorruptFile(format!("bad ElementNumberOfChannels {value:?}")))?
            }
            "ElementType" => met_type = Some(MetType::parse(value)?),
            "BinaryDataByteOrderMSB" | "ElementByteOrderMSB" => msb = parse_bool(value),
            "CompressedData" => compressed = parse_bool(value),
            "CompressedDataSize" => compressed_size = value.parse().ok(),
            "HeaderSize" => header_size = value.parse().ok(),
            "ElementDataFile" => {
                data_file = Some(value.to_string());
                break;
            }
            _ => {}
        }
    }

    let data_file = data_file.ok_or_else(|| {
        Error::CorruptFile(format!("{}: header has no ElementDataFile", path.display()))
    })?;
    let dims = dim_size.ok_or_else(|| Error::CorruptFile(format!("{}: missing DimSize", path.display())))?;
    let n = ndims.unwrap_or(dims.len());
    if dims.len() != n || n == 0 {
        return Err(Error::CorruptFile(format!(
            "{}: DimSize {dims:?} does not match NDims {n}",
            path.display()
        )));
    }
    let met_type =
        met_type.ok_or_else(|| Error::CorruptFile(format!("{}: missing ElementType", path.display())))?;

    let spacing = spacing.unwrap_or_else(|| vec![1.0; n]);
    let offset = offset.unwrap_or_else(|| vec![0.0; n]);
    let matrix = matrix.unwrap_or_else(|| crate::geometry::identity_matrix(n));
    if spacing.len() != n || offset.len() != n || matrix.len() != n * n {
        return Err(Error::CorruptFile(format!(
            "{}: geometry fields do not match NDims {n}",
            path.display()
        )));
    }
    // TransformMatrix holds the direction matrix column by column.
    let mut direction_xyz = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            direction_xyz[i * n + j] = matrix[j * n + i];
        }
    }
    let geometry = ImageGeometry::new(spacing, offset, direction_xyz)
        .map_err(|e| Error::CorruptFile(format!("{}: {e}", path.display())))?
        .reversed();

    let mut shape: Vec<usize> = dims.iter().rev().copied().collect();
    if channels > 1 {
        shape.push(channels);
    }

    let data = if data_file.eq_ignore_ascii_case("LOCAL") {
        DataLocation::Local
    } else {
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        DataLocation::External {
            path: base.join(&data_file),
            skip: header_size.and_then(|h| u64::try_from(h).ok()),
        }
    };

    Ok(MetaHeader {
        dtype: met_type.dtype(),
        shape,
        geometry,
        compressed,
        met_type,
        msb,
        compressed_size,
        data,
    })
}

/// Reads a MetaImage into a tensor and its geometry.
pub fn read_metaimage(path: &Path) -> Result<(Tensor, ImageGeometry)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::with_capacity(1 << 16, file);
    let header = parse_header(&mut reader, path)?;
    let n: usize = header.shape.iter().product();
    let raw_len = n * header.met_type.file_size();

    let raw = match &header.data {
        DataLocation::Local => read_payload(&mut reader, &header, raw_len, path)?,
        DataLocation::External { path: data_path, skip } => {
            let f = File::open(data_path).map_err(|e| Error::io(data_path, e))?;
            let mut r = BufReader::with_capacity(1 << 16, f);
            if let Some(skip) = skip {
                std::io::copy(&mut (&mut r).take(*skip), &mut std::io::sink())
                    .map_err(|e| Error::io(data_path, e))?;
            }
            read_payload(&mut r, &header, raw_len, data_path)?
        }
    };
    let tensor = decode_payload(&header, raw)?;
    Ok((tensor, header.geometry))
}

fn read_payload<R: Read>(r: &mut R, header: &MetaHeader, raw_len: usize, path: &Path) -> Result<Vec<u8>> {
    if header.compressed {
        let mut out = Vec::with_capacity(raw_len);
        let mut dec = ZlibDecoder::new(r);
        dec.read_to_end(&mut out).map_err(|e| {
            Error::CorruptFile(format!("{}: cannot inflate payload: {e}", path.display()))
        })?;
        if out.len() != raw_len {
            return Err(Error::CorruptFile(format!(
                "{}: payload inflates to {} bytes, expected {raw_len}",
                path.display(),
                out.len()
            )));
        }
        Ok(out)
    } else {
        let mut out = vec![0u8; raw_len];
        r.read_exact(&mut out).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::CorruptFile(format!(
                "{}: payload truncated, expected {raw_len} bytes",
                path.display()
            )),
            _ => Error::io(path, e),
        })?;
        Ok(out)
    }
}

fn decode_payload(header: &MetaHeader, mut raw: Vec<u8>) -> Result<Tensor> {
    let size = header.met_type.file_size();
    if header.msb && size > 1 {
        for chunk in raw.chunks_exact_mut(size) {
            chunk.reverse();
        }
    }
    let shape = header.shape.clone();
    match header.met_type {
        MetType::Short => {
            let v: Vec<i32> = raw
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as i32)
                .collect();
            Ok(Tensor::Int32(crate::NdArray::new(shape, v)?))
        }
        MetType::UShort => {
            let v: Vec<i32> = raw
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]) as i32)
                .collect();
            Ok(Tensor::Int32(crate::NdArray::new(shape, v)?))
        }
        _ => Tensor::from_le_bytes(header.dtype, shape, &raw),
    }
}

/// Writes `t` as a MetaImage. A `.mhd` path gets a sibling `.raw` (or `.zraw`)
/// payload file; any other extension produces a single `.mha`-style file.
///
/// The tensor's leading `geometry.ndim()` axes are spatial; one extra
/// trailing axis is written as `ElementNumberOfChannels`.
pub fn write_metaimage(t: &Tensor, g: &ImageGeometry, path: &Path, compressed: bool) -> Result<()> {
    g.validate()?;
    let n = g.ndim();
    if !(2..=3).contains(&n) {
        return Err(Error::Argument(format!(
            "MetaImage writer supports 2 or 3 spatial dimensions, got {n}"
        )));
    }
    let shape = t.shape();
    let channels = match shape.len() {
        l if l == n => 1,
        l if l == n + 1 => shape[n],
        _ => {
            return Err(Error::Argument(format!(
                "tensor shape {shape:?} does not fit a {n}-D geometry"
            )))
        }
    };

    let raw = with_tensor!(t, a => crate::scalar::encode_le(a.data()));
    let payload = if compressed {
        let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(COMPRESSION_LEVEL));
        enc.write_all(&raw).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        raw
    };

    let xyz = g.reversed();
    let fmt_vec = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            matrix[j * n + i] = xyz.direction[i * n + j];
        }
    }
    let dims: Vec<String> = shape[..n].iter().rev().map(|d| d.to_string()).collect();

    let is_mhd = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("mhd"))
        .unwrap_or(false);
    let data_name = if is_mhd {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        format!("{stem}.{}", if compressed { "zraw" } else { "raw" })
    } else {
        "LOCAL".to_string()
    };

    let mut header = String::new();
    header.push_str("ObjectType = Image\n");
    header.push_str(&format!("NDims = {n}\n"));
    header.push_str("BinaryData = True\n");
    header.push_str("BinaryDataByteOrderMSB = False\n");
    header.push_str(&format!("CompressedData = {}\n", if compressed { "True" } else { "False" }));
    if compressed {
        header.push_str(&format!("CompressedDataSize = {}\n", payload.len()));
    }
    header.push_str(&format!("TransformMatrix = {}\n", fmt_vec(&matrix)));
    header.push_str(&format!("Offset = {}\n", fmt_vec(&xyz.origin)));
    header.push_str(&format!("CenterOfRotation = {}\n", fmt_vec(&vec![0.0; n])));
    header.push_str(&format!("ElementSpacing = {}\n", fmt_vec(&xyz.spacing)));
    header.push_str(&format!("DimSize = {}\n", dims.join(" ")));
    if channels > 1 {
        header.push_str(&format!("ElementNumberOfChannels = {channels}\n"));
    }
    header.push_str(&format!("ElementType = {}\n", MetType::for_dtype(t.dtype())));
    header.push_str(&format!("ElementDataFile = {data_name}\n"));

    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    if is_mhd {
        let data_path = path.with_file_name(&data_name);
        std::fs::write(&data_path, &payload).map_err(|e| Error::io(&data_path, e))?;
    } else {
        f.write_all(&payload).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

impl MetaHeader {
    /// Compressed payload size recorded in the header, if any.
    pub fn compressed_size(&self) -> Option<usize> {
        self.compressed_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::NdArray;

    fn cube_u8() -> Tensor {
        Tensor::Uint8(NdArray::from_fn(vec![2, 2, 2], |i| i as u8 * 3).unwrap())
    }

    #[test]
    fn uncompressed_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mha");
        let g = ImageGeometry::new(
            vec![3.0, 2.0, 1.0],
            vec![10.0, -5.5, 0.25],
            vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0],
        )
        .unwrap();
        write_metaimage(&cube_u8(), &g, &p, false).unwrap();
        let (t, g2) = read_metaimage(&p).unwrap();
        assert_eq!(t, cube_u8());
        assert_eq!(g2, g);
    }

    #[test]
    fn spacing_is_reversed_into_axis_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.mha");
        let mut bytes = b"ObjectType = Image\nNDims = 3\nElementSpacing = 1 2 3\nDimSize = 3 2 1\nElementType = MET_UCHAR\nElementDataFile = LOCAL\n".to_vec();
        bytes.extend_from_slice(&[0, 1, 2, 3, 4, 5]);
        std::fs::write(&p, bytes).unwrap();
        let (t, g) = read_metaimage(&p).unwrap();
        assert_eq!(g.spacing, vec![3.0, 2.0, 1.0]);
        assert_eq!(t.shape(), &[1, 2, 3]);
        // x fastest in the file is the last C-order axis.
        assert_eq!(t.typed::<u8>().unwrap().get(&[0, 1, 0]).unwrap(), 3);
    }

    #[test]
    fn compressed_twin_decodes_identically() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor::Float32(NdArray::from_fn(vec![4, 5, 6], |i| (i % 7) as f32 * 0.5).unwrap());
        let g = ImageGeometry::identity(3);
        write_metaimage(&t, &g, &dir.path().join("u.mha"), false).unwrap();
        write_metaimage(&t, &g, &dir.path().join("c.mha"), true).unwrap();
        let (u, _) = read_metaimage(&dir.path().join("u.mha")).unwrap();
        let (c, _) = read_metaimage(&dir.path().join("c.mha")).unwrap();
        assert_eq!(u, c);
        assert_eq!(u, t);
    }

    #[test]
    fn compression_shrinks_constant_volume() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor::Float32(NdArray::full(vec![64, 64, 64], 7.0f32).unwrap());
        let g = ImageGeometry::identity(3);
        let (u, c) = (dir.path().join("u.mha"), dir.path().join("c.mha"));
        write_metaimage(&t, &g, &u, false).unwrap();
        write_metaimage(&t, &g, &c, true).unwrap();
        let size = |p: &Path| std::fs::metadata(p).unwrap().len();
        assert!(size(&c) < size(&u));
    }

    #[test]
    fn float_element_type_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.mha");
        let t = Tensor::Float32(NdArray::zeros(vec![2, 3]).unwrap());
        write_metaimage(&t, &ImageGeometry::identity(2), &p, false).unwrap();
        let text = std::fs::read(&p).unwrap();
        let text = String::from_utf8_lossy(&text);
        assert!(text.lines().any(|l| l == "ElementType = MET_FLOAT"));
        assert!(text.lines().any(|l| l == "DimSize = 3 2"));
    }

    #[test]
    fn mhd_with_raw_and_channels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.mhd");
        let t = Tensor::Float64(NdArray::from_fn(vec![3, 4, 5, 2], |i| i as f64 - 3.5).unwrap());
        let g = ImageGeometry::with_spacing(vec![0.5, 1.0, 2.0]).unwrap();
        write_metaimage(&t, &g, &p, true).unwrap();
        assert!(dir.path().join("img.zraw").exists());
        let (back, g2) = read_metaimage(&p).unwrap();
        assert_eq!(back, t);
        assert_eq!(g2, g);
    }

    #[test]
    fn unknown_type_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.mha");
        std::fs::write(&p, b"NDims = 2\nDimSize = 2 2\nElementType = MET_LONG_LONG\nElementDataFile = LOCAL\n").unwrap();
        assert!(matches!(read_metaimage(&p), Err(Error::UnsupportedFormat(_))));
        std::fs::write(&p, b"NDims = 2\nDimSize = 2 2\nElementType = MET_FLOAT\nElementDataFile = LOCAL\n\x00\x00").unwrap();
        assert!(matches!(read_metaimage(&p), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn short_widens_and_msb_swaps() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.mha");
        let mut bytes =
            b"NDims = 2\nDimSize = 2 1\nElementType = MET_SHORT\nBinaryDataByteOrderMSB = True\nElementDataFile = LOCAL\n"
                .to_vec();
        bytes.extend_from_slice(&(-2i16).to_be_bytes());
        bytes.extend_from_slice(&300i16.to_be_bytes());
        std::fs::write(&p, bytes).unwrap();
        let (t, _) = read_metaimage(&p).unwrap();
        assert_eq!(t.typed::<i32>().unwrap().data(), &[-2, 300]);
    }
}
