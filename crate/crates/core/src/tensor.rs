//! N-dimensional C-order arrays and rectangular region selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{decode_le, encode_le, DType, Element};

/// Maximum number of dimensions a tensor may have.
pub const MAX_DIMS: usize = 5;

/// Dense C-order (row-major) n-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct NdArray<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_DIMS {
        return Err(Error::Argument(format!(
            "tensor must have 1 to {MAX_DIMS} dimensions, got shape {shape:?}"
        )));
    }
    if shape.contains(&0) {
        return Err(Error::Argument(format!(
            "tensor extents must be positive, got shape {shape:?}"
        )));
    }
    Ok(shape.iter().product())
}

impl<T: Element> NdArray<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::Argument(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(NdArray { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Vec<usize>, value: T) -> Result<Self> {
        let n = check_shape(&shape)?;
        Ok(NdArray {
            shape,
            data: vec![value; n],
        })
    }

    /// Builds an array by evaluating `f` at every flat offset.
    pub fn from_fn(shape: Vec<usize>, f: impl FnMut(usize) -> T) -> Result<Self> {
        let n = check_shape(&shape)?;
        Ok(NdArray {
            shape,
            data: (0..n).map(f).collect(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn get(&self, index: &[usize]) -> Result<T> {
        Ok(self.data[linear_offset(&self.shape, index)?])
    }

    pub fn set(&mut self, index: &[usize], value: T) -> Result<()> {
        let off = linear_offset(&self.shape, index)?;
        self.data[off] = value;
        Ok(())
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        NdArray::new(shape, self.data)
    }

    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> NdArray<U> {
        NdArray {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Element>(&self) -> NdArray<U> {
        self.map(|v| U::from_f64_lossy(v.to_f64_lossy()))
    }

    pub fn to_f64(&self) -> NdArray<f64> {
        self.map(|v| v.to_f64_lossy())
    }

    /// Appends a trailing axis of extent one.
    pub fn with_channel_axis(mut self) -> Result<Self> {
        self.shape.push(1);
        check_shape(&self.shape)?;
        Ok(self)
    }

    /// Removes trailing axes of extent one until `ndim` axes remain.
    pub fn squeeze_to(mut self, ndim: usize) -> Result<Self> {
        while self.shape.len() > ndim && *self.shape.last().unwrap() == 1 {
            self.shape.pop();
        }
        if self.shape.len() != ndim {
            return Err(Error::Argument(format!(
                "cannot reduce shape {:?} to {ndim} dimensions",
                self.shape
            )));
        }
        Ok(self)
    }
}

/// C-order element strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Flat C-order offset of `index` within `shape`.
pub fn linear_offset(shape: &[usize], index: &[usize]) -> Result<usize> {
    if index.len() != shape.len() {
        return Err(Error::Range(format!(
            "index {index:?} has {} axes, shape {shape:?} has {}",
            index.len(),
            shape.len()
        )));
    }
    let mut off = 0usize;
    for (&i, &d) in index.iter().zip(shape) {
        if i >= d {
            return Err(Error::Range(format!("index {index:?} outside shape {shape:?}")));
        }
        off = off * d + i;
    }
    Ok(off)
}

/// How out-of-bounds elements of an extracted region are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    #[default]
    Zero,
    /// Reflection about the edge voxel (the edge is not repeated).
    Mirror,
}

/// Rectangular region over the leading (spatial) axes of a tensor.
///
/// Trailing axes not covered by the region are always taken whole.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub start: Vec<isize>,
    pub size: Vec<usize>,
}

impl Region {
    pub fn new(start: Vec<isize>, size: Vec<usize>) -> Result<Self> {
        if start.len() != size.len() {
            return Err(Error::Argument(format!(
                "region start {start:?} and size {size:?} differ in rank"
            )));
        }
        if size.contains(&0) {
            return Err(Error::Argument(format!("region size {size:?} has a zero extent")));
        }
        Ok(Region { start, size })
    }

    /// Region covering all of `shape`.
    pub fn full(shape: &[usize]) -> Self {
        Region {
            start: vec![0; shape.len()],
            size: shape.to_vec(),
        }
    }

    pub fn rank(&self) -> usize {
        self.size.len()
    }

    pub fn voxel_count(&self) -> usize {
        self.size.iter().product()
    }

    /// Whether the region lies entirely inside `shape` (leading axes).
    pub fn is_within(&self, shape: &[usize]) -> bool {
        self.rank() <= shape.len()
            && self
                .start
                .iter()
                .zip(&self.size)
                .zip(shape)
                .all(|((&s, &n), &d)| s >= 0 && (s as usize) + n <= d)
    }

    /// Intersection with `[0, shape)`; `None` when empty.
    pub fn clip(&self, shape: &[usize]) -> Option<Region> {
        let mut start = Vec::with_capacity(self.rank());
        let mut size = Vec::with_capacity(self.rank());
        for ((&s, &n), &d) in self.start.iter().zip(&self.size).zip(shape) {
            let lo = s.max(0);
            let hi = (s + n as isize).min(d as isize);
            if hi <= lo {
                return None;
            }
            start.push(lo);
            size.push((hi - lo) as usize);
        }
        Some(Region { start, size })
    }

    /// Region grown by `pad[i]` on both sides of every axis.
    pub fn padded(&self, pad: &[usize]) -> Region {
        Region {
            start: self
                .start
                .iter()
                .enumerate()
                .map(|(i, &s)| s - pad.get(i).copied().unwrap_or(0) as isize)
                .collect(),
            size: self
                .size
                .iter()
                .enumerate()
                .map(|(i, &n)| n + 2 * pad.get(i).copied().unwrap_or(0))
                .collect(),
        }
    }

    pub fn start_unsigned(&self) -> Result<Vec<usize>> {
        self.start
            .iter()
            .map(|&s| {
                usize::try_from(s).map_err(|_| Error::Range(format!("negative region start {:?}", self.start)))
            })
            .collect()
    }
}

/// Selects a subject and optionally a region of it (`None` means the full tensor).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexExpression {
    pub subject_index: usize,
    pub region: Option<Region>,
}

impl IndexExpression {
    pub fn full(subject_index: usize) -> Self {
        IndexExpression {
            subject_index,
            region: None,
        }
    }

    pub fn region(subject_index: usize, region: Region) -> Self {
        IndexExpression {
            subject_index,
            region: Some(region),
        }
    }
}

/// Maps every output coordinate of one axis to a source coordinate.
/// `None` marks a zero-filled position.
pub(crate) fn axis_map(start: isize, len: usize, extent: usize, mode: PadMode) -> Vec<Option<usize>> {
    (0..len as isize)
        .map(|j| {
            let c = start + j;
            if c >= 0 && (c as usize) < extent {
                return Some(c as usize);
            }
            match mode {
                PadMode::Zero => None,
                PadMode::Mirror => {
                    if extent == 1 {
                        return Some(0);
                    }
                    let period = 2 * (extent as isize - 1);
                    let m = c.rem_euclid(period);
                    Some(if m < extent as isize { m } else { period - m } as usize)
                }
            }
        })
        .collect()
}

/// Gathers `src` through per-axis coordinate maps over its leading axes.
pub(crate) fn gather<T: Element>(src: &NdArray<T>, maps: &[Vec<Option<usize>>]) -> NdArray<T> {
    let k = maps.len();
    debug_assert!(k >= 1 && k <= src.ndim());
    let inner: usize = src.shape[k..].iter().product();
    let src_strides = strides(&src.shape);
    let mut out_shape: Vec<usize> = maps.iter().map(Vec::len).collect();
    out_shape.extend_from_slice(&src.shape[k..]);
    let n_out: usize = out_shape.iter().product();
    let mut out = vec![T::zero(); n_out];

    // Runs along the last mapped axis: (output position, source position, length).
    let last = &maps[k - 1];
    let mut runs: Vec<(usize, Option<usize>, usize)> = Vec::new();
    for (j, m) in last.iter().enumerate() {
        if let Some((o, s, len)) = runs.last_mut() {
            let extends = match (*s, *m) {
                (Some(a), Some(b)) => a + *len == b,
                (None, None) => true,
                _ => false,
            };
            if extends && *o + *len == j {
                *len += 1;
                continue;
            }
        }
        runs.push((j, *m, 1));
    }

    let row_len = last.len() * inner;
    let outer_shape: Vec<usize> = maps[..k - 1].iter().map(Vec::len).collect();
    let n_rows: usize = outer_shape.iter().product();
    let mut idx = vec![0usize; k - 1];
    for row in 0..n_rows {
        let mut base = Some(0usize);
        for (a, &i) in idx.iter().enumerate() {
            base = match (base, maps[a][i]) {
                (Some(b), Some(s)) => Some(b + s * src_strides[a]),
                _ => None,
            };
        }
        if let Some(base) = base {
            let dst = &mut out[row * row_len..(row + 1) * row_len];
            for &(o, s, len) in &runs {
                if let Some(s) = s {
                    let from = base + s * src_strides[k - 1];
                    dst[o * inner..(o + len) * inner].copy_from_slice(&src.data[from..from + len * inner]);
                }
            }
        }
        for a in (0..k - 1).rev() {
            idx[a] += 1;
            if idx[a] < outer_shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    NdArray {
        shape: out_shape,
        data: out,
    }
}

/// Copies the region `start`/`size` out of `t`, filling positions outside
/// the tensor according to `pad`. Axes beyond `size.len()` are copied whole.
pub fn extract_subtensor<T: Element>(
    t: &NdArray<T>,
    start: &[isize],
    size: &[usize],
    pad: PadMode,
) -> Result<NdArray<T>> {
    let region = Region::new(start.to_vec(), size.to_vec())?;
    if region.rank() > t.ndim() {
        return Err(Error::Argument(format!(
            "region of rank {} exceeds tensor rank {}",
            region.rank(),
            t.ndim()
        )));
    }
    if region.rank() == 0 {
        return Ok(t.clone());
    }
    let maps: Vec<_> = (0..region.rank())
        .map(|a| axis_map(start[a], size[a], t.shape[a], pad))
        .collect();
    Ok(gather(t, &maps))
}

/// Writes `src` into `dst` with its leading corner at `start`.
///
/// `src` must have the same rank as `dst`, and trailing axes beyond
/// `start.len()` must match exactly.
pub fn write_region<T: Element>(dst: &mut NdArray<T>, start: &[usize], src: &NdArray<T>) -> Result<()> {
    let k = start.len();
    if src.ndim() != dst.ndim() || k == 0 || k > dst.ndim() || src.shape[k..] != dst.shape[k..] {
        return Err(Error::Argument(format!(
            "cannot write {:?} at {start:?} into {:?}",
            src.shape, dst.shape
        )));
    }
    for a in 0..k {
        if start[a] + src.shape[a] > dst.shape[a] {
            return Err(Error::Range(format!(
                "region at {start:?} of size {:?} exceeds {:?}",
                src.shape, dst.shape
            )));
        }
    }
    let inner: usize = src.shape[k - 1..].iter().product();
    let dst_strides = strides(&dst.shape);
    let outer: Vec<usize> = src.shape[..k - 1].to_vec();
    let n_rows: usize = outer.iter().product();
    let mut idx = vec![0usize; k - 1];
    for row in 0..n_rows {
        let mut base = start[k - 1] * dst_strides[k - 1];
        for a in 0..k - 1 {
            base += (start[a] + idx[a]) * dst_strides[a];
        }
        dst.data[base..base + inner].copy_from_slice(&src.data[row * inner..(row + 1) * inner]);
        for a in (0..k - 1).rev() {
            idx[a] += 1;
            if idx[a] < outer[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(())
}

/// Concatenates arrays along their last axis. Leading axes must agree.
pub fn concat_last_axis<T: Element>(parts: &[NdArray<T>]) -> Result<NdArray<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Argument("nothing to concatenate".into()))?;
    let lead = &first.shape[..first.ndim() - 1];
    for p in parts {
        if p.ndim() != first.ndim() || &p.shape[..p.ndim() - 1] != lead {
            return Err(Error::Argument(format!(
                "cannot concatenate shapes {:?} and {:?}",
                first.shape, p.shape
            )));
        }
    }
    let widths: Vec<usize> = parts.iter().map(|p| *p.shape.last().unwrap()).collect();
    let total: usize = widths.iter().sum();
    let n_rows: usize = lead.iter().product();
    let mut data = Vec::with_capacity(n_rows * total);
    for r in 0..n_rows {
        for (p, &w) in parts.iter().zip(&widths) {
            data.extend_from_slice(&p.data[r * w..(r + 1) * w]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    NdArray::new(shape, data)
}

/// Picks `channels` (in that order) from the last axis.
pub fn select_last_axis<T: Element>(t: &NdArray<T>, channels: &[usize]) -> Result<NdArray<T>> {
    let c = *t.shape.last().unwrap();
    if channels.is_empty() || channels.iter().any(|&i| i >= c) {
        return Err(Error::Argument(format!(
            "channel selection {channels:?} invalid for {c} channels"
        )));
    }
    let n_rows = t.len() / c;
    let mut data = Vec::with_capacity(n_rows * channels.len());
    for r in 0..n_rows {
        let row = &t.data[r * c..(r + 1) * c];
        data.extend(channels.iter().map(|&i| row[i]));
    }
    let mut shape = t.shape.clone();
    *shape.last_mut().unwrap() = channels.len();
    NdArray::new(shape, data)
}

/// Dynamically typed tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Uint8(NdArray<u8>),
    Int32(NdArray<i32>),
    Float32(NdArray<f32>),
    Float64(NdArray<f64>),
}

/// Applies `$body` to the typed array inside a [`Tensor`].
#[macro_export]
#[doc(hidden)]
macro_rules! with_tensor {
    ($t:expr, $a:ident => $body:expr) => {
        match $t {
            $crate::Tensor::Uint8($a) => $body,
            $crate::Tensor::Int32($a) => $body,
            $crate::Tensor::Float32($a) => $body,
            $crate::Tensor::Float64($a) => $body,
        }
    };
}

/// Like [`with_tensor!`] but rewraps an `NdArray` result of the same type.
#[macro_export]
#[doc(hidden)]
macro_rules! map_tensor {
    ($t:expr, $a:ident => $body:expr) => {
        match $t {
            $crate::Tensor::Uint8($a) => $crate::Tensor::Uint8($body),
            $crate::Tensor::Int32($a) => $crate::Tensor::Int32($body),
            $crate::Tensor::Float32($a) => $crate::Tensor::Float32($body),
            $crate::Tensor::Float64($a) => $crate::Tensor::Float64($body),
        }
    };
}

/// Conversion between typed arrays and [`Tensor`].
pub trait TensorElement: Element {
    fn wrap(a: NdArray<Self>) -> Tensor;
    fn unwrap_ref(t: &Tensor) -> Option<&NdArray<Self>>;
    fn unwrap(t: Tensor) -> Option<NdArray<Self>>;
}

macro_rules! impl_tensor_element {
    ($t:ty, $variant:ident) => {
        impl TensorElement for $t {
            fn wrap(a: NdArray<Self>) -> Tensor {
                Tensor::$variant(a)
            }
            fn unwrap_ref(t: &Tensor) -> Option<&NdArray<Self>> {
                match t {
                    Tensor::$variant(a) => Some(a),
                    _ => None,
                }
            }
            fn unwrap(t: Tensor) -> Option<NdArray<Self>> {
                match t {
                    Tensor::$variant(a) => Some(a),
                    _ => None,
                }
            }
        }

        impl From<NdArray<$t>> for Tensor {
            fn from(a: NdArray<$t>) -> Tensor {
                Tensor::$variant(a)
            }
        }
    };
}

impl_tensor_element!(u8, Uint8);
impl_tensor_element!(i32, Int32);
impl_tensor_element!(f32, Float32);
impl_tensor_element!(f64, Float64);

impl Tensor {
    pub fn dtype(&self) -> DType {
        match self {
            Tensor::Uint8(_) => DType::Uint8,
            Tensor::Int32(_) => DType::Int32,
            Tensor::Float32(_) => DType::Float32,
            Tensor::Float64(_) => DType::Float64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        with_tensor!(self, a => a.shape())
    }

    pub fn ndim(&self) -> usize {
        self.shape().len()
    }

    pub fn len(&self) -> usize {
        with_tensor!(self, a => a.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn typed<T: TensorElement>(&self) -> Option<&NdArray<T>> {
        T::unwrap_ref(self)
    }

    pub fn into_typed<T: TensorElement>(self) -> Option<NdArray<T>> {
        T::unwrap(self)
    }

    pub fn to_f64(&self) -> NdArray<f64> {
        with_tensor!(self, a => a.to_f64())
    }

    pub fn cast(&self, dtype: DType) -> Tensor {
        if dtype == self.dtype() {
            return self.clone();
        }
        with_tensor!(self, a => match dtype {
            DType::Uint8 => Tensor::Uint8(a.cast()),
            DType::Int32 => Tensor::Int32(a.cast()),
            DType::Float32 => Tensor::Float32(a.cast()),
            DType::Float64 => Tensor::Float64(a.cast()),
        })
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Tensor> {
        Ok(map_tensor!(self, a => a.reshape(shape)?))
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        with_tensor!(self, a => encode_le(a.data()))
    }

    pub fn from_le_bytes(dtype: DType, shape: Vec<usize>, bytes: &[u8]) -> Result<Tensor> {
        let n = check_shape(&shape)?;
        if bytes.len() != n * dtype.size() {
            return Err(Error::CorruptFile(format!(
                "expected {} bytes for {dtype} {shape:?}, got {}",
                n * dtype.size(),
                bytes.len()
            )));
        }
        Ok(match dtype {
            DType::Uint8 => Tensor::Uint8(NdArray::new(shape, bytes.to_vec())?),
            DType::Int32 => Tensor::Int32(NdArray::new(shape, decode_le(bytes))?),
            DType::Float32 => Tensor::Float32(NdArray::new(shape, decode_le(bytes))?),
            DType::Float64 => Tensor::Float64(NdArray::new(shape, decode_le(bytes))?),
        })
    }

    pub fn extract(&self, start: &[isize], size: &[usize], pad: PadMode) -> Result<Tensor> {
        Ok(map_tensor!(self, a => extract_subtensor(a, start, size, pad)?))
    }

    pub fn with_channel_axis(self) -> Result<Tensor> {
        Ok(map_tensor!(self, a => a.with_channel_axis()?))
    }

    pub(crate) fn gather(&self, maps: &[Vec<Option<usize>>]) -> Tensor {
        map_tensor!(self, a => gather(a, maps))
    }

    /// Concatenates along the last axis after casting every part to `dtype`.
    pub fn concat_last_axis(parts: &[Tensor], dtype: DType) -> Result<Tensor> {
        fn typed<T: TensorElement>(parts: &[Tensor], dtype: DType) -> Result<Tensor> {
            let arrays: Vec<NdArray<T>> = parts.iter().map(|p| p.cast(dtype).into_typed::<T>().unwrap()).collect();
            Ok(T::wrap(concat_last_axis(&arrays)?))
        }
        match dtype {
            DType::Uint8 => typed::<u8>(parts, dtype),
            DType::Int32 => typed::<i32>(parts, dtype),
            DType::Float32 => typed::<f32>(parts, dtype),
            DType::Float64 => typed::<f64>(parts, dtype),
        }
    }
}
