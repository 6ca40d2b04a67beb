//! Positioned reads of C-order regions from raw payloads on disk.

use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::DType;
use crate::tensor::{strides, Region, Tensor};

#[cfg(unix)]
pub(crate) fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
pub(crate) fn read_exact_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        match file.seek_read(buf, offset) {
            Ok(0) => return Err(std::io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => {
                buf = &mut buf[n..];
                offset += n as u64;
            }
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Contiguous byte runs (file offset relative to the payload start, length)
/// that together make up `region` of an array with `shape`, in C-order.
///
/// Trailing axes that the region covers completely are merged into a single
/// run, so an axis-0 slice is one run and a 3-D patch of a 4-D array with a
/// whole channel axis is `size[0] * size[1]` runs.
pub(crate) fn region_runs(shape: &[usize], region: &Region, elem: usize) -> Vec<(u64, usize)> {
    let k = region.rank();
    let st = strides(shape);
    let mut j = k;
    while j > 0 && region.start[j - 1] == 0 && region.size[j - 1] == shape[j - 1] {
        j -= 1;
    }
    if j == 0 {
        let n: usize = shape.iter().product();
        return vec![(0, n * elem)];
    }
    let run_axis = j - 1;
    let run_elems = region.size[run_axis] * st[run_axis];
    let outer: Vec<usize> = region.size[..run_axis].to_vec();
    let n_runs: usize = outer.iter().product();
    let mut runs = Vec::with_capacity(n_runs);
    let mut idx = vec![0usize; run_axis];
    for _ in 0..n_runs {
        let mut off = region.start[run_axis] as usize * st[run_axis];
        for a in 0..run_axis {
            off += (region.start[a] as usize + idx[a]) * st[a];
        }
        runs.push(((off * elem) as u64, run_elems * elem));
        for a in (0..run_axis).rev() {
            idx[a] += 1;
            if idx[a] < outer[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    runs
}

/// Reads `region` of a C-order little-endian array stored at `base` in `file`.
pub(crate) fn read_region_at(
    file: &File,
    path: &Path,
    base: u64,
    dtype: DType,
    shape: &[usize],
    region: &Region,
) -> Result<Tensor> {
    if region.rank() > shape.len() || !region.is_within(shape) {
        return Err(Error::Range(format!(
            "region start {:?} size {:?} outside shape {shape:?}",
            region.start, region.size
        )));
    }
    let elem = dtype.size();
    let mut out_shape = region.size.clone();
    out_shape.extend_from_slice(&shape[region.rank()..]);
    let total: usize = out_shape.iter().product::<usize>() * elem;
    let mut buf = vec![0u8; total];
    let mut pos = 0usize;
    for (off, len) in region_runs(shape, region, elem) {
        read_exact_at(file, &mut buf[pos..pos + len], base + off).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => {
                Error::CorruptFile(format!("{}: payload truncated", path.display()))
            }
            _ => Error::io(path, e),
        })?;
        pos += len;
    }
    Tensor::from_le_bytes(dtype, out_shape, &buf)
}
