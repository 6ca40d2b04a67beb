//! Spacing-aware surface distance metrics.
//!
//! Surfaces are the foreground voxels with at least one face neighbour that
//! is background or outside the image. Distances are measured between voxel
//! centres in physical units (index times spacing per axis).

use crate::error::{Error, Result};
use crate::metrics::{check_same_shape, undefined};
use crate::scalar::Element;
use crate::tensor::{strides, NdArray};

/// Border voxels of a mask, as ascending flat indices into `shape`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurfaceSet {
    pub shape: Vec<usize>,
    pub indices: Vec<usize>,
}

impl SurfaceSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn points(&self) -> Vec<Vec<usize>> {
        self.indices.iter().map(|&i| unravel(i, &self.shape)).collect()
    }

    pub fn physical(&self, spacing: &[f64]) -> Vec<Vec<f64>> {
        self.indices
            .iter()
            .map(|&i| unravel(i, &self.shape).iter().zip(spacing).map(|(&x, s)| x as f64 * s).collect())
            .collect()
    }

    pub fn mask(&self) -> NdArray<u8> {
        let mut m = NdArray::<u8>::zeros(self.shape.clone()).expect("valid shape");
        for &i in &self.indices {
            m.data_mut()[i] = 1;
        }
        m
    }
}

fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        idx[a] = flat % shape[a];
        flat /= shape[a];
    }
    idx
}

/// 6-connected (face) border of the non-zero voxels; the image edge counts
/// as background.
pub fn extract_surface<T: Element>(mask: &NdArray<T>) -> SurfaceSet {
    let shape = mask.shape().to_vec();
    let st = strides(&shape);
    let data = mask.data();
    let zero = T::zero();
    let mut indices = Vec::new();
    for (i, &v) in data.iter().enumerate() {
        if v == zero {
            continue;
        }
        let border = (0..shape.len()).any(|a| {
            let c = (i / st[a]) % shape[a];
            c == 0 || c + 1 == shape[a] || data[i - st[a]] == zero || data[i + st[a]] == zero
        });
        if border {
            indices.push(i);
        }
    }
    SurfaceSet { shape, indices }
}

const NO_SITE: usize = usize::MAX;

/// Lower envelope of the parabolas `f[q] + w (x - q)^2` along one line.
struct Envelope {
    v: Vec<usize>,
    z: Vec<f64>,
    f: Vec<f64>,
    site: Vec<usize>,
}

impl Envelope {
    fn new(m: usize) -> Self {
        Envelope {
            v: vec![0; m],
            z: vec![0.0; m + 1],
            f: vec![0.0; m],
            site: vec![NO_SITE; m],
        }
    }

    /// Replaces `f`/`site` by the envelope minimum and its site.
    fn run(&mut self, w: f64, d: &mut [f64], feat: &mut [usize], base: usize, stride: usize) {
        let m = self.f.len();
        for q in 0..m {
            self.f[q] = d[base + q * stride];
            self.site[q] = feat[base + q * stride];
        }
        let mut k = 0usize;
        for q in 0..m {
            if self.site[q] == NO_SITE {
                continue;
            }
            let fq = self.f[q] + w * (q * q) as f64;
            let mut s = f64::NEG_INFINITY;
            while k > 0 {
                let p = self.v[k - 1];
                s = (fq - (self.f[p] + w * (p * p) as f64)) / (2.0 * w * (q - p) as f64);
                if s <= self.z[k - 1] {
                    k -= 1;
                    s = f64::NEG_INFINITY;
                } else {
                    break;
                }
            }
            self.v[k] = q;
            self.z[k] = s;
            self.z[k + 1] = f64::INFINITY;
            k += 1;
        }
        if k == 0 {
            return;
        }
        let mut j = 0;
        for x in 0..m {
            while self.z[j + 1] < x as f64 {
                j += 1;
            }
            let p = self.v[j];
            let dx = x.abs_diff(p) as f64;
            d[base + x * stride] = self.f[p] + w * dx * dx;
            feat[base + x * stride] = self.site[p];
        }
    }
}

/// For every voxel, the flat index of a nearest site under the weighted
/// Euclidean metric. Separable lower-envelope transform, one pass per axis.
fn nearest_sites(shape: &[usize], sites: &[usize], spacing: &[f64]) -> Vec<usize> {
    let n: usize = shape.iter().product();
    let st = strides(shape);
    let mut d = vec![f64::INFINITY; n];
    let mut feat = vec![NO_SITE; n];
    for &s in sites {
        d[s] = 0.0;
        feat[s] = s;
    }
    for a in 0..shape.len() {
        let m = shape[a];
        let w = spacing[a] * spacing[a];
        let mut env = Envelope::new(m);
        let block = m * st[a];
        for outer in 0..n / block {
            for inner in 0..st[a] {
                env.run(w, &mut d, &mut feat, outer * block + inner, st[a]);
            }
        }
    }
    feat
}

fn physical_distance(a: &[usize], b: &[usize], spacing: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(spacing)
        .map(|((&x, &y), s)| {
            let d = x.abs_diff(y) as f64 * s;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn check_spacing(shape: &[usize], spacing: &[f64]) -> Result<()> {
    if spacing.len() != shape.len() || spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::Argument(format!("spacing {spacing:?} invalid for shape {shape:?}")));
    }
    Ok(())
}

/// Exact Euclidean distance (mm) from every voxel to the nearest surface
/// voxel of `mask`. Zero on the surface.
pub fn distance_transform<T: Element>(mask: &NdArray<T>, spacing: &[f64]) -> Result<NdArray<f64>> {
    check_spacing(mask.shape(), spacing)?;
    let surface = extract_surface(mask);
    if surface.is_empty() {
        return Err(Error::Domain("distance transform of an empty mask".into()));
    }
    let shape = mask.shape();
    let feat = nearest_sites(shape, &surface.indices, spacing);
    let data = (0..feat.len())
        .map(|i| physical_distance(&unravel(i, shape), &unravel(feat[i], shape), spacing))
        .collect();
    NdArray::new(shape.to_vec(), data)
}

/// Distances from each surface point to the surface of `to`.
fn directed(from: &SurfaceSet, to: &SurfaceSet, spacing: &[f64]) -> Vec<f64> {
    if from.is_empty() || to.is_empty() {
        return Vec::new();
    }
    let feat = nearest_sites(&to.shape, &to.indices, spacing);
    from.indices
        .iter()
        .map(|&i| physical_distance(&unravel(i, &from.shape), &unravel(feat[i], &from.shape), spacing))
        .collect()
}

/// Inclusive linear-interpolation percentile, `0 <= p <= 100`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

fn check_percentile(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::Argument(format!("percentile must be in (0, 100], got {p}")));
    }
    Ok(())
}

/// Directed surface distances of a pair, computed once and shared by all
/// distance metrics of one label.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceDistances {
    pub ref_to_pred: Vec<f64>,
    pub pred_to_ref: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceMetrics {
    pub overlap_ref: f64,
    pub overlap_pred: f64,
    pub surface_dice: f64,
}

impl SurfaceDistances {
    /// Both directions are empty when either mask is.
    pub fn compute<T: Element>(reference: &NdArray<T>, prediction: &NdArray<T>, spacing: &[f64]) -> Result<Self> {
        check_same_shape(reference.shape(), prediction.shape())?;
        check_spacing(reference.shape(), spacing)?;
        let sr = extract_surface(reference);
        let sp = extract_surface(prediction);
        Ok(SurfaceDistances {
            ref_to_pred: directed(&sr, &sp, spacing),
            pred_to_ref: directed(&sp, &sr, spacing),
        })
    }

    fn defined(&self, metric: &str) -> bool {
        if self.ref_to_pred.is_empty() || self.pred_to_ref.is_empty() {
            undefined(metric, "empty mask");
            false
        } else {
            true
        }
    }

    /// Percentile of each direction, then the larger of the two.
    pub fn hausdorff(&self, p: f64) -> Result<f64> {
        check_percentile(p)?;
        if !self.defined("HDRFDST") {
            return Ok(f64::NAN);
        }
        Ok(percentile(&self.ref_to_pred, p).max(percentile(&self.pred_to_ref, p)))
    }

    /// Average symmetric surface distance.
    pub fn average(&self) -> f64 {
        if !self.defined("AVGDIST") {
            return f64::NAN;
        }
        let sum: f64 = self.ref_to_pred.iter().chain(&self.pred_to_ref).sum();
        sum / (self.ref_to_pred.len() + self.pred_to_ref.len()) as f64
    }

    pub fn surface_metrics(&self, tolerance_mm: f64) -> Result<SurfaceMetrics> {
        if !(tolerance_mm >= 0.0) {
            return Err(Error::Argument(format!("tolerance must be >= 0, got {tolerance_mm}")));
        }
        if !self.defined("SURFDICE") {
            let nan = f64::NAN;
            return Ok(SurfaceMetrics {
                overlap_ref: nan,
                overlap_pred: nan,
                surface_dice: nan,
            });
        }
        let within = |d: &[f64]| d.iter().filter(|&&x| x <= tolerance_mm).count() as f64;
        let (wr, wp) = (within(&self.ref_to_pred), within(&self.pred_to_ref));
        let (nr, np) = (self.ref_to_pred.len() as f64, self.pred_to_ref.len() as f64);
        Ok(SurfaceMetrics {
            overlap_ref: wr / nr,
            overlap_pred: wp / np,
            surface_dice: (wr + wp) / (nr + np),
        })
    }
}

pub fn hausdorff<T: Element>(reference: &NdArray<T>, prediction: &NdArray<T>, spacing: &[f64], p: f64) -> Result<f64> {
    check_percentile(p)?;
    SurfaceDistances::compute(reference, prediction, spacing)?.hausdorff(p)
}

pub fn average_distance<T: Element>(reference: &NdArray<T>, prediction: &NdArray<T>, spacing: &[f64]) -> Result<f64> {
    Ok(SurfaceDistances::compute(reference, prediction, spacing)?.average())
}

pub fn surface_metrics<T: Element>(
    reference: &NdArray<T>,
    prediction: &NdArray<T>,
    spacing: &[f64],
    tolerance_mm: f64,
) -> Result<SurfaceMetrics> {
    SurfaceDistances::compute(reference, prediction, spacing)?.surface_metrics(tolerance_mm)
}

/// Mean and biased covariance of the physical foreground coordinates.
fn moments<T: Element>(mask: &NdArray<T>, spacing: &[f64]) -> (usize, Vec<f64>, Vec<f64>) {
    let shape = mask.shape();
    let d = shape.len();
    let zero = T::zero();
    let points: Vec<Vec<f64>> = mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != zero)
        .map(|(i, _)| unravel(i, shape).iter().zip(spacing).map(|(&x, s)| x as f64 * s).collect())
        .collect();
    let n = points.len();
    let mut mean = vec![0.0; d];
    for p in &points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    for p in &points {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (p[i] - mean[i]) * (p[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= n as f64);
    (n, mean, cov)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting; `None`
/// when `a` is numerically singular.
fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let d = b.len();
    let scale = (0..d).map(|i| a[i * d + i].abs()).fold(0.0, f64::max);
    let eps = scale * 1e-10;
    for col in 0..d {
        let piv = (col..d).max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs()))?;
        if a[piv * d + col].abs() <= eps {
            return None;
        }
        for k in 0..d {
            a.swap(col * d + k, piv * d + k);
        }
        b.swap(col, piv);
        for row in col + 1..d {
            let f = a[row * d + col] / a[col * d + col];
            for k in col..d {
                a[row * d + k] -= f * a[col * d + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; d];
    for row in (0..d).rev() {
        let s: f64 = (row + 1..d).map(|k| a[row * d + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * d + row];
    }
    Some(x)
}

/// Mahalanobis distance between the foreground centroids under the pooled
/// biased covariance of both masks.
pub fn mahalanobis<T: Element>(reference: &NdArray<T>, prediction: &NdArray<T>, spacing: &[f64]) -> Result<f64> {
    check_same_shape(reference.shape(), prediction.shape())?;
    check_spacing(reference.shape(), spacing)?;
    let (nr, mr, cr) = moments(reference, spacing);
    let (np, mp, cp) = moments(prediction, spacing);
    if nr == 0 || np == 0 {
        return Ok(undefined("MAHLNBS", "empty mask"));
    }
    let total = (nr + np) as f64;
    let pooled: Vec<f64> = cr.iter().zip(&cp).map(|(a, b)| (nr as f64 * a + np as f64 * b) / total).collect();
    let diff: Vec<f64> = mr.iter().zip(&mp).map(|(a, b)| a - b).collect();
    match solve(pooled, diff.clone()) {
        Some(x) => {
            let q: f64 = x.iter().zip(&diff).map(|(a, b)| a * b).sum();
            Ok(q.max(0.0).sqrt())
        }
        None => Ok(undefined("MAHLNBS", "singular pooled covariance")),
    }
}
