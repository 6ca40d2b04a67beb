//! Intensity metrics for reconstruction and regression. Geometry is ignored.

use crate::error::{Error, Result};
use crate::metrics::{check_same_shape, ratio, undefined};
use crate::scalar::Element;
use crate::tensor::{strides, NdArray};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub nrmse: f64,
    pub r2: f64,
}

fn values<T: Element>(a: &NdArray<T>) -> Vec<f64> {
    a.data().iter().map(|v| v.to_f64_lossy()).collect()
}

fn pair<T: Element>(reference: &NdArray<T>, prediction: &NdArray<T>) -> Result<(Vec<f64>, Vec<f64>)> {
    check_same_shape(reference.shape(), prediction.shape())?;
    if reference.is_empty() {
        return Err(Error::Argument("metrics need at least one element".into()));
    }
    Ok((values(reference), values(prediction)))
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// NRMSE normalizes by the reference range; R2 uses the reference mean.
pub fn error_metrics<T: Element>(reference: &NdArray<T>, prediction: &NdArray<T>) -> Result<ErrorMetrics> {
    let (r, p) = pair(reference, prediction)?;
    let n = r.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (a, b) in r.iter().zip(&p) {
        abs += (a - b).abs();
        sq += (a - b) * (a - b);
    }
    let mse = sq / n;
    let rmse = mse.sqrt();
    let (lo, hi) = min_max(&r);
    let mean = r.iter().sum::<f64>() / n;
    let total: f64 = r.iter().map(|a| (a - mean) * (a - mean)).sum();
    let r2 = if r.len() < 2 { undefined("R2", "fewer than 2 elements") } else { 1.0 - ratio("R2", sq, total) };
    Ok(ErrorMetrics {
        mae: abs / n,
        mse,
        rmse,
        nrmse: ratio("NRMSE", rmse, hi - lo),
        r2,
    })
}

fn data_range(reference: &[f64], given: Option<f64>) -> Result<f64> {
    let l = given.unwrap_or_else(|| {
        let (lo, hi) = min_max(reference);
        hi - lo
    });
    if !(l > 0.0) {
        return Err(Error::Argument(format!("data range must be > 0, got {l}")));
    }
    Ok(l)
}

/// Peak signal-to-noise ratio in dB; `+inf` for identical images. The data
/// range defaults to the reference range.
pub fn psnr<T: Element>(reference: &NdArray<T>, prediction: &NdArray<T>, range: Option<f64>) -> Result<f64> {
    let (r, p) = pair(reference, prediction)?;
    let l = data_range(&r, range)?;
    let mse = r.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / r.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (l / mse.sqrt()).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub data_range: Option<f64>,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            data_range: None,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

pub const SSIM_WINDOW: usize = 7;

/// Normalized 1-D Gaussian truncated to the window.
pub fn gaussian_window(sigma: f64) -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * sigma * sigma)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Valid-mode correlation of `data` with `kernel` along `axis`.
fn filter_axis(data: &[f64], shape: &[usize], axis: usize, kernel: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut out_shape = shape.to_vec();
    out_shape[axis] = shape[axis] + 1 - kernel.len();
    let st = strides(shape);
    let ost = strides(&out_shape);
    let n: usize = out_shape.iter().product();
    let mut out = vec![0.0; n];
    for (o, v) in out.iter_mut().enumerate() {
        // Input offset of the window start: same coordinates, same strides.
        let mut base = 0;
        let mut rem = o;
        for a in 0..shape.len() {
            base += (rem / ost[a]) * st[a];
            rem %= ost[a];
        }
        *v = kernel.iter().enumerate().map(|(k, w)| w * data[base + k * st[axis]]).sum();
    }
    (out, out_shape)
}

fn gaussian_filter(data: Vec<f64>, shape: &[usize], kernel: &[f64]) -> Vec<f64> {
    let mut cur = data;
    let mut cur_shape = shape.to_vec();
    for a in 0..shape.len() {
        let (d, s) = filter_axis(&cur, &cur_shape, a, kernel);
        cur = d;
        cur_shape = s;
    }
    cur
}

/// Mean structural similarity over all valid window positions, with a
/// 7-wide truncated Gaussian window on every axis.
pub fn ssim<T: Element>(reference: &NdArray<T>, prediction: &NdArray<T>, params: &SsimParams) -> Result<f64> {
    let (r, p) = pair(reference, prediction)?;
    let shape = reference.shape();
    if shape.iter().any(|&e| e < SSIM_WINDOW) {
        return Err(Error::Argument(format!(
            "SSIM needs every extent >= {SSIM_WINDOW}, got {shape:?}; evaluate 2-D slices instead"
        )));
    }
    let l = data_range(&r, params.data_range)?;
    let c1 = (params.k1 * l) * (params.k1 * l);
    let c2 = (params.k2 * l) * (params.k2 * l);
    let kernel = gaussian_window(params.sigma);
    let filt = |v: Vec<f64>| gaussian_filter(v, shape, &kernel);
    let xx = r.iter().map(|a| a * a).collect();
    let yy = p.iter().map(|a| a * a).collect();
    let xy = r.iter().zip(&p).map(|(a, b)| a * b).collect();
    let mx = filt(r);
    let my = filt(p);
    let sxx = filt(xx);
    let syy = filt(yy);
    let sxy = filt(xy);
    let n = mx.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cxy = sxy[i] - ux * uy;
        let num = (2.0 * (ux * uy) + c1) * (2.0 * cxy + c2);
        let den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
        total += num / den;
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_errors() {
        let r = NdArray::new(vec![2], vec![0.0f64, 2.0]).unwrap();
        let p = NdArray::new(vec![2], vec![1.0f64, 1.0]).unwrap();
        let m = error_metrics(&r, &p).unwrap();
        assert_eq!((m.mae, m.mse, m.rmse, m.nrmse, m.r2), (1.0, 1.0, 1.0, 0.5, 0.0));
        let c = NdArray::new(vec![2], vec![1.0f64, 1.0]).unwrap();
        assert!(error_metrics(&c, &p).unwrap().r2.is_nan());
    }

    #[test]
    fn psnr_of_known_rmse() {
        let r = NdArray::new(vec![4], vec![0.0f64, 1.0, 0.0, 1.0]).unwrap();
        let p = NdArray::new(vec![4], vec![0.1f64, 0.9, 0.1, 0.9]).unwrap();
        assert!((psnr(&r, &p, Some(1.0)).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&r, &r, None).unwrap(), f64::INFINITY);
        assert!(psnr(&r, &p, Some(0.0)).is_err());
    }

    #[test]
    fn ssim_identity_and_small_inputs() {
        let a = NdArray::from_fn(vec![9, 8], |i| ((i * 7919) % 13) as f32).unwrap();
        assert_eq!(ssim(&a, &a, &SsimParams::default()).unwrap(), 1.0);
        let small = NdArray::from_fn(vec![6, 9], |i| i as f32).unwrap();
        assert!(ssim(&small, &small, &SsimParams::default()).is_err());
    }
}
