//! Intensity transforms shared by dataset creation and sample access.
//!
//! All statistics are accumulated in `f64`; outputs are `float32`.

use crate::tensor::{NdArray, Tensor};

/// Per-channel z-score over the whole tensor. The last axis is the channel
/// axis. Channels with zero variance are only centred.
pub fn z_normalize(t: &Tensor) -> Tensor {
    let a = t.to_f64();
    let c = *a.shape().last().unwrap();
    let data = a.data();
    let n = (data.len() / c) as f64;
    let mut mean = vec![0.0f64; c];
    for row in data.chunks_exact(c) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0f64; c];
    for row in data.chunks_exact(c) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
    let out: Vec<f32> = data
        .chunks_exact(c)
        .flat_map(|row| {
            row.iter().enumerate().map(|(i, v)| {
                let centred = v - mean[i];
                (if std[i] > 0.0 { centred / std[i] } else { centred }) as f32
            })
        })
        .collect();
    Tensor::Float32(NdArray::new(a.shape().to_vec(), out).expect("same shape"))
}

/// Linear min-max rescaling of the whole tensor to `[out_min, out_max]`.
/// A constant tensor maps to `out_min`.
pub fn rescale_intensity(t: &Tensor, out_min: f64, out_max: f64) -> Tensor {
    let a = t.to_f64();
    let (lo, hi) = a
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let out = a.map(|v| {
        if span > 0.0 {
            (out_min + (v - lo) / span * (out_max - out_min)) as f32
        } else {
            out_min as f32
        }
    });
    Tensor::Float32(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_normalize_per_channel() {
        let t = Tensor::Float64(NdArray::new(vec![4, 2], vec![1.0, 10.0, 2.0, 10.0, 3.0, 10.0, 4.0, 10.0]).unwrap());
        let z = z_normalize(&t);
        let z = z.typed::<f32>().unwrap().data();
        let ch0: Vec<f32> = z.iter().step_by(2).copied().collect();
        let mean: f32 = ch0.iter().sum::<f32>() / 4.0;
        assert!(mean.abs() < 1e-6);
        // Constant channel is centred only.
        assert!(z.iter().skip(1).step_by(2).all(|&v| v == 0.0));
    }

    #[test]
    fn rescale_bounds() {
        let t = Tensor::Uint8(NdArray::new(vec![3], vec![10, 20, 30]).unwrap());
        let r = rescale_intensity(&t, -1.0, 1.0);
        assert_eq!(r.typed::<f32>().unwrap().data(), &[-1.0, 0.0, 1.0]);
        let c = Tensor::Uint8(NdArray::new(vec![2], vec![5, 5]).unwrap());
        assert_eq!(rescale_intensity(&c, 0.0, 1.0).typed::<f32>().unwrap().data(), &[0.0, 0.0]);
    }
}
