use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity;
use crate::tensor::Tensor;

use super::Payload;

/// Sample-level transform applied to the named extractor outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleTransform {
    /// Per-channel z-score over the sample.
    ZNormalize { entries: Vec<String> },
    RescaleIntensity { entries: Vec<String>, out_min: f64, out_max: f64 },
    /// Zeroes voxels where the `mask` entry is zero. The mask broadcasts
    /// over channels.
    ApplyMask { entries: Vec<String>, mask: String },
    /// Flips each axis in `axes` with `probability`. The generator is seeded
    /// from `(seed, sample_index)`, and all entries of a sample get the same
    /// flips.
    RandomFlip { entries: Vec<String>, axes: Vec<usize>, probability: f64, seed: u64 },
    /// Moves the trailing channel axis to the front.
    PermuteChannelsFirst { entries: Vec<String> },
}

impl SampleTransform {
    pub fn entries(&self) -> &[String] {
        match self {
            SampleTransform::ZNormalize { entries }
            | SampleTransform::RescaleIntensity { entries, .. }
            | SampleTransform::ApplyMask { entries, .. }
            | SampleTransform::RandomFlip { entries, .. }
            | SampleTransform::PermuteChannelsFirst { entries } => entries,
        }
    }

    pub(crate) fn validate(&self, tensor_entries: &[&str]) -> Result<()> {
        let mut needed: Vec<&str> = self.entries().iter().map(String::as_str).collect();
        if let SampleTransform::ApplyMask { mask, .. } = self {
            needed.push(mask);
        }
        for e in needed {
            if !tensor_entries.contains(&e) {
                return Err(Error::Config(format!("transform refers to unknown tensor entry {e:?}")));
            }
        }
        if let SampleTransform::RandomFlip { probability, .. } = self {
            if !(0.0..=1.0).contains(probability) {
                return Err(Error::Config(format!("flip probability {probability} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub(crate) fn apply(&self, sample_index: usize, payloads: &mut BTreeMap<String, Payload>) -> Result<()> {
        let mask = match self {
            SampleTransform::ApplyMask { mask, .. } => Some(tensor_of(payloads, mask)?.to_f64()),
            _ => None,
        };
        let flips: Vec<usize> = match self {
            SampleTransform::RandomFlip { axes, probability, seed, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(sample_index as u64);
                axes.iter().copied().filter(|_| rng.gen::<f64>() < *probability).collect()
            }
            _ => Vec::new(),
        };
        for name in self.entries() {
            let t = tensor_of(payloads, name)?;
            let out = match self {
                SampleTransform::ZNormalize { .. } => intensity::z_normalize(t),
                SampleTransform::RescaleIntensity { out_min, out_max, .. } => {
                    intensity::rescale_intensity(t, *out_min, *out_max)
                }
                SampleTransform::ApplyMask { .. } => apply_mask(t, mask.as_ref().unwrap(), name)?,
                SampleTransform::RandomFlip { .. } => flip(t, &flips)?,
                SampleTransform::PermuteChannelsFirst { .. } => channels_first(t),
            };
            payloads.insert(name.clone(), Payload::Tensor(out));
        }
        Ok(())
    }
}

fn tensor_of<'a>(payloads: &'a BTreeMap<String, Payload>, name: &str) -> Result<&'a Tensor> {
    payloads
        .get(name)
        .and_then(Payload::as_tensor)
        .ok_or_else(|| Error::Config(format!("no tensor entry {name:?} in sample")))
}

fn apply_mask(t: &Tensor, mask: &crate::NdArray<f64>, name: &str) -> Result<Tensor> {
    let spatial = &t.shape()[..t.ndim() - 1];
    let mask_spatial = if mask.ndim() == t.ndim() { &mask.shape()[..mask.ndim() - 1] } else { mask.shape() };
    let mask_channels = if mask.ndim() == t.ndim() { *mask.shape().last().unwrap() } else { 1 };
    if spatial != mask_spatial || mask_channels != 1 {
        return Err(Error::Argument(format!(
            "mask of shape {:?} does not fit entry {name:?} of shape {:?}",
            mask.shape(),
            t.shape()
        )));
    }
    let c = *t.shape().last().unwrap();
    let m = mask.data();
    Ok(crate::map_tensor!(t, a => {
        let mut out = a.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            if m[i / c] == 0.0 {
                *v = num_traits::Zero::zero();
            }
        }
        out
    }))
}

fn flip(t: &Tensor, axes: &[usize]) -> Result<Tensor> {
    if let Some(&a) = axes.iter().find(|&&a| a + 1 >= t.ndim()) {
        return Err(Error::Argument(format!("flip axis {a} is not a spatial axis of shape {:?}", t.shape())));
    }
    if axes.is_empty() {
        return Ok(t.clone());
    }
    let maps: Vec<Vec<Option<usize>>> = t
        .shape()
        .iter()
        .enumerate()
        .map(|(a, &n)| {
            if axes.contains(&a) {
                (0..n).rev().map(Some).collect()
            } else {
                (0..n).map(Some).collect()
            }
        })
        .collect();
    Ok(t.gather(&maps))
}

fn channels_first(t: &Tensor) -> Tensor {
    let shape = t.shape();
    let c = *shape.last().unwrap();
    let n: usize = shape[..shape.len() - 1].iter().product();
    let mut new_shape = vec![c];
    new_shape.extend_from_slice(&shape[..shape.len() - 1]);
    crate::map_tensor!(t, a => {
        let d = a.data();
        let mut out = Vec::with_capacity(d.len());
        for ch in 0..c {
            out.extend((0..n).map(|i| d[i * c + ch]));
        }
        crate::NdArray::new(new_shape.clone(), out).expect("same element count")
    })
}
