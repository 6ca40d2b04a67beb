//! Reassembles per-sample predictions into full subject volumes.
//!
//! Predictions are accumulated as a float64 sum plus a per-voxel weight, so
//! overlapping samples are averaged and the result does not depend on the
//! order of [`Assembler::add_prediction`] calls.
//!
//! Buffers are plain data behind `&mut self`: calls on one buffer must be
//! serialized by the caller. Different subjects' buffers are independent
//! ([`Assembler::subjects_mut`]) and can be filled from separate threads.

use std::collections::BTreeSet;

use crate::access::{Datasource, SampleSpec};
use crate::error::{Error, Result};
use crate::tensor::{NdArray, Tensor};

/// Accumulation state of one subject.
#[derive(Debug, Clone)]
pub struct SubjectBuffer {
    pub subject_id: String,
    spatial_shape: Vec<usize>,
    channels: Option<usize>,
    sum: Vec<f64>,
    weight: Vec<f64>,
    expected: BTreeSet<usize>,
    received: BTreeSet<usize>,
}

impl SubjectBuffer {
    pub fn new(subject_id: impl Into<String>, spatial_shape: Vec<usize>, expected: BTreeSet<usize>) -> Self {
        let n = spatial_shape.iter().product();
        SubjectBuffer {
            subject_id: subject_id.into(),
            spatial_shape,
            channels: None,
            sum: Vec::new(),
            weight: vec![0.0; n],
            expected,
            received: BTreeSet::new(),
        }
    }

    pub fn spatial_shape(&self) -> &[usize] {
        &self.spatial_shape
    }

    pub fn is_complete(&self) -> bool {
        self.expected.is_subset(&self.received)
    }

    /// Expected sample indices not yet submitted.
    pub fn missing(&self) -> Vec<usize> {
        self.expected.difference(&self.received).copied().collect()
    }

    /// Per-voxel count of contributions.
    pub fn weight(&self) -> NdArray<f64> {
        NdArray::new(self.spatial_shape.clone(), self.weight.clone()).expect("buffer shape")
    }

    /// Adds `prediction` over the sample's core region clipped to the image.
    ///
    /// Accepted prediction shapes (optionally followed by a channel axis):
    /// the core size, the padded read size (cropped by `spec.pad` first), or
    /// for slice samples the core size without the slice axis.
    pub fn add_prediction(&mut self, spec: &SampleSpec, prediction: &Tensor) -> Result<()> {
        let rank = self.spatial_shape.len();
        let core = &spec.core;
        let shape = prediction.shape();
        let mismatch = || {
            Error::Assembly(format!(
                "sample {}: prediction shape {shape:?} does not match core {:?} (pad {:?})",
                spec.sample_index, core.size, spec.pad
            ))
        };
        if core.rank() != rank {
            return Err(mismatch());
        }
        let padded: Vec<usize> = core.size.iter().zip(&spec.pad).map(|(s, p)| s + 2 * p).collect();
        let without_plane: Option<Vec<usize>> = spec.plane.map(|a| {
            let mut v = core.size.clone();
            v.remove(a);
            v
        });
        // (spatial shape as submitted, offset of the core inside it, channels)
        let (pred_spatial, offset, channels) = {
            let try_match = |spatial: &[usize]| -> Option<usize> {
                let k = spatial.len();
                if shape.len() == k && shape == spatial {
                    Some(1)
                } else if shape.len() == k + 1 && &shape[..k] == spatial {
                    Some(shape[k])
                } else {
                    None
                }
            };
            if let Some(c) = try_match(&core.size) {
                (core.size.clone(), vec![0; rank], c)
            } else if let Some(c) = try_match(&padded) {
                (padded.clone(), spec.pad.clone(), c)
            } else if let Some(c) = without_plane.as_deref().and_then(try_match) {
                (core.size.clone(), vec![0; rank], c)
            } else {
                return Err(mismatch());
            }
        };
        match self.channels {
            None => {
                self.channels = Some(channels);
                self.sum = vec![0.0; self.weight.len() * channels];
            }
            Some(c) if c != channels => {
                return Err(Error::Assembly(format!(
                    "sample {}: {channels} channels, earlier predictions had {c}",
                    spec.sample_index
                )));
            }
            Some(_) => {}
        }

        let values = prediction.to_f64();
        let values = values.data();
        if let Some(clipped) = core.clip(&self.spatial_shape) {
            let img_strides = crate::tensor::strides(&self.spatial_shape);
            let pred_strides = crate::tensor::strides(&pred_spatial);
            let row = *clipped.size.last().unwrap();
            let outer: Vec<usize> = clipped.size[..rank - 1].to_vec();
            let n_rows: usize = outer.iter().product();
            let mut idx = vec![0usize; rank - 1];
            for _ in 0..n_rows {
                let mut img = 0usize;
                let mut pred = 0usize;
                for a in 0..rank {
                    let i = if a + 1 < rank { idx[a] } else { 0 };
                    let pos = clipped.start[a] as usize + i;
                    img += pos * img_strides[a];
                    let rel = (pos as isize - core.start[a]) as usize + offset[a];
                    pred += rel * pred_strides[a];
                }
                for j in 0..row {
                    self.weight[img + j] += 1.0;
                    let src = &values[(pred + j) * channels..(pred + j + 1) * channels];
                    let dst = &mut self.sum[(img + j) * channels..(img + j + 1) * channels];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
                for a in (0..rank - 1).rev() {
                    idx[a] += 1;
                    if idx[a] < outer[a] {
                        break;
                    }
                    idx[a] = 0;
                }
            }
        }
        self.received.insert(spec.sample_index);
        Ok(())
    }

    fn mean_f64(&self) -> Result<Vec<f64>> {
        if !self.is_complete() {
            return Err(Error::NotReady {
                subject: self.subject_id.clone(),
                missing: self.missing(),
            });
        }
        let c = self.channels.unwrap_or(1);
        if self.sum.is_empty() {
            return Ok(vec![0.0; self.weight.len() * c]);
        }
        Ok(self
            .sum
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let w = self.weight[i / c];
                if w > 0.0 {
                    s / w
                } else {
                    0.0
                }
            })
            .collect())
    }

    fn output_shape(&self) -> Vec<usize> {
        let mut shape = self.spatial_shape.clone();
        shape.push(self.channels.unwrap_or(1));
        shape
    }

    /// Voxel-wise `sum / weight` as float32, shape spatial + channels.
    pub fn assemble(&self) -> Result<NdArray<f32>> {
        let mean = self.mean_f64()?;
        NdArray::new(self.output_shape(), mean.into_iter().map(|v| v as f32).collect())
    }
}

/// Assembly buffers for every subject of a datasource.
#[derive(Debug, Clone)]
pub struct Assembler {
    subjects: Vec<SubjectBuffer>,
    plane: Option<usize>,
}

impl Assembler {
    /// Expects every sample of `ds` exactly once.
    pub fn for_datasource(ds: &Datasource) -> Self {
        let ids = ds.handle().subjects().to_vec();
        Assembler::new(&ids, ds.spatial_shapes(), ds.specs())
    }

    pub fn new(subject_ids: &[String], spatial_shapes: &[Vec<usize>], specs: &[SampleSpec]) -> Self {
        let mut expected = vec![BTreeSet::new(); subject_ids.len()];
        for s in specs {
            expected[s.subject_index].insert(s.sample_index);
        }
        let plane = specs.first().and_then(|s| s.plane);
        let subjects = subject_ids
            .iter()
            .zip(spatial_shapes)
            .zip(expected)
            .map(|((id, shape), exp)| SubjectBuffer::new(id.clone(), shape.clone(), exp))
            .collect();
        Assembler { subjects, plane }
    }

    /// Slice axis of the underlying index, if any.
    pub fn plane(&self) -> Option<usize> {
        self.plane
    }

    pub fn subject(&self, subject_index: usize) -> Result<&SubjectBuffer> {
        self.subjects
            .get(subject_index)
            .ok_or_else(|| Error::Lookup(format!("subject index {subject_index} out of range")))
    }

    /// Per-subject buffers, e.g. to fill different subjects concurrently.
    pub fn subjects_mut(&mut self) -> &mut [SubjectBuffer] {
        &mut self.subjects
    }

    pub fn add_prediction(&mut self, spec: &SampleSpec, prediction: &Tensor) -> Result<()> {
        let n = self.subjects.len();
        let buf = self.subjects.get_mut(spec.subject_index).ok_or_else(|| {
            Error::Assembly(format!(
                "sample {}: subject index {} outside 0..{n}",
                spec.sample_index, spec.subject_index
            ))
        })?;
        if !buf.expected.contains(&spec.sample_index) {
            return Err(Error::Assembly(format!(
                "sample {} is not part of subject {}",
                spec.sample_index, buf.subject_id
            )));
        }
        buf.add_prediction(spec, prediction)
    }

    pub fn is_complete(&self, subject_index: usize) -> Result<bool> {
        Ok(self.subject(subject_index)?.is_complete())
    }

    pub fn assemble(&self, subject_index: usize) -> Result<NdArray<f32>> {
        self.subject(subject_index)?.assemble()
    }
}

/// Voxel-wise mean of the three per-plane assemblies of one subject.
pub fn plane_assemble(planes: [&Assembler; 3], subject_index: usize) -> Result<NdArray<f32>> {
    let mut acc: Option<(Vec<usize>, Vec<f64>)> = None;
    for (i, a) in planes.iter().enumerate() {
        let buf = a.subject(subject_index)?;
        let mean = buf.mean_f64().map_err(|e| match e {
            Error::NotReady { subject, missing } => Error::NotReady {
                subject: format!("{subject} (plane {})", a.plane.unwrap_or(i)),
                missing,
            },
            other => other,
        })?;
        let shape = buf.output_shape();
        match &mut acc {
            None => acc = Some((shape, mean)),
            Some((s, sum)) => {
                if *s != shape {
                    return Err(Error::Assembly(format!(
                        "plane {} assembled to shape {shape:?}, expected {s:?}",
                        a.plane.unwrap_or(i)
                    )));
                }
                sum.iter_mut().zip(&mean).for_each(|(a, b)| *a += b);
            }
        }
    }
    let (shape, sum) = acc.expect("three planes");
    NdArray::new(shape, sum.into_iter().map(|v| (v / 3.0) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::access::{build_index, IndexingStrategy};

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn slices_cover_each_voxel_once() {
        let shape = vec![6, 5, 4];
        let specs = build_index(&[shape.clone()], &IndexingStrategy::Slice { axis: 0 }).unwrap();
        let mut a = Assembler::new(&ids(1), &[shape.clone()], &specs);
        for s in &specs {
            let p = Tensor::Float32(NdArray::full(vec![1, 5, 4, 1], 2.5).unwrap());
            a.add_prediction(s, &p).unwrap();
        }
        assert!(a.subject(0).unwrap().weight().data().iter().all(|&w| w == 1.0));
        assert!(a.assemble(0).unwrap().data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn boundary_patches_drop_outside_voxels() {
        let shape = vec![181, 217, 181];
        let specs = build_index(&[shape.clone()], &IndexingStrategy::Patch { shape: vec![84; 3], step: None }).unwrap();
        let mut a = Assembler::new(&ids(1), &[shape.clone()], &specs);
        let p = Tensor::Uint8(NdArray::full(vec![84, 84, 84], 1).unwrap());
        for s in &specs {
            a.add_prediction(s, &p).unwrap();
        }
        let w = a.subject(0).unwrap().weight();
        assert!(w.data().iter().all(|&v| v == 1.0));
        assert_eq!(a.assemble(0).unwrap().shape(), &[181, 217, 181, 1]);
    }

    #[test]
    fn duplicate_submission_doubles_weight() {
        let shape = vec![4, 4];
        let specs = build_index(&[shape.clone()], &IndexingStrategy::Patch { shape: vec![2, 2], step: None }).unwrap();
        let mut a = Assembler::new(&ids(1), &[shape.clone()], &specs);
        let one = Tensor::Float64(NdArray::full(vec![2, 2], 1.0).unwrap());
        let three = Tensor::Float64(NdArray::full(vec![2, 2], 3.0).unwrap());
        for s in &specs {
            a.add_prediction(s, &one).unwrap();
        }
        a.add_prediction(&specs[0], &three).unwrap();
        let w = a.subject(0).unwrap().weight();
        assert_eq!(w.get(&[0, 0]).unwrap(), 2.0);
        assert_eq!(w.get(&[3, 3]).unwrap(), 1.0);
        let out = a.assemble(0).unwrap();
        assert_eq!(out.get(&[1, 1, 0]).unwrap(), 2.0);
        assert_eq!(out.get(&[2, 2, 0]).unwrap(), 1.0);
    }

    #[test]
    fn incomplete_subject_lists_missing_samples() {
        let shape = vec![3, 2];
        let specs = build_index(&[shape.clone()], &IndexingStrategy::Slice { axis: 0 }).unwrap();
        let mut a = Assembler::new(&ids(1), &[shape], &specs);
        a.add_prediction(&specs[1], &Tensor::Float32(NdArray::zeros(vec![1, 2]).unwrap())).unwrap();
        match a.assemble(0) {
            Err(Error::NotReady { subject, missing }) => {
                assert_eq!(subject, "s0");
                assert_eq!(missing, vec![0, 2]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_shape_cites_sample() {
        let shape = vec![3, 2];
        let specs = build_index(&[shape.clone()], &IndexingStrategy::Slice { axis: 1 }).unwrap();
        let mut a = Assembler::new(&ids(1), &[shape], &specs);
        let err = a.add_prediction(&specs[1], &Tensor::Float32(NdArray::zeros(vec![2, 2]).unwrap()));
        assert!(matches!(err, Err(Error::Assembly(m)) if m.contains("sample 1")));
        // A 2-D prediction for a slice of a 2-D image without the slice axis is accepted.
        a.add_prediction(&specs[1], &Tensor::Float32(NdArray::zeros(vec![3]).unwrap())).unwrap();
    }

    #[test]
    fn planes_average() {
        let shape = vec![3, 3, 3];
        let mut planes = Vec::new();
        for axis in 0..3 {
            let specs = build_index(&[shape.clone()], &IndexingStrategy::Slice { axis }).unwrap();
            let mut a = Assembler::new(&ids(1), &[shape.clone()], &specs);
            let mut pshape = vec![3, 3, 3];
            pshape[axis] = 1;
            for s in &specs {
                a.add_prediction(s, &Tensor::Float32(NdArray::full(pshape.clone(), axis as f32).unwrap())).unwrap();
            }
            planes.push(a);
        }
        let out = plane_assemble([&planes[0], &planes[1], &planes[2]], 0).unwrap();
        assert!(out.data().iter().all(|&v| v == 1.0));

        let specs = build_index(&[shape.clone()], &IndexingStrategy::Slice { axis: 2 }).unwrap();
        let empty = Assembler::new(&ids(1), &[shape], &specs);
        match plane_assemble([&planes[0], &planes[1], &empty], 0) {
            Err(Error::NotReady { subject, .. }) => assert!(subject.contains("plane 2")),
            other => panic!("{other:?}"),
        }
    }
}
