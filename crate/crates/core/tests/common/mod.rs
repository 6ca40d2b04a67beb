#![allow(dead_code)]

pub mod oracles;

use std::path::{Path, PathBuf};

use miakit::dataset::{CreationPlan, EntrySource, InlineValues, SubjectSource};
use miakit::imageio::{write_metaimage, write_npy};
use miakit::{ImageGeometry, NdArray, Tensor};

pub const SHAPE: [usize; 3] = [9, 11, 7];

/// Deterministic, non-repeating float image.
pub fn image(seed: usize, shape: &[usize]) -> NdArray<f32> {
    NdArray::from_fn(shape.to_vec(), |i| ((i * 7919 + seed * 104_729) % 1000) as f32 / 7.0 - 50.0).unwrap()
}

pub fn labels(seed: usize, shape: &[usize]) -> NdArray<u8> {
    NdArray::from_fn(shape.to_vec(), |i| ((i / 13 + seed) % 3) as u8).unwrap()
}

pub fn geometry() -> ImageGeometry {
    ImageGeometry::with_spacing(vec![2.0, 1.0, 0.5]).unwrap()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Fmt {
    Mha,
    MhaCompressed,
    Npy,
}

fn write(t: &Tensor, path: &Path, fmt: Fmt) {
    match fmt {
        Fmt::Mha => write_metaimage(t, &geometry(), path, false).unwrap(),
        Fmt::MhaCompressed => write_metaimage(t, &geometry(), path, true).unwrap(),
        Fmt::Npy => write_npy(t, path).unwrap(),
    }
}

/// Writes `n` subjects with T1, T2 and GT images and returns a plan that
/// also carries inline `numerical` and `gender` values.
pub fn fixture_plan(dir: &Path, n: usize, fmt: Fmt) -> CreationPlan {
    let ext = if fmt == Fmt::Npy { "npy" } else { "mha" };
    let mut subjects = Vec::new();
    for s in 0..n {
        let id = format!("Subject_{}", s + 1);
        let sd = dir.join(&id);
        std::fs::create_dir_all(&sd).unwrap();
        let p = |name: &str| -> PathBuf { sd.join(format!("{name}.{ext}")) };
        write(&Tensor::Float32(image(2 * s, &SHAPE)), &p("T1"), fmt);
        write(&Tensor::Float32(image(2 * s + 1, &SHAPE)), &p("T2"), fmt);
        write(&Tensor::Uint8(labels(s, &SHAPE)), &p("GT"), fmt);
        subjects.push(SubjectSource {
            id,
            entries: vec![
                ("images".into(), EntrySource::Files(vec![p("T1"), p("T2")])),
                ("labels".into(), EntrySource::Files(vec![p("GT")])),
                ("numerical".into(), EntrySource::Values(InlineValues::Float(vec![20.0 + s as f64, 3.5]))),
                ("gender".into(), EntrySource::Values(InlineValues::Int(vec![(s % 2) as i64]))),
            ],
        });
    }
    CreationPlan {
        name: "fixture".into(),
        subjects,
        ..Default::default()
    }
}

pub const STRUCTURES: [(i64, &str); 5] =
    [(1, "WhiteMatter"), (2, "GreyMatter"), (3, "Hippocampus"), (4, "Amygdala"), (5, "Thalamus")];

pub fn structure_labels() -> miakit::evaluation::LabelMap {
    miakit::evaluation::LabelMap::new(STRUCTURES.iter().map(|(v, n)| (*v, n.to_string())).collect()).unwrap()
}

/// Five box-shaped structures on background. `jitter` moves every box
/// boundary by a seed-dependent amount, giving an imperfect prediction.
pub fn structure_volume(shape: &[usize], seed: usize, jitter: bool) -> NdArray<u8> {
    let boxes: [([usize; 3], [usize; 3]); 5] = [
        ([1, 1, 1], [6, 6, 6]),
        ([7, 1, 1], [11, 5, 7]),
        ([1, 7, 2], [4, 12, 5]),
        ([5, 8, 6], [10, 12, 9]),
        ([2, 2, 7], [5, 6, 9]),
    ];
    NdArray::from_fn(shape.to_vec(), |i| {
        let idx = [i / (shape[1] * shape[2]), (i / shape[2]) % shape[1], i % shape[2]];
        let mut v = 0u8;
        for (k, (lo, hi)) in boxes.iter().enumerate() {
            let d = if jitter { (seed + k) % 3 } else { 0 };
            let inside = (0..3).all(|a| idx[a] >= lo[a] + d / 2 && idx[a] < hi[a] + d % 2);
            if inside {
                v = k as u8 + 1;
            }
        }
        v
    })
    .unwrap()
}
