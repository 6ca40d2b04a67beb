use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{IndexExpression, Region};

/// How subjects are cut into samples. All extents are per spatial axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexingStrategy {
    /// One sample per subject covering the whole image.
    Empty,
    /// One sample per position along `axis`.
    Slice { axis: usize },
    /// Grid of patches. `step` defaults to `shape` (non-overlapping); boundary
    /// patches keep the nominal shape and are zero-padded on extraction.
    /// A slab is a patch of shape `(k, Y, X)`.
    Patch {
        shape: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<Vec<usize>>,
    },
    /// Non-overlapping grid over `core_shape`, each read enlarged by `pad`
    /// voxels on every side.
    PaddedPatch { core_shape: Vec<usize>, pad: Vec<usize> },
}

/// One entry of the index table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub sample_index: usize,
    pub subject_index: usize,
    /// What to read. May extend past the image; extraction pads.
    pub expr: IndexExpression,
    /// Image region this sample's prediction is assembled into (before
    /// clipping to the image bounds).
    pub core: Region,
    /// Per-axis enlargement of `expr` relative to `core`.
    pub pad: Vec<usize>,
    /// Slice axis, for 2.5-D bookkeeping.
    pub plane: Option<usize>,
}

impl SampleSpec {
    /// Region actually read, `None` meaning the full image.
    pub fn region(&self) -> Option<&Region> {
        self.expr.region.as_ref()
    }
}

fn grid_positions(extent: usize, shape: usize, step: usize) -> Vec<usize> {
    let n = if extent <= shape { 1 } else { (extent - shape).div_ceil(step) + 1 };
    (0..n).map(|k| k * step).collect()
}

fn check_rank(what: &str, v: &[usize], rank: usize) -> Result<()> {
    if v.len() != rank {
        return Err(Error::Config(format!("{what} {v:?} has rank {} but images have rank {rank}", v.len())));
    }
    Ok(())
}

/// Builds the index table over subjects with the given spatial shapes.
/// Samples are ordered subject-major, then C-order over grid positions.
pub fn build_index(shapes: &[Vec<usize>], strategy: &IndexingStrategy) -> Result<Vec<SampleSpec>> {
    let mut specs = Vec::new();
    for (subject_index, shape) in shapes.iter().enumerate() {
        let rank = shape.len();
        if rank == 0 || shape.contains(&0) {
            return Err(Error::Config(format!("subject {subject_index} has empty shape {shape:?}")));
        }
        let mut push = |expr: IndexExpression, core: Region, pad: Vec<usize>, plane: Option<usize>| {
            specs.push(SampleSpec {
                sample_index: specs.len(),
                subject_index,
                expr,
                core,
                pad,
                plane,
            })
        };
        match strategy {
            IndexingStrategy::Empty => push(IndexExpression::full(subject_index), Region::full(shape), vec![0; rank], None),
            IndexingStrategy::Slice { axis } => {
                if *axis >= rank {
                    return Err(Error::Config(format!("slice axis {axis} not below spatial rank {rank}")));
                }
                for k in 0..shape[*axis] {
                    let mut r = Region::full(shape);
                    r.start[*axis] = k as isize;
                    r.size[*axis] = 1;
                    push(IndexExpression::region(subject_index, r.clone()), r, vec![0; rank], Some(*axis));
                }
            }
            IndexingStrategy::Patch { shape: patch, step } => {
                check_rank("patch shape", patch, rank)?;
                let step = step.clone().unwrap_or_else(|| patch.clone());
                check_rank("patch step", &step, rank)?;
                for a in 0..rank {
                    if patch[a] == 0 || step[a] == 0 || step[a] > patch[a] {
                        return Err(Error::Config(format!(
                            "patch shape {patch:?} with step {step:?} must have 1 <= step <= shape"
                        )));
                    }
                    if patch[a] > shape[a] {
                        return Err(Error::Config(format!(
                            "patch shape {patch:?} exceeds image shape {shape:?}; use a padded patch strategy"
                        )));
                    }
                }
                for r in grid(shape, patch, &step) {
                    push(IndexExpression::region(subject_index, r.clone()), r, vec![0; rank], None);
                }
            }
            IndexingStrategy::PaddedPatch { core_shape, pad } => {
                check_rank("core shape", core_shape, rank)?;
                check_rank("pad", pad, rank)?;
                if core_shape.contains(&0) {
                    return Err(Error::Config(format!("core shape {core_shape:?} has a zero extent")));
                }
                for r in grid(shape, core_shape, core_shape) {
                    push(IndexExpression::region(subject_index, r.padded(pad)), r, pad.clone(), None);
                }
            }
        }
    }
    Ok(specs)
}

fn grid(shape: &[usize], patch: &[usize], step: &[usize]) -> Vec<Region> {
    let axes: Vec<Vec<usize>> = (0..shape.len()).map(|a| grid_positions(shape[a], patch[a], step[a])).collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..total {
        out.push(Region {
            start: idx.iter().enumerate().map(|(a, &i)| axes[a][i] as isize).collect(),
            size: patch.to_vec(),
        });
        for a in (0..shape.len()).rev() {
            idx[a] += 1;
            if idx[a] < axes[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}
