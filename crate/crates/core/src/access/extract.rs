use serde::{Deserialize, Serialize};

use crate::dataset::DatasetHandle;
use crate::error::{Error, Result};
use crate::geometry::ImageGeometry;
use crate::tensor::{axis_map, PadMode, Region, Tensor};

use super::SampleSpec;

/// What to pull out of the dataset for every sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtractorSpec {
    /// The sample region of a category, all channels. Non-image categories
    /// are returned whole.
    Data { category: String },
    /// Like `Data` but only the named channels, in the given order.
    Selective { category: String, channels: Vec<String> },
    /// Wraps `Data`/`Selective`, enlarging the read by `pad` voxels per side
    /// and filling out-of-bounds voxels according to `mode`.
    Pad {
        inner: Box<ExtractorSpec>,
        #[serde(default)]
        pad: Vec<usize>,
        #[serde(default)]
        mode: PadMode,
    },
    SubjectId,
    Geometry { category: String },
    /// Full shape of the category (spatial axes plus channels).
    Shape { category: String },
    /// Channel names of the category.
    Names { category: String },
}

/// One extracted value.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Tensor(Tensor),
    Text(String),
    Geometry(Option<ImageGeometry>),
    Shape(Vec<usize>),
    Names(Vec<String>),
}

impl Payload {
    pub fn as_tensor(&self) -> Option<&Tensor> {
        match self {
            Payload::Tensor(t) => Some(t),
            _ => None,
        }
    }
}

impl ExtractorSpec {
    fn category(&self) -> Option<&str> {
        match self {
            ExtractorSpec::Data { category }
            | ExtractorSpec::Selective { category, .. }
            | ExtractorSpec::Geometry { category }
            | ExtractorSpec::Shape { category }
            | ExtractorSpec::Names { category } => Some(category),
            ExtractorSpec::Pad { inner, .. } => inner.category(),
            ExtractorSpec::SubjectId => None,
        }
    }

    /// Whether the extractor yields a tensor.
    pub(crate) fn is_tensor(&self) -> bool {
        matches!(self, ExtractorSpec::Data { .. } | ExtractorSpec::Selective { .. } | ExtractorSpec::Pad { .. })
    }

    /// Checks categories and channels against the dataset.
    pub(crate) fn validate(&self, h: &DatasetHandle, index_shapes: &[Vec<usize>]) -> Result<()> {
        if let ExtractorSpec::Pad { inner, .. } = self {
            if !matches!(**inner, ExtractorSpec::Data { .. } | ExtractorSpec::Selective { .. }) {
                return Err(Error::Config("a pad extractor must wrap a data or selective extractor".into()));
            }
        }
        let Some(cat) = self.category() else { return Ok(()) };
        for (s, shape) in h.subjects().iter().zip(index_shapes) {
            let d = h
                .descriptor(s, cat)
                .map_err(|_| Error::Config(format!("extractor references missing category {cat:?} (subject {s})")))?;
            if self.is_tensor() && d.is_image() && d.spatial_shape() != shape.as_slice() {
                return Err(Error::Config(format!(
                    "category {cat:?} of subject {s} has spatial shape {:?}, index built on {shape:?}",
                    d.spatial_shape()
                )));
            }
            if matches!(self, ExtractorSpec::Pad { .. }) && !d.is_image() {
                return Err(Error::Config(format!("cannot pad non-image category {cat:?}")));
            }
        }
        let channels = match self {
            ExtractorSpec::Selective { channels, .. } => Some(channels),
            ExtractorSpec::Pad { inner, .. } => match &**inner {
                ExtractorSpec::Selective { channels, .. } => Some(channels),
                _ => None,
            },
            _ => None,
        };
        if let Some(channels) = channels {
            let names = h.channel_names(cat).unwrap_or(&[]);
            for c in channels {
                if !names.contains(c) {
                    return Err(Error::Config(format!("category {cat:?} has no channel {c:?} (have {names:?})")));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn extract(&self, h: &DatasetHandle, spec: &SampleSpec) -> Result<Payload> {
        let subject = &h.subjects()[spec.subject_index];
        Ok(match self {
            ExtractorSpec::SubjectId => Payload::Text(subject.clone()),
            ExtractorSpec::Geometry { category } => Payload::Geometry(h.geometry(subject, category)?.cloned()),
            ExtractorSpec::Shape { category } => Payload::Shape(h.descriptor(subject, category)?.shape.clone()),
            ExtractorSpec::Names { category } => Payload::Names(h.channel_names(category).unwrap_or(&[]).to_vec()),
            ExtractorSpec::Data { category } => Payload::Tensor(read_padded(h, subject, category, spec.region(), &[], PadMode::Zero)?),
            ExtractorSpec::Selective { category, channels } => {
                let t = read_padded(h, subject, category, spec.region(), &[], PadMode::Zero)?;
                Payload::Tensor(select_channels(h, category, channels, t)?)
            }
            ExtractorSpec::Pad { inner, pad, mode } => {
                let (category, channels) = match &**inner {
                    ExtractorSpec::Data { category } => (category, None),
                    ExtractorSpec::Selective { category, channels } => (category, Some(channels)),
                    _ => return Err(Error::Config("a pad extractor must wrap a data or selective extractor".into())),
                };
                let t = read_padded(h, subject, category, spec.region(), pad, *mode)?;
                Payload::Tensor(match channels {
                    Some(c) => select_channels(h, category, c, t)?,
                    None => t,
                })
            }
        })
    }
}

fn select_channels(h: &DatasetHandle, category: &str, channels: &[String], t: Tensor) -> Result<Tensor> {
    let names = h.channel_names(category).unwrap_or(&[]);
    let idx = channels
        .iter()
        .map(|c| {
            names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::Config(format!("category {category:?} has no channel {c:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let c_axis = t.ndim() - 1;
    let mut maps: Vec<Vec<Option<usize>>> = t.shape().iter().map(|&n| (0..n).map(Some).collect()).collect();
    maps[c_axis] = idx.into_iter().map(Some).collect();
    Ok(t.gather(&maps))
}

/// Reads `region` enlarged by `pad`, filling out-of-bounds voxels with
/// `mode`. Only the voxels that are actually needed are read.
pub(crate) fn read_padded(
    h: &DatasetHandle,
    subject: &str,
    category: &str,
    region: Option<&Region>,
    pad: &[usize],
    mode: PadMode,
) -> Result<Tensor> {
    let d = h.descriptor(subject, category)?;
    if !d.is_image() {
        return h.read_region(subject, category, None);
    }
    let spatial = d.spatial_shape();
    let region = match region {
        Some(r) => r.padded(pad),
        None => Region::full(spatial).padded(pad),
    };
    if region.is_within(spatial) {
        return h.read_region(subject, category, Some(&region));
    }
    let maps: Vec<Vec<Option<usize>>> = (0..region.rank())
        .map(|a| axis_map(region.start[a], region.size[a], spatial[a], mode))
        .collect();
    let mut start = Vec::with_capacity(maps.len());
    let mut size = Vec::with_capacity(maps.len());
    for m in &maps {
        let lo = m.iter().flatten().min().copied();
        let hi = m.iter().flatten().max().copied();
        match (lo, hi) {
            (Some(lo), Some(hi)) => {
                start.push(lo as isize);
                size.push(hi - lo + 1);
            }
            // Entirely outside the image: nothing to read on this axis.
            _ => {
                start.push(0);
                size.push(1);
            }
        }
    }
    let inner = h.read_region(subject, category, Some(&Region { start: start.clone(), size }))?;
    let shifted: Vec<Vec<Option<usize>>> = maps
        .iter()
        .zip(&start)
        .map(|(m, &s)| {
            let any = m.iter().any(Option::is_some);
            m.iter().map(|v| if any { v.map(|v| v - s as usize) } else { None }).collect()
        })
        .collect();
    Ok(inner.gather(&shifted))
}
