use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::create::load_files;
use super::{CategoryDescriptor, MetadataBlock, ProvenanceEntry, TransformSpec, DATA_START, FORMAT_VERSION, MAGIC};
use crate::error::{Error, Result};
use crate::geometry::ImageGeometry;
use crate::imageio::{read_npy_header, read_npy_region, ImageFormat};
use crate::rawio::{read_exact_at, read_region_at};
use crate::scalar::DType;
use crate::tensor::{IndexExpression, NdArray, PadMode, Region, Tensor};

/// An open container. Reads are positioned, so a handle can be shared
/// between threads.
#[derive(Debug)]
pub struct DatasetHandle {
    path: PathBuf,
    file: File,
    meta: MetadataBlock,
    /// `(subject, category)` → index into `meta.categories`.
    index: BTreeMap<(String, String), usize>,
    category_names: Vec<String>,
}

fn corrupt(path: &Path, what: &str) -> Error {
    Error::CorruptFile(format!("{}: {what}", path.display()))
}

/// Opens and validates a container.
pub fn open_dataset(path: &Path) -> Result<DatasetHandle> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut head = vec![0u8; (file_len.min(DATA_START)) as usize];
    read_exact_at(&file, &mut head, 0).map_err(|e| Error::io(path, e))?;
    if head.len() < 6 || head[..6] != MAGIC[..6] {
        return Err(Error::NotADataset(path.display().to_string()));
    }
    if head.len() < 24 {
        return Err(corrupt(path, "header truncated"));
    }
    let version = u16::from_le_bytes([head[6], head[7]]) as u32;
    if version != FORMAT_VERSION {
        return Err(Error::Version { found: version, expected: FORMAT_VERSION });
    }
    let meta_offset = u64::from_le_bytes(head[8..16].try_into().unwrap());
    let meta_length = u64::from_le_bytes(head[16..24].try_into().unwrap());
    if meta_offset < DATA_START || meta_offset.checked_add(meta_length).is_none_or(|end| end > file_len) {
        return Err(corrupt(path, "metadata block outside file"));
    }
    let mut json = vec![0u8; meta_length as usize];
    read_exact_at(&file, &mut json, meta_offset).map_err(|e| Error::io(path, e))?;
    let meta: MetadataBlock =
        serde_json::from_slice(&json).map_err(|e| corrupt(path, &format!("invalid metadata: {e}")))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Version { found: meta.format_version, expected: FORMAT_VERSION });
    }

    let data_len = meta_offset - DATA_START;
    let mut index = BTreeMap::new();
    let mut category_names = Vec::new();
    for (i, d) in meta.categories.iter().enumerate() {
        let expected = d.shape.iter().product::<usize>() as u64 * d.dtype.size() as u64;
        if d.byte_length != expected {
            return Err(corrupt(path, &format!("descriptor {}/{} has inconsistent length", d.subject_id, d.category)));
        }
        if !meta.metadata_only && d.byte_offset.checked_add(d.byte_length).is_none_or(|end| end > data_len) {
            return Err(corrupt(path, &format!("payload {}/{} outside data section", d.subject_id, d.category)));
        }
        if !meta.subjects.contains(&d.subject_id) {
            return Err(corrupt(path, &format!("descriptor for unknown subject {}", d.subject_id)));
        }
        if index.insert((d.subject_id.clone(), d.category.clone()), i).is_some() {
            return Err(corrupt(path, &format!("duplicate descriptor {}/{}", d.subject_id, d.category)));
        }
        if !category_names.contains(&d.category) {
            category_names.push(d.category.clone());
        }
    }
    Ok(DatasetHandle {
        path: path.to_path_buf(),
        file,
        meta,
        index,
        category_names,
    })
}

fn dangling(e: Error) -> Error {
    match e {
        Error::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => Error::DanglingSource(path),
        other => other,
    }
}

impl DatasetHandle {
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn metadata(&self) -> &MetadataBlock {
        &self.meta
    }

    pub fn is_metadata_only(&self) -> bool {
        self.meta.metadata_only
    }

    /// Subject ids in canonical order.
    pub fn subjects(&self) -> &[String] {
        &self.meta.subjects
    }

    pub fn len(&self) -> usize {
        self.meta.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.subjects.is_empty()
    }

    /// Category names in first-seen order.
    pub fn categories(&self) -> &[String] {
        &self.category_names
    }

    pub fn subject_index(&self, subject_id: &str) -> Result<usize> {
        self.meta
            .subjects
            .iter()
            .position(|s| s == subject_id)
            .ok_or_else(|| Error::Lookup(format!("unknown subject {subject_id:?}")))
    }

    pub fn channel_names(&self, category: &str) -> Option<&[String]> {
        self.meta.names.get(category).map(Vec::as_slice)
    }

    pub fn descriptor(&self, subject_id: &str, category: &str) -> Result<&CategoryDescriptor> {
        match self.index.get(&(subject_id.to_string(), category.to_string())) {
            Some(&i) => Ok(&self.meta.categories[i]),
            None if !self.meta.subjects.iter().any(|s| s == subject_id) => {
                Err(Error::Lookup(format!("unknown subject {subject_id:?}")))
            }
            None => Err(Error::Lookup(format!("subject {subject_id:?} has no category {category:?}"))),
        }
    }

    pub fn geometry(&self, subject_id: &str, category: &str) -> Result<Option<&ImageGeometry>> {
        Ok(self.descriptor(subject_id, category)?.geometry.as_ref())
    }

    /// Reads the sample addressed by `expr` from `category`.
    pub fn read_expr(&self, category: &str, expr: &IndexExpression) -> Result<Tensor> {
        let id = self
            .meta
            .subjects
            .get(expr.subject_index)
            .ok_or_else(|| Error::Lookup(format!("subject index {} out of range", expr.subject_index)))?;
        self.read_region(id, category, expr.region.as_ref())
    }

    /// Reads `region` (or everything when `None`) of one payload. The region
    /// covers leading axes; uncovered trailing axes such as channels are
    /// returned whole.
    pub fn read_region(&self, subject_id: &str, category: &str, region: Option<&Region>) -> Result<Tensor> {
        let d = self.descriptor(subject_id, category)?;
        let region = match region {
            Some(r) => r.clone(),
            None => Region::full(&d.shape),
        };
        if !region.is_within(&d.shape) {
            return Err(Error::Range(format!(
                "region start {:?} size {:?} outside {subject_id}/{category} shape {:?}",
                region.start, region.size, d.shape
            )));
        }
        if !self.meta.metadata_only {
            return read_region_at(&self.file, &self.path, DATA_START + d.byte_offset, d.dtype, &d.shape, &region);
        }
        self.read_from_sources(d, &region)
    }

    fn read_from_sources(&self, d: &CategoryDescriptor, region: &Region) -> Result<Tensor> {
        if let Some(values) = &d.values {
            let t = Tensor::Float64(NdArray::new(d.shape.clone(), values.clone())?).cast(d.dtype);
            return t.extract(&region.start, &region.size, PadMode::Zero);
        }
        let sources: Vec<PathBuf> = d.sources.iter().map(PathBuf::from).collect();
        let transforms: Vec<&TransformSpec> =
            self.meta.transforms.iter().filter(|t| t.category() == d.category).collect();
        let spatial = d.spatial_shape().len();
        let all_npy = sources
            .iter()
            .all(|p| matches!(ImageFormat::from_path(p), Ok(ImageFormat::Npy)));
        if transforms.is_empty() && all_npy && region.rank() <= spatial {
            return read_npy_sources(&sources, spatial, region, d.dtype);
        }
        let (mut t, _) = load_files(&d.subject_id, &d.category, &sources)?;
        for tr in transforms {
            t = tr.apply(&t);
        }
        if t.shape() != d.shape.as_slice() {
            return Err(Error::CorruptFile(format!(
                "sources of {}/{} now have shape {:?}, recorded {:?}",
                d.subject_id,
                d.category,
                t.shape(),
                d.shape
            )));
        }
        t.cast(d.dtype).extract(&region.start, &region.size, PadMode::Zero)
    }
}

/// Region reads straight from `.npy` sources, concatenating channels.
fn read_npy_sources(sources: &[PathBuf], spatial: usize, region: &Region, dtype: DType) -> Result<Tensor> {
    let mut parts = Vec::with_capacity(sources.len());
    for p in sources {
        let h = read_npy_header(p).map_err(dangling)?;
        let t = read_npy_region(p, region).map_err(dangling)?;
        parts.push(if h.shape.len() == spatial { t.with_channel_axis()? } else { t });
    }
    if parts.len() == 1 {
        Ok(parts.pop().unwrap().cast(dtype))
    } else {
        Tensor::concat_last_axis(&parts, dtype)
    }
}

/// Structured description of a container, mirroring a `data` / `meta`
/// group tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Listing {
    pub path: String,
    pub name: String,
    pub format_version: u32,
    pub metadata_only: bool,
    pub subjects: Vec<String>,
    /// Per category: `(subject, dtype, shape)` in subject order.
    pub data: Vec<(String, Vec<(String, DType, Vec<usize>)>)>,
    pub files: Vec<ProvenanceEntry>,
    /// Geometry per category and subject.
    pub info: Vec<(String, Vec<(String, ImageGeometry)>)>,
    pub names: BTreeMap<String, Vec<String>>,
    pub transforms: Vec<TransformSpec>,
}

/// Lists subjects, categories, dtypes, shapes, channel names and provenance.
pub fn inspect(handle: &DatasetHandle) -> Listing {
    let meta = &handle.meta;
    let mut data = Vec::new();
    let mut info = Vec::new();
    for cat in &handle.category_names {
        let mut entries = Vec::new();
        let mut geoms = Vec::new();
        for s in &meta.subjects {
            if let Ok(d) = handle.descriptor(s, cat) {
                entries.push((s.clone(), d.dtype, d.shape.clone()));
                if let Some(g) = &d.geometry {
                    geoms.push((s.clone(), g.clone()));
                }
            }
        }
        data.push((cat.clone(), entries));
        if !geoms.is_empty() {
            info.push((cat.clone(), geoms));
        }
    }
    Listing {
        path: handle.path.display().to_string(),
        name: meta.name.clone(),
        format_version: meta.format_version,
        metadata_only: meta.metadata_only,
        subjects: meta.subjects.clone(),
        data,
        files: meta.provenance.clone(),
        info,
        names: meta.names.clone(),
        transforms: meta.transforms.clone(),
    }
}

fn dims(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" x ")
}

fn floats(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for Listing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.metadata_only { "metadata-only" } else { "full" };
        writeln!(f, "{} ({kind} container, format {})", self.path, self.format_version)?;
        if !self.name.is_empty() {
            writeln!(f, "name: {}", self.name)?;
        }
        writeln!(f, "data")?;
        for (cat, entries) in &self.data {
            writeln!(f, "  {cat}")?;
            for (s, dtype, shape) in entries {
                writeln!(f, "    {s}  {}  {}", dtype.name(), dims(shape))?;
            }
        }
        writeln!(f, "meta")?;
        writeln!(f, "  subjects  ({})", self.subjects.len())?;
        for s in &self.subjects {
            writeln!(f, "    {s}")?;
        }
        writeln!(f, "  files")?;
        for p in &self.files {
            match &p.sha256 {
                Some(h) => writeln!(f, "    {}/{}  {}  sha256={h}", p.subject_id, p.category, p.source_path)?,
                None => writeln!(f, "    {}/{}  {}", p.subject_id, p.category, p.source_path)?,
            }
        }
        writeln!(f, "  info")?;
        for (cat, geoms) in &self.info {
            for (s, g) in geoms {
                writeln!(
                    f,
                    "    {cat}/{s}  spacing [{}]  origin [{}]  direction [{}]",
                    floats(&g.spacing),
                    floats(&g.origin),
                    floats(&g.direction)
                )?;
            }
        }
        writeln!(f, "  names")?;
        for (cat, n) in &self.names {
            writeln!(f, "    {cat}: {}", n.join(", "))?;
        }
        writeln!(f, "  shape")?;
        for (cat, entries) in &self.data {
            for (s, _, shape) in entries {
                writeln!(f, "    {cat}/{s}  {}", dims(shape))?;
            }
        }
        if !self.transforms.is_empty() {
            writeln!(f, "  transforms")?;
            for t in &self.transforms {
                writeln!(f, "    {t:?}")?;
            }
        }
        Ok(())
    }
}
