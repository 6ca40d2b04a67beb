use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use log::{debug, info};

use super::{
    CategoryDescriptor, CreationPlan, EntrySource, MetadataBlock, ProvenanceEntry, DATA_START, FORMAT_VERSION,
    MAGIC, PAYLOAD_ALIGN,
};
use crate::error::{Error, Result};
use crate::geometry::ImageGeometry;
use crate::imageio::{hash_file, probe_image, read_image};
use crate::scalar::DType;
use crate::tensor::Tensor;

/// User hook applied to payloads at write time, after the built-in
/// transforms. This is where e.g. a defacing step would plug in.
pub trait PayloadTransform {
    fn applies_to(&self, category: &str) -> bool;
    fn apply(&self, subject_id: &str, category: &str, t: Tensor) -> Result<Tensor>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainerSummary {
    pub path: PathBuf,
    pub subjects: usize,
    pub categories: Vec<String>,
    /// Bytes of tensor payload stored in the container (0 for metadata-only).
    pub payload_bytes: u64,
    pub file_bytes: u64,
}

/// Writes a full container holding every payload.
pub fn create_dataset(plan: &CreationPlan, out_path: &Path) -> Result<ContainerSummary> {
    create_dataset_with(plan, out_path, &[])
}

/// Writes a container holding only metadata; payloads stay in the source files.
pub fn create_metadata_dataset(plan: &CreationPlan, out_path: &Path) -> Result<ContainerSummary> {
    let mut plan = plan.clone();
    plan.metadata_only = true;
    create_dataset_with(&plan, out_path, &[])
}

fn promote(a: DType, b: DType) -> DType {
    let rank = |d: DType| DType::ALL.iter().position(|&x| x == d).unwrap();
    if rank(a) >= rank(b) {
        a
    } else {
        b
    }
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub(crate) fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Loads the files of one category and concatenates them on a trailing
/// channel axis. Files without geometry get identity geometry over all axes.
pub(crate) fn load_files(subject: &str, category: &str, files: &[PathBuf]) -> Result<(Tensor, ImageGeometry)> {
    let mut parts: Vec<Tensor> = Vec::with_capacity(files.len());
    let mut geometry: Option<ImageGeometry> = None;
    let mut dtype = DType::Uint8;
    for f in files {
        let (t, g) = read_image(f).map_err(|e| match e {
            Error::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
                Error::DanglingSource(path)
            }
            other => other,
        })?;
        let g = g.unwrap_or_else(|| ImageGeometry::identity(t.ndim()));
        let t = if t.ndim() == g.ndim() { t.with_channel_axis()? } else { t };
        match (&geometry, parts.first()) {
            (Some(first_g), Some(first)) => {
                let n = first_g.ndim();
                if g.ndim() != n || t.shape()[..n] != first.shape()[..n] {
                    return Err(Error::Creation(format!(
                        "subject {subject}, category {category}: {} has shape {:?}, expected spatial shape {:?}",
                        f.display(),
                        t.shape(),
                        &first.shape()[..n]
                    )));
                }
            }
            _ => geometry = Some(g),
        }
        dtype = promote(dtype, t.dtype());
        parts.push(t);
    }
    let geometry = geometry.ok_or_else(|| Error::Creation(format!("subject {subject}, category {category}: no files")))?;
    let tensor = if parts.len() == 1 {
        parts.pop().unwrap().cast(dtype)
    } else {
        Tensor::concat_last_axis(&parts, dtype)?
    };
    Ok((tensor, geometry))
}

/// Shape/dtype/geometry of a file category without reading payloads.
fn probe_files(subject: &str, category: &str, files: &[PathBuf]) -> Result<(DType, Vec<usize>, ImageGeometry)> {
    let mut out: Option<(DType, Vec<usize>, ImageGeometry)> = None;
    for f in files {
        let info = probe_image(f).map_err(|e| match e {
            Error::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
                Error::DanglingSource(path)
            }
            other => other,
        })?;
        let g = info.geometry.unwrap_or_else(|| ImageGeometry::identity(info.shape.len()));
        let mut shape = info.shape;
        if shape.len() == g.ndim() {
            shape.push(1);
        }
        match &mut out {
            None => out = Some((info.dtype, shape, g)),
            Some((d, s, first)) => {
                if first.ndim() != g.ndim() || s[..first.ndim()] != shape[..g.ndim()] {
                    return Err(Error::Creation(format!(
                        "subject {subject}, category {category}: {} has shape {shape:?}, expected spatial shape {:?}",
                        f.display(),
                        &s[..first.ndim()]
                    )));
                }
                *d = promote(*d, info.dtype);
                *s.last_mut().unwrap() += shape.last().unwrap();
            }
        }
    }
    out.ok_or_else(|| Error::Creation(format!("subject {subject}, category {category}: no files")))
}

struct CountingWriter {
    inner: BufWriter<File>,
    pos: u64,
}

impl CountingWriter {
    fn write(&mut self, bytes: &[u8], path: &Path) -> Result<()> {
        self.inner.write_all(bytes).map_err(|e| Error::io(path, e))?;
        self.pos += bytes.len() as u64;
        Ok(())
    }

    fn align(&mut self, path: &Path) -> Result<()> {
        let rel = self.pos - DATA_START;
        let pad = (PAYLOAD_ALIGN - rel % PAYLOAD_ALIGN) % PAYLOAD_ALIGN;
        self.write(&vec![0u8; pad as usize], path)
    }
}

/// Writes a container, applying `hooks` to payloads after the built-in
/// transforms. Hooks cannot be combined with a metadata-only plan since
/// readers could not replay them.
pub fn create_dataset_with(
    plan: &CreationPlan,
    out_path: &Path,
    hooks: &[&dyn PayloadTransform],
) -> Result<ContainerSummary> {
    if plan.metadata_only && !hooks.is_empty() {
        return Err(Error::Creation(
            "custom payload transforms cannot be used with a metadata-only container".into(),
        ));
    }
    let mut seen = HashSet::new();
    for s in &plan.subjects {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::Creation(format!("duplicate subject id {:?}", s.id)));
        }
    }
    for t in &plan.transforms {
        let used = plan.subjects.iter().any(|s| {
            s.entries
                .iter()
                .any(|(c, src)| c == t.category() && matches!(src, EntrySource::Files(_)))
        });
        if !used && !plan.subjects.is_empty() {
            return Err(Error::Creation(format!(
                "transform targets unknown image category {:?}",
                t.category()
            )));
        }
    }

    let file = File::create(out_path).map_err(|e| Error::io(out_path, e))?;
    let mut w = CountingWriter {
        inner: BufWriter::with_capacity(1 << 20, file),
        pos: 0,
    };
    w.write(&[0u8; DATA_START as usize], out_path)?;

    let mut categories: Vec<CategoryDescriptor> = Vec::new();
    let mut provenance = Vec::new();
    let mut names: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut category_order: Vec<String> = Vec::new();
    let mut payload_bytes = 0u64;

    for subject in &plan.subjects {
        debug!("writing subject {}", subject.id);
        let mut spatial: Option<(String, Vec<usize>)> = None;
        for (category, source) in &subject.entries {
            if !category_order.contains(category) {
                category_order.push(category.clone());
            }
            let transforms: Vec<_> = plan.transforms.iter().filter(|t| t.category() == category).collect();
            let (tensor, geometry, dtype, shape, sources, values) = match source {
                EntrySource::Values(v) => {
                    let t = v.to_tensor()?;
                    let (dtype, shape) = (t.dtype(), t.shape().to_vec());
                    let values = plan.metadata_only.then(|| t.to_f64().into_data());
                    (Some(t), None, dtype, shape, Vec::new(), values)
                }
                EntrySource::Files(files) => {
                    let (tensor, geometry, dtype, shape) = if plan.metadata_only {
                        let (mut d, s, g) = probe_files(&subject.id, category, files)?;
                        if let Some(last) = transforms.last() {
                            d = last.output_dtype();
                        }
                        (None, g, d, s)
                    } else {
                        let (mut t, g) = load_files(&subject.id, category, files)?;
                        for tr in &transforms {
                            t = tr.apply(&t);
                        }
                        for h in hooks.iter().filter(|h| h.applies_to(category)) {
                            t = h.apply(&subject.id, category, t)?;
                        }
                        let (d, s) = (t.dtype(), t.shape().to_vec());
                        (Some(t), g, d, s)
                    };
                    let sp = shape[..geometry.ndim()].to_vec();
                    match &spatial {
                        Some((first_cat, first)) if *first != sp => {
                            return Err(Error::Creation(format!(
                                "subject {}, category {category}: spatial shape {sp:?} differs from {first_cat} {first:?}",
                                subject.id
                            )));
                        }
                        None => spatial = Some((category.clone(), sp)),
                        _ => {}
                    }
                    let channels = *shape.last().unwrap();
                    match names.get(category) {
                        Some(n) if n.len() != channels => {
                            return Err(Error::Creation(format!(
                                "subject {}, category {category}: {channels} channels but {} names",
                                subject.id,
                                n.len()
                            )));
                        }
                        Some(_) => {}
                        None => {
                            let n = plan
                                .names
                                .get(category)
                                .cloned()
                                .unwrap_or_else(|| files.iter().map(|f| file_stem(f)).collect());
                            if n.len() != channels {
                                return Err(Error::Creation(format!(
                                    "subject {}, category {category}: {channels} channels but {} names",
                                    subject.id,
                                    n.len()
                                )));
                            }
                            names.insert(category.clone(), n);
                        }
                    }
                    let mut srcs = Vec::with_capacity(files.len());
                    for f in files {
                        let abs = absolute(f).to_string_lossy().into_owned();
                        let sha256 = if plan.record_hashes { Some(hash_file(f)?) } else { None };
                        provenance.push(ProvenanceEntry {
                            subject_id: subject.id.clone(),
                            category: category.clone(),
                            source_path: abs.clone(),
                            sha256,
                        });
                        srcs.push(abs);
                    }
                    let sources = if plan.metadata_only { srcs } else { Vec::new() };
                    (tensor, Some(geometry), dtype, shape, sources, None)
                }
            };
            if let (EntrySource::Values(_), Some(n)) = (source, plan.names.get(category)) {
                names.entry(category.clone()).or_insert_with(|| n.clone());
            }
            let byte_length = (shape.iter().product::<usize>() * dtype.size()) as u64;
            let byte_offset = match (&tensor, plan.metadata_only) {
                (Some(t), false) => {
                    w.align(out_path)?;
                    let off = w.pos - DATA_START;
                    w.write(&t.to_le_bytes(), out_path)?;
                    payload_bytes += byte_length;
                    off
                }
                _ => 0,
            };
            categories.push(CategoryDescriptor {
                category: category.clone(),
                subject_id: subject.id.clone(),
                dtype,
                shape,
                byte_offset,
                byte_length,
                geometry,
                sources,
                values,
            });
        }
    }

    let meta = MetadataBlock {
        format_version: FORMAT_VERSION,
        name: plan.name.clone(),
        metadata_only: plan.metadata_only,
        subjects: plan.subjects.iter().map(|s| s.id.clone()).collect(),
        categories,
        provenance,
        names,
        transforms: plan.transforms.clone(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::Creation(e.to_string()))?;
    let meta_offset = w.pos;
    w.write(&json, out_path)?;
    let file_bytes = w.pos;

    let mut file = w.inner.into_inner().map_err(|e| Error::io(out_path, e.into_error()))?;
    let mut header = [0u8; 24];
    header[..8].copy_from_slice(&MAGIC);
    header[8..16].copy_from_slice(&meta_offset.to_le_bytes());
    header[16..24].copy_from_slice(&(json.len() as u64).to_le_bytes());
    file.seek(SeekFrom::Start(0)).map_err(|e| Error::io(out_path, e))?;
    file.write_all(&header).map_err(|e| Error::io(out_path, e))?;
    file.sync_all().map_err(|e| Error::io(out_path, e))?;

    info!(
        "wrote {} ({} subjects, {} payload bytes)",
        out_path.display(),
        meta.subjects.len(),
        payload_bytes
    );
    Ok(ContainerSummary {
        path: out_path.to_path_buf(),
        subjects: meta.subjects.len(),
        categories: category_order,
        payload_bytes,
        file_bytes,
    })
}
