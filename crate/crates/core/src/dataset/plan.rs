use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity;
use crate::tensor::Tensor;

/// What to put into a container.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CreationPlan {
    pub name: String,
    pub subjects: Vec<SubjectSource>,
    /// Channel identifiers per category. Missing categories default to the
    /// source file stems (images) or the category name (inline values).
    pub names: BTreeMap<String, Vec<String>>,
    pub transforms: Vec<TransformSpec>,
    pub record_hashes: bool,
    pub metadata_only: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSource {
    pub id: String,
    /// Categories in storage order.
    pub entries: Vec<(String, EntrySource)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EntrySource {
    /// Image files concatenated along the channel axis.
    Files(Vec<PathBuf>),
    Values(InlineValues),
}

/// Non-image payloads such as age or a gender code.
#[derive(Debug, Clone, PartialEq)]
pub enum InlineValues {
    /// Stored as a `float64` vector.
    Float(Vec<f64>),
    /// Stored as `uint8` when every value fits, `int32` otherwise.
    Int(Vec<i64>),
}

impl InlineValues {
    pub(crate) fn to_tensor(&self) -> Result<Tensor> {
        match self {
            InlineValues::Float(v) => Ok(Tensor::Float64(crate::NdArray::new(vec![v.len()], v.clone())?)),
            InlineValues::Int(v) => {
                if v.iter().all(|x| (0..=255).contains(x)) {
                    Ok(Tensor::Uint8(crate::NdArray::new(vec![v.len()], v.iter().map(|&x| x as u8).collect())?))
                } else if v.iter().all(|&x| i32::try_from(x).is_ok()) {
                    Ok(Tensor::Int32(crate::NdArray::new(vec![v.len()], v.iter().map(|&x| x as i32).collect())?))
                } else {
                    Err(Error::Creation(format!("inline value out of int32 range in {v:?}")))
                }
            }
        }
    }
}

/// Built-in write-time transform. Recorded in the container so that
/// metadata-only readers can replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    /// Per-channel z-score; output `float32`.
    ZNormalize { category: String },
    /// Min-max rescale to `[out_min, out_max]`; output `float32`.
    RescaleIntensity { category: String, out_min: f64, out_max: f64 },
}

impl TransformSpec {
    pub fn category(&self) -> &str {
        match self {
            TransformSpec::ZNormalize { category } | TransformSpec::RescaleIntensity { category, .. } => category,
        }
    }

    pub fn apply(&self, t: &Tensor) -> Tensor {
        match self {
            TransformSpec::ZNormalize { .. } => intensity::z_normalize(t),
            TransformSpec::RescaleIntensity { out_min, out_max, .. } => {
                intensity::rescale_intensity(t, *out_min, *out_max)
            }
        }
    }

    pub(crate) fn output_dtype(&self) -> crate::DType {
        crate::DType::Float32
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    dataset: DatasetSection,
    #[serde(default)]
    names: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    transforms: Vec<TransformSpec>,
    #[serde(default, rename = "subject")]
    subjects: Vec<SubjectSection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetSection {
    #[serde(default)]
    name: String,
    #[serde(default)]
    record_hashes: bool,
    #[serde(default)]
    metadata_only: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubjectSection {
    id: String,
    #[serde(default)]
    files: BTreeMap<String, OneOrMany>,
    #[serde(default)]
    values: BTreeMap<String, toml::Value>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

fn inline_from_toml(subject: &str, key: &str, v: &toml::Value) -> Result<InlineValues> {
    let bad = || Error::Config(format!("subject {subject}: value {key:?} must be a number or an array of numbers"));
    let items: Vec<&toml::Value> = match v {
        toml::Value::Array(a) => a.iter().collect(),
        other => vec![other],
    };
    if items.is_empty() {
        return Err(bad());
    }
    if items.iter().all(|x| x.is_integer()) {
        return Ok(InlineValues::Int(items.iter().map(|x| x.as_integer().unwrap()).collect()));
    }
    items
        .iter()
        .map(|x| match x {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(i) => Ok(*i as f64),
            _ => Err(bad()),
        })
        .collect::<Result<Vec<_>>>()
        .map(InlineValues::Float)
}

impl CreationPlan {
    /// Parses a TOML creation config. Relative file paths resolve against `base_dir`.
    ///
    /// ```toml
    /// [dataset]
    /// name = "example"
    ///
    /// [names]
    /// images = ["T1", "T2"]
    ///
    /// [[transforms]]
    /// kind = "z_normalize"
    /// category = "images"
    ///
    /// [[subject]]
    /// id = "Subject_1"
    /// [subject.files]
    /// images = ["Subject_1/T1.mha", "Subject_1/T2.mha"]
    /// labels = "Subject_1/GT.mha"
    /// [subject.values]
    /// numerical = [25.0, 3.4]
    /// gender = 1
    /// ```
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut subjects = Vec::with_capacity(cfg.subjects.len());
        for s in cfg.subjects {
            let mut entries = Vec::new();
            for (cat, files) in s.files {
                let list = match files {
                    OneOrMany::One(f) => vec![f],
                    OneOrMany::Many(v) => v,
                };
                if list.is_empty() {
                    return Err(Error::Config(format!("subject {}: category {cat:?} lists no files", s.id)));
                }
                entries.push((cat, EntrySource::Files(list.iter().map(|f| base_dir.join(f)).collect())));
            }
            for (cat, v) in &s.values {
                if entries.iter().any(|(c, _)| c == cat) {
                    return Err(Error::Config(format!(
                        "subject {}: category {cat:?} given both as files and values",
                        s.id
                    )));
                }
                entries.push((cat.clone(), EntrySource::Values(inline_from_toml(&s.id, cat, v)?)));
            }
            subjects.push(SubjectSource { id: s.id, entries });
        }
        Ok(CreationPlan {
            name: cfg.dataset.name,
            subjects,
            names: cfg.names,
            transforms: cfg.transforms,
            record_hashes: cfg.dataset.record_hashes,
            metadata_only: cfg.dataset.metadata_only,
        })
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }
}
