//! Indexed access to training samples: an indexing strategy cuts every
//! subject into samples, extractors read the sample region of each
//! category, and transforms post-process the extracted tensors.

mod extract;
mod index;
mod transform;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{create_metadata_dataset, open_dataset, CreationPlan, DatasetHandle};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use extract::{ExtractorSpec, Payload};
pub use index::{build_index, IndexingStrategy, SampleSpec};
pub use transform::SampleTransform;

/// An extractor and the key its output is stored under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedExtractor {
    pub name: String,
    #[serde(flatten)]
    pub spec: ExtractorSpec,
}

impl NamedExtractor {
    pub fn new(name: impl Into<String>, spec: ExtractorSpec) -> Self {
        NamedExtractor { name: name.into(), spec }
    }
}

/// Everything that defines a datasource besides the dataset itself.
///
/// ```toml
/// [strategy]
/// kind = "slice"
/// axis = 0
///
/// [[extractors]]
/// name = "images"
/// kind = "data"
/// category = "images"
///
/// [[extractors]]
/// name = "subject"
/// kind = "subject_id"
///
/// [[transforms]]
/// kind = "z_normalize"
/// entries = ["images"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasourceConfig {
    pub strategy: IndexingStrategy,
    #[serde(default)]
    pub extractors: Vec<NamedExtractor>,
    #[serde(default)]
    pub transforms: Vec<SampleTransform>,
    /// Category whose spatial shape defines the index. Defaults to the
    /// first image category of the dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_category: Option<String>,
}

impl DatasourceConfig {
    pub fn new(strategy: IndexingStrategy) -> Self {
        DatasourceConfig {
            strategy,
            extractors: Vec::new(),
            transforms: Vec::new(),
            index_category: None,
        }
    }

    pub fn extractor(mut self, name: impl Into<String>, spec: ExtractorSpec) -> Self {
        self.extractors.push(NamedExtractor::new(name, spec));
        self
    }

    pub fn transform(mut self, t: SampleTransform) -> Self {
        self.transforms.push(t);
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Extracted payloads of one sample, keyed by extractor name.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub spec: SampleSpec,
    pub subject_id: String,
    pub payloads: BTreeMap<String, Payload>,
}

impl Sample {
    pub fn get(&self, name: &str) -> Option<&Payload> {
        self.payloads.get(name)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.payloads.get(name).and_then(Payload::as_tensor)
    }
}

/// An indexed, immutable view of a dataset. `get_sample` takes `&self`
/// and keeps no state between calls, so concurrent callers are fine.
#[derive(Debug, Clone)]
pub struct Datasource {
    handle: Arc<DatasetHandle>,
    config: DatasourceConfig,
    shapes: Vec<Vec<usize>>,
    specs: Vec<SampleSpec>,
}

impl Datasource {
    /// Validates `config` against the dataset and builds the index table.
    pub fn new(handle: Arc<DatasetHandle>, config: DatasourceConfig) -> Result<Self> {
        let index_category = match &config.index_category {
            Some(c) => c.clone(),
            None => handle
                .subjects()
                .first()
                .and_then(|s| {
                    handle
                        .categories()
                        .iter()
                        .find(|c| handle.descriptor(s, c).is_ok_and(|d| d.is_image()))
                        .cloned()
                })
                .unwrap_or_default(),
        };
        let mut shapes = Vec::with_capacity(handle.len());
        for s in handle.subjects() {
            let d = handle
                .descriptor(s, &index_category)
                .map_err(|_| Error::Config(format!("index category {index_category:?} missing for subject {s}")))?;
            if !d.is_image() {
                return Err(Error::Config(format!("index category {index_category:?} is not an image")));
            }
            shapes.push(d.spatial_shape().to_vec());
        }
        let mut names: Vec<&str> = Vec::new();
        for e in &config.extractors {
            if names.contains(&e.name.as_str()) {
                return Err(Error::Config(format!("duplicate extractor name {:?}", e.name)));
            }
            e.spec.validate(&handle, &shapes)?;
            names.push(&e.name);
        }
        let tensor_entries: Vec<&str> =
            config.extractors.iter().filter(|e| e.spec.is_tensor()).map(|e| e.name.as_str()).collect();
        for t in &config.transforms {
            t.validate(&tensor_entries)?;
        }
        let specs = if shapes.is_empty() { Vec::new() } else { build_index(&shapes, &config.strategy)? };
        Ok(Datasource { handle, config, shapes, specs })
    }

    /// Opens a container (full or metadata-only) and builds a datasource on it.
    pub fn open(path: &Path, config: DatasourceConfig) -> Result<Self> {
        Datasource::new(Arc::new(open_dataset(path)?), config)
    }

    /// Datasource that loads payloads from the original files. Writes a
    /// metadata-only container for `plan` to `metadata_path` first; shapes
    /// and geometry come from there.
    pub fn filesystem(plan: &CreationPlan, metadata_path: &Path, config: DatasourceConfig) -> Result<Self> {
        create_metadata_dataset(plan, metadata_path)?;
        Datasource::open(metadata_path, config)
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn handle(&self) -> &Arc<DatasetHandle> {
        &self.handle
    }

    pub fn config(&self) -> &DatasourceConfig {
        &self.config
    }

    pub fn specs(&self) -> &[SampleSpec] {
        &self.specs
    }

    pub fn spec(&self, sample_index: usize) -> Result<&SampleSpec> {
        self.specs.get(sample_index).ok_or_else(|| {
            Error::Range(format!("sample index {sample_index} outside 0..{}", self.specs.len()))
        })
    }

    /// Spatial shape of each subject, in subject order.
    pub fn spatial_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// Runs all extractors on the sample's region, then the transforms in order.
    pub fn get_sample(&self, sample_index: usize) -> Result<Sample> {
        let spec = self.spec(sample_index)?;
        let mut payloads = BTreeMap::new();
        for e in &self.config.extractors {
            payloads.insert(e.name.clone(), e.spec.extract(&self.handle, spec)?);
        }
        for t in &self.config.transforms {
            t.apply(sample_index, &mut payloads)?;
        }
        Ok(Sample {
            spec: spec.clone(),
            subject_id: self.handle.subjects()[spec.subject_index].clone(),
            payloads,
        })
    }
}
