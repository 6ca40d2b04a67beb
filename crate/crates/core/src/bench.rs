//! Loading benchmark: per-sample read latency of the container against
//! loading the owning source files and cropping.
//!
//! Fixtures are two-channel synthetic volumes written once per variant.
//! Every (variant, strategy) pair gets one untimed warm-up pass followed by
//! `runs` timed passes over the same samples. Times include decoding and
//! exclude fixture generation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::access::{Datasource, DatasourceConfig, ExtractorSpec, IndexingStrategy};
use crate::dataset::{create_dataset, CreationPlan, EntrySource, SubjectSource};
use crate::error::{Error, Result};
use crate::evaluation::format_value;
use crate::geometry::ImageGeometry;
use crate::imageio::{write_metaimage, write_npy};
use crate::tensor::{NdArray, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Container,
    Npy,
    Mha,
    MhaCompressed,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Container, Variant::Npy, Variant::Mha, Variant::MhaCompressed];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Container => "container",
            Variant::Npy => "npy",
            Variant::Mha => "mha",
            Variant::MhaCompressed => "mha-compressed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}; valid: container, npy, mha, mha-compressed")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoadStrategy {
    Full,
    Patch,
    Slice,
}

impl LoadStrategy {
    pub const ALL: [LoadStrategy; 3] = [LoadStrategy::Full, LoadStrategy::Patch, LoadStrategy::Slice];

    pub fn name(self) -> &'static str {
        match self {
            LoadStrategy::Full => "full",
            LoadStrategy::Patch => "patch",
            LoadStrategy::Slice => "slice",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        LoadStrategy::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}; valid: full, patch, slice")))
    }

    /// Patches are `patch_size` per axis, clipped to small images.
    pub fn indexing(self, shape: &[usize], patch_size: usize) -> IndexingStrategy {
        match self {
            LoadStrategy::Full => IndexingStrategy::Empty,
            LoadStrategy::Patch => IndexingStrategy::Patch {
                shape: shape.iter().map(|&e| e.min(patch_size)).collect(),
                step: None,
            },
            LoadStrategy::Slice => IndexingStrategy::Slice { axis: 0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub subjects: usize,
    pub shape: Vec<usize>,
    pub variants: Vec<Variant>,
    pub strategies: Vec<LoadStrategy>,
    pub runs: usize,
    pub seed: u64,
    /// Evenly spaced subset of samples timed per pass; `None` times all.
    pub samples_per_pass: Option<usize>,
    pub patch_size: usize,
    pub workdir: PathBuf,
}

impl BenchConfig {
    pub fn new(workdir: impl Into<PathBuf>) -> Self {
        BenchConfig {
            subjects: 25,
            shape: vec![181, 217, 181],
            variants: Variant::ALL.to_vec(),
            strategies: LoadStrategy::ALL.to_vec(),
            runs: 5,
            seed: 0,
            samples_per_pass: None,
            patch_size: 84,
            workdir: workdir.into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.subjects == 0 || self.runs == 0 {
            return Err(Error::Config("benchmark needs at least one subject and one run".into()));
        }
        if self.shape.len() != 3 || self.shape.contains(&0) {
            return Err(Error::Config(format!("shape must be three positive extents, got {:?}", self.shape)));
        }
        if self.samples_per_pass == Some(0) || self.patch_size == 0 {
            return Err(Error::Config("samples per pass and patch size must be positive".into()));
        }
        if self.variants.is_empty() || self.strategies.is_empty() {
            return Err(Error::Config("no variants or strategies selected".into()));
        }
        Ok(())
    }

    /// Bytes the fixtures take on disk, compressed files counted at full size.
    pub fn fixture_bytes(&self) -> u64 {
        let per_variant = (self.subjects * 2 * self.shape.iter().product::<usize>() * 4) as u64;
        // npy sources are always written; the container copies them.
        let copies = 1 + self.variants.iter().filter(|v| **v != Variant::Npy).count() as u64;
        per_variant * copies
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub variant: Variant,
    pub strategy: LoadStrategy,
    /// Mean over passes of the per-pass mean sample latency.
    pub mean_ms: f64,
    /// Population standard deviation of the per-pass means.
    pub std_ms: f64,
    pub samples_per_pass: usize,
}

const CHANNELS: [&str; 2] = ["T1", "T2"];

fn synthetic_channel(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| rng.gen_range(0u16..1000) as f32).collect();
    Tensor::Float32(NdArray::new(shape.to_vec(), data).expect("shape matches"))
}

/// Written fixtures: one creation plan per file variant and the container.
#[derive(Debug, Clone)]
pub struct Fixtures {
    pub plans: Vec<(Variant, CreationPlan)>,
    pub container: Option<PathBuf>,
    pub dir: PathBuf,
}

fn plan_for(ids: &[String], dir: &Path, ext: &str) -> CreationPlan {
    CreationPlan {
        name: format!("bench-{ext}"),
        subjects: ids
            .iter()
            .map(|id| SubjectSource {
                id: id.clone(),
                entries: vec![(
                    "images".into(),
                    EntrySource::Files(CHANNELS.iter().map(|c| dir.join(format!("{id}_{c}.{ext}"))).collect()),
                )],
            })
            .collect(),
        ..Default::default()
    }
}

/// Generates the synthetic subjects and writes every requested variant.
pub fn generate_fixtures(cfg: &BenchConfig) -> Result<Fixtures> {
    cfg.validate()?;
    let dir = cfg.workdir.join("bench-fixtures");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let geometry = ImageGeometry::identity(3);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ids: Vec<String> = (1..=cfg.subjects).map(|i| format!("Subject_{i}")).collect();
    let wants = |v: Variant| cfg.variants.contains(&v);
    // Compressed files keep the `.mha` extension in their own directory.
    let zdir = dir.join("compressed");
    if wants(Variant::MhaCompressed) {
        std::fs::create_dir_all(&zdir).map_err(|e| Error::io(&zdir, e))?;
    }
    for id in &ids {
        for c in CHANNELS {
            let t = synthetic_channel(&mut rng, &cfg.shape);
            write_npy(&t, &dir.join(format!("{id}_{c}.npy")))?;
            if wants(Variant::Mha) {
                write_metaimage(&t, &geometry, &dir.join(format!("{id}_{c}.mha")), false)?;
            }
            if wants(Variant::MhaCompressed) {
                write_metaimage(&t, &geometry, &zdir.join(format!("{id}_{c}.mha")), true)?;
            }
        }
        log::info!("bench fixtures: wrote {id}");
    }
    let mut plans = Vec::new();
    for v in &cfg.variants {
        match v {
            Variant::Npy => plans.push((*v, plan_for(&ids, &dir, "npy"))),
            Variant::Mha => plans.push((*v, plan_for(&ids, &dir, "mha"))),
            Variant::MhaCompressed => plans.push((*v, plan_for(&ids, &zdir, "mha"))),
            Variant::Container => {}
        }
    }
    let container = if wants(Variant::Container) {
        let path = dir.join("bench.miads");
        create_dataset(&plan_for(&ids, &dir, "npy"), &path)?;
        Some(path)
    } else {
        None
    };
    Ok(Fixtures { plans, container, dir })
}

fn datasource(fixtures: &Fixtures, variant: Variant, config: DatasourceConfig) -> Result<Datasource> {
    match variant {
        Variant::Container => {
            let path = fixtures.container.as_ref().ok_or_else(|| Error::Config("container fixture missing".into()))?;
            Datasource::open(path, config)
        }
        v => {
            let plan = &fixtures
                .plans
                .iter()
                .find(|(pv, _)| *pv == v)
                .ok_or_else(|| Error::Config(format!("{} fixture missing", v.name())))?
                .1;
            Datasource::filesystem(plan, &fixtures.dir.join(format!("{}.meta.miads", v.name())), config)
        }
    }
}

/// Indices of `take` samples spread evenly over `0..len`.
fn sample_subset(len: usize, take: Option<usize>) -> Vec<usize> {
    match take {
        Some(k) if k < len => (0..k).map(|i| i * len / k).collect(),
        _ => (0..len).collect(),
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

/// Times every requested (variant, strategy) pair on existing fixtures.
pub fn measure(cfg: &BenchConfig, fixtures: &Fixtures) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &variant in &cfg.variants {
        for &strategy in &cfg.strategies {
            let config = DatasourceConfig::new(strategy.indexing(&cfg.shape, cfg.patch_size))
                .extractor("images", ExtractorSpec::Data { category: "images".into() });
            let ds = datasource(fixtures, variant, config)?;
            let subset = sample_subset(ds.len(), cfg.samples_per_pass);
            for &i in &subset {
                ds.get_sample(i)?;
            }
            let mut pass_means = Vec::with_capacity(cfg.runs);
            for _ in 0..cfg.runs {
                let mut total = 0.0;
                for &i in &subset {
                    let t0 = Instant::now();
                    let s = ds.get_sample(i)?;
                    total += t0.elapsed().as_secs_f64() * 1e3;
                    std::hint::black_box(s);
                }
                pass_means.push(total / subset.len() as f64);
            }
            let (mean_ms, std_ms) = mean_std(&pass_means);
            log::info!("bench {} / {}: {mean_ms:.3} ms", variant.name(), strategy.name());
            rows.push(BenchRow {
                variant,
                strategy,
                mean_ms,
                std_ms,
                samples_per_pass: subset.len(),
            });
        }
    }
    Ok(rows)
}

/// Generates fixtures under `cfg.workdir`, then measures.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let fixtures = generate_fixtures(cfg)?;
    measure(cfg, &fixtures)
}

pub fn format_bench_csv(rows: &[BenchRow], delimiter: u8) -> Result<String> {
    let csv_err = |e: csv::Error| Error::Writer(e.to_string());
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(Vec::new());
    w.write_record(["VARIANT", "STRATEGY", "MEAN_MS", "STD_MS"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.variant.name(), r.strategy.name(), &format_value(r.mean_ms), &format_value(r.std_ms)])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Writer(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Writer(e.to_string()))
}

/// Horizontal bars scaled to the slowest entry of each strategy.
pub fn bar_chart(rows: &[BenchRow], width: usize) -> String {
    let mut out = String::new();
    for strategy in LoadStrategy::ALL {
        let group: Vec<&BenchRow> = rows.iter().filter(|r| r.strategy == strategy).collect();
        let Some(max) = group.iter().map(|r| r.mean_ms).reduce(f64::max) else { continue };
        let _ = writeln!(out, "{}", strategy.name());
        for r in group {
            let n = if max > 0.0 { ((r.mean_ms / max) * width as f64).round() as usize } else { 0 };
            let _ = writeln!(out, "  {:<15} {:<width$} {:.3} ms", r.variant.name(), "#".repeat(n.max(1)), r.mean_ms);
        }
    }
    out
}
