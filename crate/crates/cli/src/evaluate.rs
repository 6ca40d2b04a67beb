use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::Args;
use miakit::evaluation::{
    evaluate_continuous, evaluate_segmentation, write_console, write_csv, EvaluationResult, LabelMap, MetricParams,
    MetricSpec,
};
use miakit::imageio::{read_image, ImageFormat};
use miakit::{Error, ImageGeometry, Result};
use rayon::prelude::*;

#[derive(Args)]
pub struct EvaluateArgs {
    /// Reference images: a directory or a glob pattern.
    #[arg(long = "ref")]
    reference: Option<String>,
    /// Predictions: a directory or a glob pattern.
    #[arg(long)]
    pred: Option<String>,
    /// Tab-separated `subject<TAB>reference<TAB>prediction` lines; replaces stem matching.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// `value<TAB>name` lines; required for label metrics.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value = "DICE,HDRFDST95,VOLSMTY")]
    metrics: String,
    #[arg(long, default_value_t = 100.0)]
    hausdorff_percentile: f64,
    #[arg(long, default_value_t = 1.0)]
    tolerance_mm: f64,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    slice_index: Option<usize>,
    #[arg(long)]
    data_range: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = ";", value_parser = crate::parse_delimiter)]
    delimiter: u8,
    /// Subjects evaluated in parallel; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

/// File name without its image extension.
fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn is_image(path: &Path) -> bool {
    path.is_file() && ImageFormat::from_path(path).is_ok()
}

fn list_images(spec: &str) -> Result<BTreeMap<String, PathBuf>> {
    let dir = Path::new(spec);
    let files: Vec<PathBuf> = if dir.is_dir() {
        std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_image(p))
            .collect()
    } else {
        glob::glob(spec)
            .map_err(|e| Error::Config(format!("bad pattern {spec:?}: {e}")))?
            .filter_map(|p| p.ok())
            .filter(|p| is_image(p))
            .collect()
    };
    let mut out = BTreeMap::new();
    for f in files {
        if let Some(prev) = out.insert(stem(&f), f.clone()) {
            return Err(Error::Config(format!("{} and {} share a subject stem", prev.display(), f.display())));
        }
    }
    if out.is_empty() {
        return Err(Error::Evaluation(format!("no images found for {spec:?}")));
    }
    Ok(out)
}

type Pair = (String, PathBuf, PathBuf);

fn match_stems(reference: &str, pred: &str) -> Result<Vec<Pair>> {
    let refs = list_images(reference)?;
    let mut preds = list_images(pred)?;
    let mut pairs = Vec::new();
    let mut missing = Vec::new();
    for (id, r) in refs {
        match preds.remove(&id) {
            Some(p) => pairs.push((id, r, p)),
            None => missing.push(format!("{id} (no prediction)")),
        }
    }
    missing.extend(preds.into_keys().map(|id| format!("{id} (no reference)")));
    if !missing.is_empty() {
        return Err(Error::Evaluation(format!("unmatched subjects: {}", missing.join(", "))));
    }
    Ok(pairs)
}

fn read_pairs(path: &Path) -> Result<Vec<Pair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        let [id, r, p] = f[..] else {
            return Err(Error::Config(format!("{} line {}: expected three tab-separated fields", path.display(), no + 1)));
        };
        out.push((id.to_string(), base.join(r), base.join(p)));
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{} lists no pairs", path.display())));
    }
    Ok(out)
}

fn load(path: &Path) -> Result<(miakit::Volume64, ImageGeometry)> {
    let (t, g) = read_image(path)?;
    let g = g.unwrap_or_else(|| ImageGeometry::identity(t.ndim()));
    Ok((t.to_f64(), g))
}

fn evaluate_pair(pair: &Pair, labels: Option<&LabelMap>, metrics: &[MetricSpec]) -> Result<Vec<EvaluationResult>> {
    let (id, r, p) = pair;
    let (rv, rg) = load(r)?;
    let (pv, pg) = load(p)?;
    match labels {
        Some(l) => evaluate_segmentation(&rv, &rg, &pv, &pg, l, metrics, id),
        None => evaluate_continuous(&rv, &pv, metrics, id),
    }
}

pub fn run(a: &EvaluateArgs) -> Result<()> {
    let mut params = MetricParams {
        hausdorff_percentile: a.hausdorff_percentile,
        tolerance_mm: a.tolerance_mm,
        slice_index: a.slice_index,
        data_range: a.data_range,
        ..MetricParams::default()
    };
    if let Some(b) = a.beta {
        params.beta = b;
    }
    if !(params.hausdorff_percentile > 0.0 && params.hausdorff_percentile <= 100.0) {
        return Err(Error::Config(format!("Hausdorff percentile must be in (0, 100], got {}", a.hausdorff_percentile)));
    }
    let metrics = MetricSpec::parse_list(&a.metrics, &params)?;
    let continuous = metrics.iter().filter(|m| m.is_continuous()).count();
    if continuous != 0 && continuous != metrics.len() {
        return Err(Error::Config("label metrics and intensity metrics cannot be mixed in one table".into()));
    }
    let labels = match (&a.labels, continuous == 0) {
        (Some(p), true) => Some(LabelMap::from_file(p)?),
        (None, true) => return Err(Error::Config("--labels is required for label metrics".into())),
        (_, false) => None,
    };
    let pairs = match (&a.pairs, &a.reference, &a.pred) {
        (Some(m), _, _) => read_pairs(m)?,
        (None, Some(r), Some(p)) => match_stems(r, p)?,
        _ => return Err(Error::Config("give --ref and --pred, or --pairs".into())),
    };

    let workers = a.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    let done = AtomicUsize::new(0);
    let per_subject: Vec<Result<Vec<EvaluationResult>>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|pair| {
                let r = evaluate_pair(pair, labels.as_ref(), &metrics);
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                eprintln!("[{n}/{}] {}", pairs.len(), pair.0);
                r
            })
            .collect()
    });
    let mut results = Vec::new();
    for r in per_subject {
        results.extend(r?);
    }
    match &a.out {
        Some(p) => write_csv(&results, p, a.delimiter)?,
        None => print!("{}", write_console(&results)?),
    }
    Ok(())
}
