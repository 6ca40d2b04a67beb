use std::cell::OnceCell;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluation::metric::{MetricSpec, Side};
use crate::geometry::ImageGeometry;
use crate::metrics::confusion::{self, ConfusionMatrix};
use crate::metrics::{self, SsimParams, SurfaceDistances};
use crate::scalar::Element;
use crate::tensor::NdArray;

/// Spacings closer than this are considered equal.
pub const SPACING_TOLERANCE: f64 = 1e-6;

/// One value of one metric for one subject and label.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub subject_id: String,
    pub label: String,
    pub metric: String,
    pub value: f64,
}

/// Label values to evaluate and their display names, in report order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    entries: Vec<(i64, String)>,
}

impl LabelMap {
    pub fn new(entries: Vec<(i64, String)>) -> Result<Self> {
        for (i, (value, name)) in entries.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::Config(format!("label {value} has an empty name")));
            }
            if entries[..i].iter().any(|(v, n)| v == value || n == name) {
                return Err(Error::Config(format!("label {value} ({name}) is listed twice")));
            }
        }
        Ok(LabelMap { entries })
    }

    /// Parses `value<TAB>name` lines; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (value, name) = line
                .split_once('\t')
                .ok_or_else(|| Error::Config(format!("labels line {}: expected `value<TAB>name`", no + 1)))?;
            let value = value
                .trim()
                .parse::<i64>()
                .map_err(|_| Error::Config(format!("labels line {}: {value:?} is not an integer", no + 1)))?;
            entries.push((value, name.trim().to_string()));
        }
        LabelMap::new(entries)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        LabelMap::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn entries(&self) -> &[(i64, String)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-label state; the confusion matrix and surface distances are
/// computed at most once and shared by every metric that needs them.
struct LabelPair<'a> {
    reference: NdArray<u8>,
    prediction: NdArray<u8>,
    spacing: &'a [f64],
    cm: OnceCell<ConfusionMatrix>,
    distances: OnceCell<SurfaceDistances>,
}

impl LabelPair<'_> {
    fn cm(&self) -> ConfusionMatrix {
        *self
            .cm
            .get_or_init(|| confusion::confusion(&self.reference, &self.prediction).expect("same shape"))
    }

    fn distances(&self) -> Result<&SurfaceDistances> {
        if self.distances.get().is_none() {
            let d = SurfaceDistances::compute(&self.reference, &self.prediction, self.spacing)?;
            let _ = self.distances.set(d);
        }
        Ok(self.distances.get().expect("set above"))
    }

    fn value(&self, metric: &MetricSpec) -> Result<f64> {
        use MetricSpec::*;
        let cm = || self.cm();
        let (r, p) = (&self.reference, &self.prediction);
        let side = |s: Side, a: f64, b: f64| if s == Side::Reference { a } else { b };
        Ok(match *metric {
            Dice => confusion::dice(&cm()),
            Jaccard => confusion::ratio_metrics(&cm(), 1.0).jaccard,
            Sensitivity => confusion::ratio_metrics(&cm(), 1.0).sensitivity,
            Specificity => confusion::ratio_metrics(&cm(), 1.0).specificity,
            Fallout => confusion::ratio_metrics(&cm(), 1.0).fallout,
            FalseNegativeRate => confusion::ratio_metrics(&cm(), 1.0).false_negative_rate,
            Accuracy => confusion::ratio_metrics(&cm(), 1.0).accuracy,
            Precision => confusion::ratio_metrics(&cm(), 1.0).precision,
            TruePositive => cm().tp as f64,
            FalsePositive => cm().fp as f64,
            TrueNegative => cm().tn as f64,
            FalseNegative => cm().fn_ as f64,
            FMeasure { beta } => confusion::f_measure(&cm(), beta),
            GlobalConsistencyError => confusion::global_consistency_error(&cm()),
            VolumeSimilarity => confusion::volume_similarity(&cm()),
            RandIndex => confusion::pair_counting(&cm())?.rand_index,
            AdjustedRandIndex => confusion::pair_counting(&cm())?.adjusted_rand_index,
            MutualInformation => confusion::information_metrics(&cm()).mutual_information,
            VariationOfInformation => confusion::information_metrics(&cm()).variation_of_information,
            InterclassCorrelation => confusion::icc(r, p)?,
            ProbabilisticDistance => confusion::probabilistic_distance(r, p)?,
            Kappa => confusion::kappa(&cm()),
            Auc => confusion::auc(&cm()),
            Hausdorff { percentile } => self.distances()?.hausdorff(percentile)?,
            AverageDistance => self.distances()?.average(),
            Mahalanobis => metrics::mahalanobis(r, p, self.spacing)?,
            SurfaceOverlap { tolerance_mm, side: s } => {
                let m = self.distances()?.surface_metrics(tolerance_mm)?;
                side(s, m.overlap_ref, m.overlap_pred)
            }
            SurfaceDice { tolerance_mm } => self.distances()?.surface_metrics(tolerance_mm)?.surface_dice,
            Area { side: s, slice } => {
                let m = confusion::size_metrics(r, p, self.spacing, slice)?;
                side(s, m.area_ref, m.area_pred)
            }
            Volume { side: s } => {
                let m = confusion::size_metrics(r, p, self.spacing, Some(0))?;
                side(s, m.vol_ref, m.vol_pred)
            }
            R2 | Mae | Mse | Rmse | Nrmse | Psnr { .. } | Ssim { .. } => {
                return Err(Error::Argument(format!("{metric} is a continuous metric")))
            }
        })
    }
}

/// Drops a trailing channel axis of extent 1 so that label images read
/// from a dataset line up with their geometry.
fn spatial<T: Element>(a: &NdArray<T>, geometry: &ImageGeometry) -> Result<NdArray<T>> {
    let nd = geometry.ndim();
    if a.ndim() == nd {
        return Ok(a.clone());
    }
    if a.ndim() == nd + 1 && a.shape()[nd] == 1 {
        return a.clone().squeeze_to(nd);
    }
    Err(Error::Argument(format!("image of shape {:?} does not match a {nd}-D geometry", a.shape())))
}

/// Evaluates every label of `labels` with every metric, in that order.
pub fn evaluate_segmentation<T: Element>(
    reference: &NdArray<T>,
    reference_geometry: &ImageGeometry,
    prediction: &NdArray<T>,
    prediction_geometry: &ImageGeometry,
    labels: &LabelMap,
    metrics: &[MetricSpec],
    subject_id: &str,
) -> Result<Vec<EvaluationResult>> {
    if let Some(m) = metrics.iter().find(|m| m.is_continuous()) {
        return Err(Error::Argument(format!("{m} is a continuous metric; use evaluate_continuous")));
    }
    let reference = spatial(reference, reference_geometry)?;
    let prediction = spatial(prediction, prediction_geometry)?;
    metrics::check_same_shape(reference.shape(), prediction.shape())?;
    if !reference_geometry.spacing_matches(prediction_geometry, SPACING_TOLERANCE) {
        return Err(Error::Evaluation(format!(
            "subject {subject_id}: reference spacing {:?} differs from prediction spacing {:?}",
            reference_geometry.spacing, prediction_geometry.spacing
        )));
    }
    let spacing = &reference_geometry.spacing;
    let mut out = Vec::with_capacity(labels.len() * metrics.len());
    for (value, name) in labels.entries() {
        let pair = LabelPair {
            reference: confusion::binarize(&reference, *value),
            prediction: confusion::binarize(&prediction, *value),
            spacing,
            cm: OnceCell::new(),
            distances: OnceCell::new(),
        };
        if pair.cm().reference_positives() == 0 && pair.cm().prediction_positives() == 0 {
            log::warn!("subject {subject_id}: label {name} absent from reference and prediction");
        }
        for m in metrics {
            out.push(EvaluationResult {
                subject_id: subject_id.to_string(),
                label: name.clone(),
                metric: m.name(),
                value: pair.value(m)?,
            });
        }
    }
    Ok(out)
}

/// Label column value of continuous results.
pub const NO_LABEL: &str = "-";

/// Intensity metrics on a reference/prediction pair; one row per metric.
pub fn evaluate_continuous<T: Element>(
    reference: &NdArray<T>,
    prediction: &NdArray<T>,
    metrics: &[MetricSpec],
    subject_id: &str,
) -> Result<Vec<EvaluationResult>> {
    metrics::check_same_shape(reference.shape(), prediction.shape())?;
    let errors = OnceCell::new();
    let err = || -> Result<metrics::ErrorMetrics> {
        if let Some(e) = errors.get() {
            return Ok(*e);
        }
        let e = metrics::error_metrics(reference, prediction)?;
        let _ = errors.set(e);
        Ok(e)
    };
    let mut out = Vec::with_capacity(metrics.len());
    for m in metrics {
        use MetricSpec::*;
        let value = match *m {
            R2 => err()?.r2,
            Mae => err()?.mae,
            Mse => err()?.mse,
            Rmse => err()?.rmse,
            Nrmse => err()?.nrmse,
            Psnr { data_range } => metrics::psnr(reference, prediction, data_range)?,
            Ssim { data_range } => {
                metrics::ssim(reference, prediction, &SsimParams { data_range, ..SsimParams::default() })?
            }
            _ => return Err(Error::Argument(format!("{m} is a segmentation metric; use evaluate_segmentation"))),
        };
        out.push(EvaluationResult {
            subject_id: subject_id.to_string(),
            label: NO_LABEL.to_string(),
            metric: m.name(),
            value,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::metric::MetricParams;

    #[test]
    fn label_file_parsing() {
        let m = LabelMap::parse("1\tWhiteMatter\n2\tGreyMatter\n\n").unwrap();
        assert_eq!(m.entries(), &[(1, "WhiteMatter".to_string()), (2, "GreyMatter".to_string())]);
        assert!(LabelMap::parse("1 WhiteMatter").is_err());
        assert!(LabelMap::parse("1\tA\n1\tB").is_err());
        assert!(LabelMap::parse("1\tA\n2\tA").is_err());
        assert!(LabelMap::parse("x\tA").is_err());
    }

    #[test]
    fn spacing_mismatch_is_an_evaluation_error() {
        let a = NdArray::<u8>::zeros(vec![2, 2]).unwrap();
        let g1 = ImageGeometry::with_spacing(vec![1.0, 1.0]).unwrap();
        let g2 = ImageGeometry::with_spacing(vec![1.0, 1.1]).unwrap();
        let labels = LabelMap::parse("1\tfg").unwrap();
        let metrics = MetricSpec::parse_list("DICE", &MetricParams::default()).unwrap();
        assert!(matches!(evaluate_segmentation(&a, &g1, &a, &g2, &labels, &metrics, "s"), Err(Error::Evaluation(_))));
        let rows = evaluate_segmentation(&a, &g1, &a, &g1, &labels, &metrics, "s").unwrap();
        assert!(rows[0].value.is_nan());
    }

    #[test]
    fn continuous_rows_have_no_label() {
        let r = NdArray::new(vec![2], vec![0.0f32, 2.0]).unwrap();
        let p = NdArray::new(vec![2], vec![1.0f32, 1.0]).unwrap();
        let metrics = MetricSpec::parse_list("NRMSE,MAE", &MetricParams::default()).unwrap();
        let rows = evaluate_continuous(&r, &p, &metrics, "s").unwrap();
        assert_eq!(rows[0].label, "-");
        assert_eq!((rows[0].value, rows[1].value), (0.5, 1.0));
        let q = NdArray::new(vec![3], vec![1.0f32, 1.0, 1.0]).unwrap();
        assert!(evaluate_continuous(&r, &q, &metrics, "s").is_err());
    }
}
