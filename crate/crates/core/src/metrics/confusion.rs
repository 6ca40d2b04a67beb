//! Metrics computable from voxel counts of a binary reference/prediction pair.

use crate::error::{Error, Result};
use crate::metrics::{check_same_shape, ratio, undefined};
use crate::scalar::Element;
use crate::tensor::NdArray;

/// Mask of the voxels equal to `label`.
pub fn binarize<T: Element>(labels: &NdArray<T>, label: i64) -> NdArray<u8> {
    let l = label as f64;
    labels.map(|v| u8::from(v.to_f64_lossy() == l))
}

/// Voxel counts of a binary pair. Any non-zero value is foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Foreground count of the reference.
    pub fn reference_positives(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Foreground count of the prediction.
    pub fn prediction_positives(&self) -> u64 {
        self.tp + self.fp
    }

    /// The same pair with reference and prediction swapped.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix::new(self.tp, self.fn_, self.tn, self.fp)
    }
}

pub fn confusion<T: Element>(reference: &NdArray<T>, prediction: &NdArray<T>) -> Result<ConfusionMatrix> {
    check_same_shape(reference.shape(), prediction.shape())?;
    let zero = T::zero();
    let mut cm = ConfusionMatrix::default();
    for (&r, &p) in reference.data().iter().zip(prediction.data()) {
        match (r != zero, p != zero) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioMetrics {
    pub dice: f64,
    pub jaccard: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub fallout: f64,
    pub false_negative_rate: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub f_measure: f64,
    pub volume_similarity: f64,
}

impl RatioMetrics {
    /// Values keyed by their report abbreviation.
    pub fn entries(&self) -> [(&'static str, f64); 10] {
        [
            ("DICE", self.dice),
            ("JACRD", self.jaccard),
            ("SNSVTY", self.sensitivity),
            ("SPCFTY", self.specificity),
            ("FALLOUT", self.fallout),
            ("FNR", self.false_negative_rate),
            ("ACURCY", self.accuracy),
            ("PRCISON", self.precision),
            ("FMEASR", self.f_measure),
            ("VOLSMTY", self.volume_similarity),
        ]
    }
}

pub fn dice(cm: &ConfusionMatrix) -> f64 {
    let (tp, fp, fn_) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64);
    ratio("DICE", 2.0 * tp, 2.0 * tp + fp + fn_)
}

pub fn volume_similarity(cm: &ConfusionMatrix) -> f64 {
    let (tp, fp, fn_) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64);
    let den = 2.0 * tp + fp + fn_;
    if den == 0.0 {
        return undefined("VOLSMTY", "both masks empty");
    }
    1.0 - (fn_ - fp).abs() / den
}

/// F-beta score; `beta = 1` gives DICE.
pub fn f_measure(cm: &ConfusionMatrix, beta: f64) -> f64 {
    let precision = ratio("FMEASR", cm.tp as f64, cm.prediction_positives() as f64);
    let recall = ratio("FMEASR", cm.tp as f64, cm.reference_positives() as f64);
    let b2 = beta * beta;
    ratio("FMEASR", (1.0 + b2) * precision * recall, b2 * precision + recall)
}

pub fn ratio_metrics(cm: &ConfusionMatrix, beta: f64) -> RatioMetrics {
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    RatioMetrics {
        dice: dice(cm),
        jaccard: ratio("JACRD", tp, tp + fp + fn_),
        sensitivity: ratio("SNSVTY", tp, tp + fn_),
        specificity: ratio("SPCFTY", tn, tn + fp),
        fallout: ratio("FALLOUT", fp, fp + tn),
        false_negative_rate: ratio("FNR", fn_, fn_ + tp),
        accuracy: ratio("ACURCY", tp + tn, cm.n() as f64),
        precision: ratio("PRCISON", tp, tp + fp),
        f_measure: f_measure(cm, beta),
        volume_similarity: volume_similarity(cm),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCounting {
    pub rand_index: f64,
    pub adjusted_rand_index: f64,
}

fn pairs(k: u64) -> u128 {
    let k = k as u128;
    k * k.saturating_sub(1) / 2
}

/// Rand and adjusted Rand index of the two binary partitions.
pub fn pair_counting(cm: &ConfusionMatrix) -> Result<PairCounting> {
    let n = cm.n();
    if n < 2 {
        return Err(Error::Argument(format!("pair counting needs at least 2 voxels, got {n}")));
    }
    let total = pairs(n);
    let index = pairs(cm.tp) + pairs(cm.fp) + pairs(cm.fn_) + pairs(cm.tn);
    let rows = pairs(cm.tp + cm.fn_) + pairs(cm.fp + cm.tn);
    let cols = pairs(cm.tp + cm.fp) + pairs(cm.fn_ + cm.tn);
    // Pairs together in both partitions plus pairs apart in both.
    let agreeing = index + (total + index - rows - cols);
    let expected = rows as f64 * cols as f64 / total as f64;
    let max = (rows + cols) as f64 / 2.0;
    Ok(PairCounting {
        rand_index: agreeing as f64 / total as f64,
        adjusted_rand_index: ratio("ADJRIND", index as f64 - expected, max - expected),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformationMetrics {
    pub mutual_information: f64,
    pub variation_of_information: f64,
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Mutual information and variation of information, in bits.
pub fn information_metrics(cm: &ConfusionMatrix) -> InformationMetrics {
    let n = cm.n();
    if n == 0 {
        let nan = undefined("MUTINF", "no voxels");
        return InformationMetrics {
            mutual_information: nan,
            variation_of_information: nan,
        };
    }
    let n = n as f64;
    let h_ref = entropy(&[cm.tp + cm.fn_, cm.fp + cm.tn], n);
    let h_pred = entropy(&[cm.tp + cm.fp, cm.fn_ + cm.tn], n);
    let h_joint = entropy(&[cm.tp, cm.fp, cm.fn_, cm.tn], n);
    let mi = h_ref + h_pred - h_joint;
    InformationMetrics {
        mutual_information: mi,
        variation_of_information: h_ref + h_pred - 2.0 * mi,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementMetrics {
    pub global_consistency_error: f64,
    pub kappa: f64,
    pub auc: f64,
    pub icc: f64,
    pub probabilistic_distance: f64,
}

/// Zero when the cell is empty, so empty classes contribute nothing.
fn gce_term(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * (a + 2.0 * b) / (a + b)
    }
}

/// Binary closed form of the global consistency error.
pub fn global_consistency_error(cm: &ConfusionMatrix) -> f64 {
    let n = cm.n();
    if n == 0 {
        return undefined("GCOERR", "no voxels");
    }
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let e1 = gce_term(fn_, tp) + gce_term(fp, tn);
    let e2 = gce_term(fp, tp) + gce_term(fn_, tn);
    e1.min(e2) / n as f64
}

pub fn kappa(cm: &ConfusionMatrix) -> f64 {
    let n = cm.n() as f64;
    if n == 0.0 {
        return undefined("KAPPA", "no voxels");
    }
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let po = (tp + tn) / n;
    let pe = ((tp + fn_) * (tp + fp) + (fp + tn) * (fn_ + tn)) / (n * n);
    ratio("KAPPA", po - pe, 1.0 - pe)
}

/// Balanced accuracy, the area under the single-threshold ROC curve of a
/// crisp mask.
pub fn auc(cm: &ConfusionMatrix) -> f64 {
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let sensitivity = ratio("AUC", tp, tp + fn_);
    let specificity = ratio("AUC", tn, tn + fp);
    (sensitivity + specificity) / 2.0
}

/// One-way intraclass correlation with reference and prediction as the two
/// raters of every voxel.
pub fn icc<T: Element>(reference: &NdArray<T>, prediction: &NdArray<T>) -> Result<f64> {
    check_same_shape(reference.shape(), prediction.shape())?;
    let n = reference.len();
    if n < 2 {
        return Ok(undefined("ICCORR", "fewer than 2 voxels"));
    }
    let pairs = || reference.data().iter().zip(prediction.data()).map(|(r, p)| (r.to_f64_lossy(), p.to_f64_lossy()));
    let grand = pairs().map(|(r, p)| r + p).sum::<f64>() / (2 * n) as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for (r, p) in pairs() {
        let m = (r + p) / 2.0;
        ss_between += (m - grand) * (m - grand);
        ss_within += (r - m) * (r - m) + (p - m) * (p - m);
    }
    let ms_between = 2.0 * ss_between / (n - 1) as f64;
    let ms_within = ss_within / n as f64;
    Ok(ratio("ICCORR", ms_between - ms_within, ms_between + ms_within))
}

/// `sum |r - p| / (2 sum r p)` over voxel values.
pub fn probabilistic_distance<T: Element>(reference: &NdArray<T>, prediction: &NdArray<T>) -> Result<f64> {
    check_same_shape(reference.shape(), prediction.shape())?;
    let mut diff = 0.0;
    let mut joint = 0.0;
    for (r, p) in reference.data().iter().zip(prediction.data()) {
        let (r, p) = (r.to_f64_lossy(), p.to_f64_lossy());
        diff += (r - p).abs();
        joint += r * p;
    }
    Ok(ratio("PROBDST", diff, 2.0 * joint))
}

pub fn agreement_metrics<T: Element>(
    reference: &NdArray<T>,
    prediction: &NdArray<T>,
    cm: &ConfusionMatrix,
) -> Result<AgreementMetrics> {
    Ok(AgreementMetrics {
        global_consistency_error: global_consistency_error(cm),
        kappa: kappa(cm),
        auc: auc(cm),
        icc: icc(reference, prediction)?,
        probabilistic_distance: probabilistic_distance(reference, prediction)?,
    })
}

/// Foreground area on one slice (mm²) and volume (mm³) of each mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeMetrics {
    pub area_ref: f64,
    pub area_pred: f64,
    pub vol_ref: f64,
    pub vol_pred: f64,
}

/// Volumes use the full spacing product. Areas are taken on slice
/// `slice_index` of axis 0 (central slice by default) with the spacing
/// product of the remaining axes; 2-D images are a single slice.
pub fn size_metrics<T: Element>(
    reference: &NdArray<T>,
    prediction: &NdArray<T>,
    spacing: &[f64],
    slice_index: Option<usize>,
) -> Result<SizeMetrics> {
    check_same_shape(reference.shape(), prediction.shape())?;
    let shape = reference.shape();
    if spacing.len() != shape.len() {
        return Err(Error::Argument(format!("spacing {spacing:?} does not match shape {shape:?}")));
    }
    let (slices, in_plane) = if shape.len() >= 3 {
        (shape[0], spacing[1..].iter().product::<f64>())
    } else {
        (1, spacing.iter().product::<f64>())
    };
    let slice = slice_index.unwrap_or(slices / 2);
    if slice >= slices {
        return Err(Error::Argument(format!("slice {slice} outside 0..{slices}")));
    }
    let per_slice = reference.len() / slices;
    let count = |a: &NdArray<T>, range: std::ops::Range<usize>| a.data()[range].iter().filter(|&&v| v != T::zero()).count() as f64;
    let voxel: f64 = spacing.iter().product();
    let plane = slice * per_slice..(slice + 1) * per_slice;
    Ok(SizeMetrics {
        area_ref: count(reference, plane.clone()) * in_plane,
        area_pred: count(prediction, plane) * in_plane,
        vol_ref: count(reference, 0..reference.len()) * voxel,
        vol_pred: count(prediction, 0..prediction.len()) * voxel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 2x2 block of ones in a 4x4 image; the prediction is its top row.
    fn fixture_t() -> (NdArray<u8>, NdArray<u8>) {
        let r = NdArray::from_fn(vec![4, 4], |i| u8::from(matches!(i, 5 | 6 | 9 | 10))).unwrap();
        let p = NdArray::from_fn(vec![4, 4], |i| u8::from(matches!(i, 5 | 6))).unwrap();
        (r, p)
    }

    #[test]
    fn fixture_counts_and_ratios() {
        let (r, p) = fixture_t();
        let cm = confusion(&r, &p).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(2, 0, 12, 2));
        let m = ratio_metrics(&cm, 1.0);
        assert!((m.dice - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.jaccard, 0.5);
        assert_eq!(m.accuracy, 0.875);
        assert_eq!(m.f_measure, m.dice);
        assert!((m.volume_similarity - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(kappa(&cm), 0.6);
        assert_eq!(auc(&cm), 0.75);
        assert_eq!(probabilistic_distance(&r, &p).unwrap(), 0.5);
        assert_eq!(global_consistency_error(&cm), 0.1875);
        assert_eq!(pair_counting(&cm).unwrap().rand_index, 92.0 / 120.0);
    }

    #[test]
    fn empty_pair_is_nan_not_error() {
        let cm = ConfusionMatrix::new(0, 0, 10, 0);
        let m = ratio_metrics(&cm, 1.0);
        assert!(m.dice.is_nan() && m.jaccard.is_nan() && m.volume_similarity.is_nan());
        assert_eq!(m.specificity, 1.0);
        assert!(pair_counting(&ConfusionMatrix::new(1, 0, 0, 0)).is_err());
    }

    #[test]
    fn binarize_selects_label() {
        let l = NdArray::new(vec![4], vec![0u8, 2, 1, 2]).unwrap();
        assert_eq!(binarize(&l, 2).data(), &[0, 1, 0, 1]);
        assert_eq!(binarize(&l, 7).data(), &[0, 0, 0, 0]);
    }

    #[test]
    fn sizes_use_spacing() {
        let r = NdArray::from_fn(vec![3, 2, 2], |i| u8::from(i < 4)).unwrap();
        let s = size_metrics(&r, &r, &[1.0, 2.0, 3.0], Some(0)).unwrap();
        assert_eq!(s.vol_ref, 24.0);
        assert_eq!(s.area_ref, 24.0);
        assert_eq!(size_metrics(&r, &r, &[1.0, 2.0, 3.0], None).unwrap().area_pred, 0.0);
        assert!(size_metrics(&r, &r, &[1.0, 2.0, 3.0], Some(3)).is_err());
    }
}
