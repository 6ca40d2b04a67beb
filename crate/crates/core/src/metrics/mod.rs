//! Segmentation and reconstruction metrics.
//!
//! Metrics never abort on degenerate input. A zero denominator or an empty
//! mask yields NaN and a `log::warn!` naming the metric, so that a batch over
//! many subjects survives one empty label. Argument errors are reserved for
//! malformed calls (shape mismatch, invalid parameters).

pub mod confusion;
pub mod continuous;
pub mod distance;

pub use confusion::{
    agreement_metrics, binarize, confusion, information_metrics, pair_counting, ratio_metrics, size_metrics,
    AgreementMetrics, ConfusionMatrix, InformationMetrics, PairCounting, RatioMetrics, SizeMetrics,
};
pub use continuous::{error_metrics, psnr, ssim, ErrorMetrics, SsimParams};
pub use distance::{
    average_distance, distance_transform, extract_surface, hausdorff, mahalanobis, percentile, surface_metrics,
    SurfaceDistances, SurfaceMetrics, SurfaceSet,
};

use crate::error::{Error, Result};

pub(crate) fn undefined(metric: &str, why: &str) -> f64 {
    log::warn!("{metric} undefined: {why}; reporting NaN");
    f64::NAN
}

/// `num / den`, or NaN with a warning when `den` is zero.
pub(crate) fn ratio(metric: &str, num: f64, den: f64) -> f64 {
    if den == 0.0 {
        undefined(metric, "zero denominator")
    } else {
        num / den
    }
}

pub(crate) fn check_same_shape(a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::Argument(format!("shape mismatch: reference {a:?} vs prediction {b:?}")));
    }
    Ok(())
}
