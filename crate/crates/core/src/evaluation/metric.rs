use std::fmt;

use crate::error::{Error, Result};

/// Which mask of the pair a one-sided metric describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Reference,
    Prediction,
}

impl Side {
    fn suffix(self) -> &'static str {
        match self {
            Side::Reference => "_REF",
            Side::Prediction => "_PRED",
        }
    }
}

/// A metric together with its parameters. The report name is the table
/// abbreviation, with a percentile suffix for non-maximal Hausdorff and
/// `_REF`/`_PRED` for one-sided metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricSpec {
    Dice,
    Jaccard,
    Sensitivity,
    Specificity,
    Fallout,
    FalseNegativeRate,
    Accuracy,
    Precision,
    TruePositive,
    FalsePositive,
    TrueNegative,
    FalseNegative,
    FMeasure { beta: f64 },
    GlobalConsistencyError,
    VolumeSimilarity,
    RandIndex,
    AdjustedRandIndex,
    MutualInformation,
    VariationOfInformation,
    InterclassCorrelation,
    ProbabilisticDistance,
    Kappa,
    Auc,
    Hausdorff { percentile: f64 },
    AverageDistance,
    Mahalanobis,
    SurfaceOverlap { tolerance_mm: f64, side: Side },
    SurfaceDice { tolerance_mm: f64 },
    Area { side: Side, slice: Option<usize> },
    Volume { side: Side },
    R2,
    Mae,
    Mse,
    Rmse,
    Nrmse,
    Psnr { data_range: Option<f64> },
    Ssim { data_range: Option<f64> },
}

/// Defaults for parameterized metrics when parsing abbreviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParams {
    pub beta: f64,
    pub hausdorff_percentile: f64,
    pub tolerance_mm: f64,
    pub slice_index: Option<usize>,
    pub data_range: Option<f64>,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            beta: 1.0,
            hausdorff_percentile: 100.0,
            tolerance_mm: 1.0,
            slice_index: None,
            data_range: None,
        }
    }
}

/// Every accepted abbreviation. `HDRFDST` also takes a percentile suffix.
pub const ABBREVIATIONS: &[&str] = &[
    "DICE", "JACRD", "SNSVTY", "SPCFTY", "FALLOUT", "FNR", "ACURCY", "PRCISON", "TP", "FP", "TN", "FN", "FMEASR",
    "GCOERR", "VOLSMTY", "RNDIND", "ADJRIND", "MUTINF", "VARINFO", "ICCORR", "PROBDST", "KAPPA", "AUC", "HDRFDST",
    "AVGDIST", "MAHLNBS", "SURFOVLP", "SURFOVLP_REF", "SURFOVLP_PRED", "SURFDICE", "AREA", "AREA_REF", "AREA_PRED",
    "VOL", "VOL_REF", "VOL_PRED", "R2", "MAE", "MSE", "RMSE", "NRMSE", "PSNR", "SSIM",
];

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

impl MetricSpec {
    /// Parses one abbreviation. `SURFOVLP`, `AREA` and `VOL` expand to their
    /// reference and prediction columns.
    pub fn parse(token: &str, params: &MetricParams) -> Result<Vec<MetricSpec>> {
        use MetricSpec::*;
        let t = token.trim().to_ascii_uppercase();
        let one = |m: MetricSpec| Ok(vec![m]);
        let both = |f: &dyn Fn(Side) -> MetricSpec| Ok(vec![f(Side::Reference), f(Side::Prediction)]);
        let tol = params.tolerance_mm;
        match t.as_str() {
            "DICE" => one(Dice),
            "JACRD" => one(Jaccard),
            "SNSVTY" => one(Sensitivity),
            "SPCFTY" => one(Specificity),
            "FALLOUT" => one(Fallout),
            "FNR" => one(FalseNegativeRate),
            "ACURCY" => one(Accuracy),
            "PRCISON" => one(Precision),
            "TP" => one(TruePositive),
            "FP" => one(FalsePositive),
            "TN" => one(TrueNegative),
            "FN" => one(FalseNegative),
            "FMEASR" => one(FMeasure { beta: params.beta }),
            "GCOERR" => one(GlobalConsistencyError),
            "VOLSMTY" => one(VolumeSimilarity),
            "RNDIND" => one(RandIndex),
            "ADJRIND" => one(AdjustedRandIndex),
            "MUTINF" => one(MutualInformation),
            "VARINFO" => one(VariationOfInformation),
            "ICCORR" => one(InterclassCorrelation),
            "PROBDST" => one(ProbabilisticDistance),
            "KAPPA" => one(Kappa),
            "AUC" => one(Auc),
            "AVGDIST" => one(AverageDistance),
            "MAHLNBS" => one(Mahalanobis),
            "SURFOVLP" => both(&|side| SurfaceOverlap { tolerance_mm: tol, side }),
            "SURFOVLP_REF" => one(SurfaceOverlap { tolerance_mm: tol, side: Side::Reference }),
            "SURFOVLP_PRED" => one(SurfaceOverlap { tolerance_mm: tol, side: Side::Prediction }),
            "SURFDICE" => one(SurfaceDice { tolerance_mm: tol }),
            "AREA" => both(&|side| Area { side, slice: params.slice_index }),
            "AREA_REF" => one(Area { side: Side::Reference, slice: params.slice_index }),
            "AREA_PRED" => one(Area { side: Side::Prediction, slice: params.slice_index }),
            "VOL" => both(&|side| Volume { side }),
            "VOL_REF" => one(Volume { side: Side::Reference }),
            "VOL_PRED" => one(Volume { side: Side::Prediction }),
            "R2" => one(R2),
            "MAE" => one(Mae),
            "MSE" => one(Mse),
            "RMSE" => one(Rmse),
            "NRMSE" => one(Nrmse),
            "PSNR" => one(Psnr { data_range: params.data_range }),
            "SSIM" => one(Ssim { data_range: params.data_range }),
            "HDRFDST" => one(Hausdorff { percentile: params.hausdorff_percentile }),
            _ => match t.strip_prefix("HDRFDST").map(str::parse::<f64>) {
                Some(Ok(p)) if p > 0.0 && p <= 100.0 => one(Hausdorff { percentile: p }),
                Some(_) => Err(Error::Config(format!("invalid Hausdorff percentile in {token:?}; expected e.g. HDRFDST95"))),
                None => Err(Error::Config(format!(
                    "unknown metric {token:?}; valid metrics: {}",
                    ABBREVIATIONS.join(", ")
                ))),
            },
        }
    }

    /// Parses a comma-separated list, rejecting duplicate columns.
    pub fn parse_list(list: &str, params: &MetricParams) -> Result<Vec<MetricSpec>> {
        let mut out: Vec<MetricSpec> = Vec::new();
        for token in list.split(',').filter(|t| !t.trim().is_empty()) {
            for m in MetricSpec::parse(token, params)? {
                if out.iter().any(|o| o.name() == m.name()) {
                    return Err(Error::Config(format!("metric {} requested twice", m.name())));
                }
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no metrics requested".into()));
        }
        Ok(out)
    }

    pub fn name(&self) -> String {
        use MetricSpec::*;
        let s = match self {
            Dice => "DICE",
            Jaccard => "JACRD",
            Sensitivity => "SNSVTY",
            Specificity => "SPCFTY",
            Fallout => "FALLOUT",
            FalseNegativeRate => "FNR",
            Accuracy => "ACURCY",
            Precision => "PRCISON",
            TruePositive => "TP",
            FalsePositive => "FP",
            TrueNegative => "TN",
            FalseNegative => "FN",
            FMeasure { .. } => "FMEASR",
            GlobalConsistencyError => "GCOERR",
            VolumeSimilarity => "VOLSMTY",
            RandIndex => "RNDIND",
            AdjustedRandIndex => "ADJRIND",
            MutualInformation => "MUTINF",
            VariationOfInformation => "VARINFO",
            InterclassCorrelation => "ICCORR",
            ProbabilisticDistance => "PROBDST",
            Kappa => "KAPPA",
            Auc => "AUC",
            Hausdorff { percentile } if *percentile == 100.0 => "HDRFDST",
            Hausdorff { percentile } => return format!("HDRFDST{}", format_number(*percentile)),
            AverageDistance => "AVGDIST",
            Mahalanobis => "MAHLNBS",
            SurfaceOverlap { side, .. } => return format!("SURFOVLP{}", side.suffix()),
            SurfaceDice { .. } => "SURFDICE",
            Area { side, .. } => return format!("AREA{}", side.suffix()),
            Volume { side } => return format!("VOL{}", side.suffix()),
            R2 => "R2",
            Mae => "MAE",
            Mse => "MSE",
            Rmse => "RMSE",
            Nrmse => "NRMSE",
            Psnr { .. } => "PSNR",
            Ssim { .. } => "SSIM",
        };
        s.to_string()
    }

    /// Intensity metric rather than a label-overlap metric.
    pub fn is_continuous(&self) -> bool {
        use MetricSpec::*;
        matches!(self, R2 | Mae | Mse | Rmse | Nrmse | Psnr { .. } | Ssim { .. })
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}
