mod common;

use common::{oracles, structure_labels, structure_volume, STRUCTURES};
use miakit::evaluation::{
    aggregate, evaluate_continuous, evaluate_segmentation, format_csv, format_statistics_csv, parse_csv,
    EvaluationResult, LabelMap, MetricParams, MetricSpec, Reducer,
};
use miakit::metrics::{binarize, confusion, SurfaceDistances};
use miakit::{ImageGeometry, NdArray};

const SHAPE: [usize; 3] = [12, 14, 11];

fn geometry() -> ImageGeometry {
    ImageGeometry::with_spacing(vec![1.5, 1.0, 0.75]).unwrap()
}

fn metrics(list: &str) -> Vec<MetricSpec> {
    MetricSpec::parse_list(list, &MetricParams::default()).unwrap()
}

fn evaluate_all(list: &str) -> Vec<EvaluationResult> {
    let g = geometry();
    let mut rows = Vec::new();
    for s in 0..4 {
        let r = structure_volume(&SHAPE, s, false);
        let p = structure_volume(&SHAPE, s, true);
        let id = format!("Subject_{}", s + 1);
        rows.extend(evaluate_segmentation(&r, &g, &p, &g, &structure_labels(), &metrics(list), &id).unwrap());
    }
    rows
}

#[test]
fn four_subjects_five_labels_give_twenty_rows() {
    let rows = evaluate_all("DICE,HDRFDST95,VOLSMTY");
    assert_eq!(rows.len(), 4 * 5 * 3);
    let text = format_csv(&rows, b';').unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "SUBJECT;LABEL;DICE;HDRFDST95;VOLSMTY");
    assert_eq!(lines.len(), 21);
    assert!(lines[1].starts_with("Subject_1;WhiteMatter;"));
    assert_eq!(text, format_csv(&evaluate_all("DICE,HDRFDST95,VOLSMTY"), b';').unwrap());
    assert_eq!(format_csv(&parse_csv(&text, b';').unwrap(), b';').unwrap(), text);

    let stats = aggregate(&rows, &Reducer::parse_list("MEAN,STD,MEDIAN").unwrap());
    assert_eq!(stats.len(), 5 * 3 * 3);
    assert!(format_statistics_csv(&stats, b';').unwrap().starts_with("LABEL;METRIC;STATISTIC;VALUE;EXCLUDED\n"));
}

#[test]
fn values_match_direct_computation() {
    let g = geometry();
    let rows = evaluate_all("DICE,HDRFDST95,VOLSMTY,AVGDIST,SURFDICE,TP");
    for (s, chunk) in rows.chunks(5 * 6).enumerate() {
        let r = structure_volume(&SHAPE, s, false);
        let p = structure_volume(&SHAPE, s, true);
        for (k, (value, _)) in STRUCTURES.iter().enumerate() {
            let (rb, pb) = (binarize(&r, *value), binarize(&p, *value));
            let (tp, fp, _, fn_) = oracles::counts(rb.data(), pb.data());
            let o = oracles::SurfaceOracle::new(rb.data(), pb.data(), &SHAPE, &g.spacing);
            let got: Vec<f64> = chunk[k * 6..k * 6 + 6].iter().map(|r| r.value).collect();
            assert!((got[0] - 2.0 * tp / (2.0 * tp + fp + fn_)).abs() < 1e-12);
            assert!((got[1] - o.hausdorff(95.0)).abs() < 1e-9);
            assert!((got[2] - (1.0 - (fn_ - fp).abs() / (2.0 * tp + fp + fn_))).abs() < 1e-12);
            assert!((got[3] - o.average()).abs() < 1e-9);
            assert!((got[4] - o.overlap(1.0).2).abs() < 1e-12);
            assert_eq!(got[5], tp);
        }
    }
}

#[test]
fn identical_prediction_is_perfect() {
    let g = geometry();
    let r = structure_volume(&SHAPE, 0, false);
    let rows = evaluate_segmentation(&r, &g, &r, &g, &structure_labels(), &metrics("DICE,HDRFDST95,HDRFDST"), "s")
        .unwrap();
    for row in rows {
        let want = if row.metric == "DICE" { 1.0 } else { 0.0 };
        assert_eq!(row.value, want, "{} {}", row.label, row.metric);
    }
}

#[test]
fn absent_label_yields_nan_and_continues() {
    let g = geometry();
    let r = structure_volume(&SHAPE, 0, false);
    let labels = LabelMap::parse("9\tMissing\n1\tWhiteMatter").unwrap();
    let rows = evaluate_segmentation(&r, &g, &r, &g, &labels, &metrics("DICE,HDRFDST95,VOLSMTY,MAHLNBS"), "s").unwrap();
    assert!(rows[..4].iter().all(|r| r.value.is_nan()));
    assert_eq!(rows[4].value, 1.0);
}

#[test]
fn metric_order_only_permutes_columns() {
    let a = evaluate_all("DICE,HDRFDST95,VOLSMTY,KAPPA");
    let b = evaluate_all("KAPPA,VOLSMTY,DICE,HDRFDST95");
    assert_eq!(a.len(), b.len());
    for x in &a {
        let y = b.iter().find(|y| y.subject_id == x.subject_id && y.label == x.label && y.metric == x.metric).unwrap();
        assert_eq!(x.value.to_bits(), y.value.to_bits());
    }
}

#[test]
fn cached_distances_match_fresh_computation() {
    let g = geometry();
    let r = structure_volume(&SHAPE, 2, false);
    let p = structure_volume(&SHAPE, 2, true);
    let rows =
        evaluate_segmentation(&r, &g, &p, &g, &structure_labels(), &metrics("HDRFDST,HDRFDST50,AVGDIST,SURFOVLP"), "s")
            .unwrap();
    let (rb, pb) = (binarize(&r, 3), binarize(&p, 3));
    let d = SurfaceDistances::compute(&rb, &pb, &g.spacing).unwrap();
    let third: Vec<f64> = rows[2 * 5..3 * 5].iter().map(|r| r.value).collect();
    let s = d.surface_metrics(1.0).unwrap();
    assert_eq!(third, vec![d.hausdorff(100.0).unwrap(), d.hausdorff(50.0).unwrap(), d.average(), s.overlap_ref, s.overlap_pred]);
    assert_eq!(confusion(&rb, &pb).unwrap().n(), SHAPE.iter().product::<usize>() as u64);
}

#[test]
fn continuous_evaluation() {
    let r = NdArray::from_fn(vec![8, 9], |i| ((i * 31) % 17) as f32).unwrap();
    let rows = evaluate_continuous(&r, &r, &metrics("MAE,PSNR,SSIM"), "s").unwrap();
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    assert_eq!(values, vec![0.0, f64::INFINITY, 1.0]);
    assert!(rows.iter().all(|r| r.label == "-"));
    let text = format_csv(&rows, b';').unwrap();
    assert_eq!(text, "SUBJECT;LABEL;MAE;PSNR;SSIM\ns;-;0;inf;1\n");
    let g = ImageGeometry::with_spacing(vec![1.0, 1.0]).unwrap();
    assert!(evaluate_segmentation(&r, &g, &r, &g, &structure_labels(), &metrics("MAE"), "s").is_err());
}
