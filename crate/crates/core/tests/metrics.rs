mod common;

use common::oracles;
use miakit::metrics::confusion::{auc, icc, kappa, probabilistic_distance};
use miakit::metrics::{
    agreement_metrics, confusion, distance_transform, error_metrics, extract_surface, information_metrics,
    mahalanobis, pair_counting, psnr, ratio_metrics, size_metrics, ssim, ConfusionMatrix, SsimParams,
    SurfaceDistances,
};
use miakit::NdArray;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mask(rng: &mut ChaCha8Rng, shape: &[usize]) -> NdArray<u8> {
    let density: f64 = rng.gen_range(0.15..0.6);
    let n: usize = shape.iter().product();
    let mut data: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(density))).collect();
    if data.iter().all(|&v| v == 0) {
        data[rng.gen_range(0..n)] = 1;
    }
    NdArray::new(shape.to_vec(), data).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= tol
}

/// 2x2 block of ones in a 4x4 image; the prediction is its top row.
fn fixture_t() -> (NdArray<u8>, NdArray<u8>) {
    let r = NdArray::from_fn(vec![1, 4, 4], |i| u8::from(matches!(i, 5 | 6 | 9 | 10))).unwrap();
    let p = NdArray::from_fn(vec![1, 4, 4], |i| u8::from(matches!(i, 5 | 6))).unwrap();
    (r, p)
}

#[test]
fn fixture_t_golden_values() {
    let (r, p) = fixture_t();
    let cm = confusion(&r, &p).unwrap();
    assert_eq!(cm, ConfusionMatrix::new(2, 0, 12, 2));
    let m = ratio_metrics(&cm, 1.0);
    assert!((m.dice - 0.6667).abs() < 1e-3);
    assert_eq!(m.jaccard, 0.5);
    assert_eq!(m.sensitivity, 0.5);
    assert_eq!(m.specificity, 1.0);
    assert_eq!(m.precision, 1.0);
    assert_eq!(m.accuracy, 0.875);
    assert!((m.volume_similarity - 0.6667).abs() < 1e-3);

    let pc = pair_counting(&cm).unwrap();
    let (ri, ari) = oracles::pair_indices(r.data(), p.data());
    assert!((ri - 92.0 / 120.0).abs() < 1e-15);
    assert!(close(pc.rand_index, ri, 1e-12) && close(pc.adjusted_rand_index, ari, 1e-12));

    let info = information_metrics(&cm);
    let (mi, _) = oracles::information(r.data(), p.data());
    assert!((mi - 0.294).abs() < 1e-3);
    assert!(close(info.mutual_information, mi, 1e-12));

    let ag = agreement_metrics(&r, &p, &cm).unwrap();
    assert!(close(ag.kappa, 0.6, 1e-12));
    assert_eq!(ag.auc, 0.75);
    assert_eq!(ag.probabilistic_distance, 0.5);
    assert_eq!(ag.global_consistency_error, 0.1875);

    let sizes = size_metrics(&r, &p, &[1.0, 1.0, 1.0], Some(0)).unwrap();
    assert_eq!((sizes.area_ref, sizes.area_pred), (4.0, 2.0));
}

#[test]
fn trivial_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = random_mask(&mut rng, &[5, 5, 5]);
    let cm = confusion(&r, &r).unwrap();
    assert_eq!((cm.fp, cm.fn_), (0, 0));
    let m = ratio_metrics(&cm, 1.0);
    assert_eq!((m.dice, m.jaccard), (1.0, 1.0));
    let pc = pair_counting(&cm).unwrap();
    assert_eq!((pc.rand_index, pc.adjusted_rand_index), (1.0, 1.0));
    let info = information_metrics(&cm);
    assert!(info.variation_of_information.abs() < 1e-12);
    let ag = agreement_metrics(&r, &r, &cm).unwrap();
    assert_eq!((ag.kappa, ag.icc, ag.probabilistic_distance, ag.global_consistency_error), (1.0, 1.0, 0.0, 0.0));

    let complement = r.map(|v| 1 - v);
    let cm = confusion(&r, &complement).unwrap();
    assert_eq!((cm.tp, cm.tn), (0, 0));

    // Independent marginals: joint = product of marginals.
    let indep = ConfusionMatrix::new(1, 1, 1, 1);
    assert!(information_metrics(&indep).mutual_information.abs() < 1e-15);

    // All-ones prediction against a half-filled reference.
    let half = NdArray::from_fn(vec![4, 4], |i| u8::from(i < 8)).unwrap();
    let ones = NdArray::full(vec![4, 4], 1u8).unwrap();
    assert_eq!(auc(&confusion(&half, &ones).unwrap()), 0.5);

    let shapes = NdArray::<u8>::zeros(vec![3, 3]).unwrap();
    assert!(confusion(&r, &shapes).is_err());
}

#[test]
fn confusion_metrics_match_brute_force() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_mask(&mut rng, &[5, 5, 5]);
        let p = random_mask(&mut rng, &[5, 5, 5]);
        let (rd, pd) = (r.data(), p.data());
        let cm = confusion(&r, &p).unwrap();
        let (tp, fp, tn, fn_) = oracles::counts(rd, pd);
        assert_eq!((cm.tp, cm.fp, cm.tn, cm.fn_), (tp as u64, fp as u64, tn as u64, fn_ as u64));

        let pc = pair_counting(&cm).unwrap();
        let (ri, ari) = oracles::pair_indices(rd, pd);
        assert!(close(pc.rand_index, ri, 1e-10), "seed {seed}: RI {} vs {ri}", pc.rand_index);
        assert!(close(pc.adjusted_rand_index, ari, 1e-10), "seed {seed}: ARI");

        let info = information_metrics(&cm);
        let (mi, voi) = oracles::information(rd, pd);
        assert!(close(info.mutual_information, mi, 1e-12), "seed {seed}: MI");
        assert!(close(info.variation_of_information, voi, 1e-12), "seed {seed}: VOI");

        assert!(close(kappa(&cm), oracles::kappa(rd, pd), 1e-10));
        assert!(close(auc(&cm), (tp / (tp + fn_) + tn / (tn + fp)) / 2.0, 1e-12));
        let rf: Vec<f64> = rd.iter().map(|&v| v as f64).collect();
        let pf: Vec<f64> = pd.iter().map(|&v| v as f64).collect();
        assert!(close(icc(&r, &p).unwrap(), oracles::icc(&rf, &pf), 1e-10));
        assert!(close(probabilistic_distance(&r, &p).unwrap(), (fn_ + fp) / (2.0 * tp), 1e-12));

        let m = ratio_metrics(&cm, 2.0);
        assert!(close(m.dice, 2.0 * tp / (2.0 * tp + fp + fn_), 1e-12));
        assert!(close(m.fallout, fp / (fp + tn), 1e-12));
        assert!(close(m.false_negative_rate, fn_ / (fn_ + tp), 1e-12));
        let (pr, se) = (tp / (tp + fp), tp / (tp + fn_));
        assert!(close(m.f_measure, 5.0 * pr * se / (4.0 * pr + se), 1e-12));
    }
}

#[test]
fn distance_metrics_match_all_pairs() {
    let spacing = [1.0, 0.7, 1.3];
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let r = random_mask(&mut rng, &[5, 5, 5]);
        let p = random_mask(&mut rng, &[5, 5, 5]);
        let o = oracles::SurfaceOracle::new(r.data(), p.data(), &[5, 5, 5], &spacing);
        let d = SurfaceDistances::compute(&r, &p, &spacing).unwrap();
        for q in [50.0, 95.0, 100.0] {
            assert!(close(d.hausdorff(q).unwrap(), o.hausdorff(q), 1e-9), "seed {seed} HD{q}");
        }
        assert!(close(d.average(), o.average(), 1e-9));
        for tol in [0.0, 0.7, 1.0, 1.5] {
            let s = d.surface_metrics(tol).unwrap();
            let (a, b, c) = o.overlap(tol);
            assert!(close(s.overlap_ref, a, 1e-9) && close(s.overlap_pred, b, 1e-9) && close(s.surface_dice, c, 1e-9));
        }
        let m = mahalanobis(&r, &p, &spacing).unwrap();
        assert!(close(m, oracles::mahalanobis(r.data(), p.data(), &[5, 5, 5], &spacing), 1e-9), "seed {seed}");
    }
}

#[test]
fn surface_matches_neighbour_check() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_mask(&mut rng, &[4, 6, 5]);
        assert_eq!(extract_surface(&m).points(), oracles::surface(m.data(), &[4, 6, 5]));
    }
}

#[test]
fn distance_transform_is_exact() {
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let m = random_mask(&mut rng, &[6, 6, 6]);
        // Dyadic spacings keep every intermediate exact.
        let spacing = [1.0, 2.0, 0.5];
        let field = distance_transform(&m, &spacing).unwrap();
        let brute = oracles::distance_field(m.data(), &[6, 6, 6], &spacing);
        assert_eq!(field.data(), &brute[..], "seed {seed}");

        let spacing = [0.9, 1.3, 0.7];
        let field = distance_transform(&m, &spacing).unwrap();
        let brute = oracles::distance_field(m.data(), &[6, 6, 6], &spacing);
        let worst = field.data().iter().zip(&brute).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-12, "seed {seed}: {worst}");
    }
}

#[test]
fn mahalanobis_of_unit_variance_blobs() {
    // Corners of a cube of half-side 1: per-axis variance 1, no covariance.
    let blob = |centre_x: usize| {
        NdArray::from_fn(vec![5, 5, 8], |i| {
            let idx = oracles::unravel(i, &[5, 5, 8]);
            u8::from(
                (idx[0] == 1 || idx[0] == 3) && (idx[1] == 1 || idx[1] == 3) && (idx[2] + 1 == centre_x || idx[2] == centre_x + 1),
            )
        })
        .unwrap()
    };
    let (a, b) = (blob(2), blob(4));
    assert!((mahalanobis(&a, &b, &[1.0, 1.0, 1.0]).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(mahalanobis(&a, &a, &[1.0, 1.0, 1.0]).unwrap(), 0.0);
}

#[test]
fn surface_dice_after_one_voxel_shift() {
    let a = NdArray::from_fn(vec![1, 8], |i| u8::from(i == 3)).unwrap();
    let b = NdArray::from_fn(vec![1, 8], |i| u8::from(i == 4)).unwrap();
    let d = SurfaceDistances::compute(&a, &b, &[1.0, 1.0]).unwrap();
    assert_eq!(d.average(), 1.0);
    assert_eq!(d.surface_metrics(1.0).unwrap().surface_dice, 1.0);
    assert_eq!(d.surface_metrics(0.5).unwrap().surface_dice, 0.0);
    let o = oracles::SurfaceOracle::new(a.data(), b.data(), &[1, 8], &[1.0, 1.0]);
    assert_eq!(o.overlap(0.5).2, 0.0);
}

#[test]
fn ssim_matches_sliding_window_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let x: Vec<f64> = (0..256).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
        let range = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
        let (xa, ya) = (NdArray::new(vec![16, 16], x.clone()).unwrap(), NdArray::new(vec![16, 16], y.clone()).unwrap());
        let got = ssim(&xa, &ya, &SsimParams::default()).unwrap();
        let want = oracles::ssim_2d(&x, &y, 16, 16, range);
        assert!((got - want).abs() <= 1e-7, "{got} vs {want}");
        assert_eq!(ssim(&xa, &xa, &SsimParams::default()).unwrap(), 1.0);
        let symmetric = SsimParams { data_range: Some(range), ..SsimParams::default() };
        assert!((ssim(&xa, &ya, &symmetric).unwrap() - ssim(&ya, &xa, &symmetric).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn ssim_of_inverted_contrast_is_negative() {
    let x = NdArray::from_fn(vec![9, 9, 9], |i| ((i * 7919) % 17) as f64).unwrap();
    let (lo, hi) = (0.0, 16.0);
    let inverted = x.map(|v| hi + lo - v);
    assert!(ssim(&x, &inverted, &SsimParams::default()).unwrap() < 0.0);
    assert_eq!(ssim(&x, &x, &SsimParams::default()).unwrap(), 1.0);
}

#[test]
fn psnr_scale_invariance() {
    let r = NdArray::from_fn(vec![32], |i| (i % 5) as f64).unwrap();
    let p = NdArray::from_fn(vec![32], |i| (i % 5) as f64 + if i % 3 == 0 { 0.25 } else { -0.125 }).unwrap();
    let a = psnr(&r, &p, Some(4.0)).unwrap();
    let b = psnr(&r.map(|v| v * 2.0), &p.map(|v| v * 2.0), Some(8.0)).unwrap();
    assert!((a - b).abs() < 1e-12);
    let flat = NdArray::full(vec![32], 1.0f64).unwrap();
    assert!(psnr(&flat, &p, None).is_err());
}

fn mask_pair() -> impl Strategy<Value = (NdArray<u8>, NdArray<u8>)> {
    (proptest::collection::vec(0u8..2, 48), proptest::collection::vec(0u8..2, 48)).prop_map(|(a, b)| {
        (NdArray::new(vec![3, 4, 4], a).unwrap(), NdArray::new(vec![3, 4, 4], b).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn confusion_invariants((r, p) in mask_pair()) {
        let cm = confusion(&r, &p).unwrap();
        prop_assert_eq!(cm.n(), 48);
        let sw = confusion(&p, &r).unwrap();
        prop_assert_eq!(sw, cm.swapped());
        let (m, ms) = (ratio_metrics(&cm, 1.0), ratio_metrics(&sw, 1.0));
        prop_assert!(close(m.dice, 2.0 * m.jaccard / (1.0 + m.jaccard), 1e-12));
        prop_assert!(close(m.f_measure, m.dice, 1e-12));
        prop_assert!(close(m.sensitivity, ms.precision, 0.0));
        for (a, b) in [(m.dice, ms.dice), (m.jaccard, ms.jaccard), (m.volume_similarity, ms.volume_similarity)] {
            prop_assert!(close(a, b, 1e-15));
        }
        for (_, v) in m.entries() {
            prop_assert!(v.is_nan() || (0.0..=1.0).contains(&v));
        }
        let (pc, pcs) = (pair_counting(&cm).unwrap(), pair_counting(&sw).unwrap());
        prop_assert!(close(pc.rand_index, pcs.rand_index, 1e-15) && close(pc.adjusted_rand_index, pcs.adjusted_rand_index, 1e-12));
        prop_assert!(pc.adjusted_rand_index.is_nan() || (-1.0..=1.0 + 1e-12).contains(&pc.adjusted_rand_index));
        let (i, is) = (information_metrics(&cm), information_metrics(&sw));
        prop_assert!(close(i.mutual_information, is.mutual_information, 1e-12));
        prop_assert!(close(i.variation_of_information, is.variation_of_information, 1e-12));
        prop_assert!(i.variation_of_information >= -1e-12);
        let k = kappa(&cm);
        prop_assert!(k.is_nan() || (-1.0 - 1e-12..=1.0 + 1e-12).contains(&k));
    }

    #[test]
    fn distance_invariants((r, p) in mask_pair()) {
        prop_assume!(r.data().contains(&1) && p.data().contains(&1));
        let spacing = [1.5, 0.75, 1.0];
        let d = SurfaceDistances::compute(&r, &p, &spacing).unwrap();
        let s = SurfaceDistances::compute(&p, &r, &spacing).unwrap();
        let mut last = 0.0;
        for q in [10.0, 50.0, 95.0, 100.0] {
            let h = d.hausdorff(q).unwrap();
            prop_assert_eq!(h, s.hausdorff(q).unwrap());
            prop_assert!(h >= last);
            last = h;
        }
        prop_assert!(close(d.average(), s.average(), 1e-12));
        let doubled = SurfaceDistances::compute(&r, &p, &[3.0, 1.5, 2.0]).unwrap();
        prop_assert_eq!(doubled.hausdorff(95.0).unwrap(), 2.0 * d.hausdorff(95.0).unwrap());
        prop_assert!(close(doubled.average(), 2.0 * d.average(), 1e-12));
        let mut last = 0.0;
        for tol in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let sd = d.surface_metrics(tol).unwrap().surface_dice;
            prop_assert_eq!(sd, s.surface_metrics(tol).unwrap().surface_dice);
            prop_assert!((0.0..=1.0).contains(&sd) && sd >= last);
            last = sd;
        }
    }

    #[test]
    fn error_metric_invariants(pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..40), rot in 0usize..40) {
        let (r, p): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
        let n = r.len();
        let ra = NdArray::new(vec![n], r.clone()).unwrap();
        let pa = NdArray::new(vec![n], p.clone()).unwrap();
        let m = error_metrics(&ra, &pa).unwrap();
        prop_assert!((m.mse - m.rmse * m.rmse).abs() <= 1e-12 * m.mse.max(1.0));
        prop_assert!(m.mae <= m.rmse + 1e-12);
        let k = rot % n;
        let rr = NdArray::new(vec![n], [&r[k..], &r[..k]].concat()).unwrap();
        let pr = NdArray::new(vec![n], [&p[k..], &p[..k]].concat()).unwrap();
        let mp = error_metrics(&rr, &pr).unwrap();
        prop_assert!(close(m.mae, mp.mae, 1e-9) && close(m.mse, mp.mse, 1e-9) && close(m.r2, mp.r2, 1e-9));
        let mean = r.iter().sum::<f64>() / n as f64;
        let baseline = NdArray::full(vec![n], mean).unwrap();
        prop_assert!(error_metrics(&ra, &baseline).unwrap().r2.abs() < 1e-9);
    }
}
