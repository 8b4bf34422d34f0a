//! Property-based invariants across the library modules.

use proptest::prelude::*;

use fishweight::dataset::{self, Dataset, Sample};
use fishweight::fitting::{
    self, fit_linear_mse, fit_one_factor_log, fit_ransac_log, fit_two_factor_log, ModelKind,
    RansacConfig,
};
use fishweight::imaging::{
    blur, clahe, mask_area, regression_head, threshold, weight_from_log, GrayImage, MaskImage,
    ProbMap,
};
use fishweight::trainmath::{self, dice, loss_linear_dice, loss_log_dice};

fn prob_map_strategy(max_side: usize) -> impl Strategy<Value = ProbMap> {
    (2..max_side, 2..max_side).prop_flat_map(|(w, h)| {
        proptest::collection::vec(0.0f64..=1.0, w * h)
            .prop_map(move |pixels| ProbMap::new(w, h, 1.0, pixels).unwrap())
    })
}

fn mask_strategy(max_side: usize) -> impl Strategy<Value = MaskImage> {
    (2..max_side, 2..max_side).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<bool>(), w * h)
            .prop_map(move |pixels| MaskImage::new(w, h, 1.0, pixels).unwrap())
    })
}

fn pair_strategy(max_side: usize) -> impl Strategy<Value = (MaskImage, ProbMap)> {
    (2..max_side, 2..max_side).prop_flat_map(|(w, h)| {
        (
            proptest::collection::vec(any::<bool>(), w * h),
            proptest::collection::vec(0.0f64..=1.0, w * h),
        )
            .prop_map(move |(bits, probs)| {
                (
                    MaskImage::new(w, h, 1.0, bits).unwrap(),
                    ProbMap::new(w, h, 1.0, probs).unwrap(),
                )
            })
    })
}

proptest! {
    #[test]
    fn mask_area_scales_quadratically_with_calibration(
        mask in mask_strategy(24),
        scale in 0.1f64..10.0,
    ) {
        let base = mask_area(&mask);
        let rescaled = MaskImage::new(
            mask.width(),
            mask.height(),
            mask.mm_per_pixel() * scale,
            mask.pixels().to_vec(),
        )
        .unwrap();
        let expected = scale * scale * base;
        prop_assert!((mask_area(&rescaled) - expected).abs() <= 1e-9 * expected.max(1.0));
    }

    #[test]
    fn photometric_ops_preserve_shape_and_range(map in prob_map_strategy(24)) {
        let img = GrayImage::new(
            map.width(),
            map.height(),
            map.mm_per_pixel(),
            map.pixels().to_vec(),
        )
        .unwrap();
        for out in [blur(&img, 3).unwrap(), blur(&img, 5).unwrap()] {
            prop_assert_eq!(out.width(), img.width());
            prop_assert_eq!(out.height(), img.height());
            prop_assert_eq!(out.mm_per_pixel(), img.mm_per_pixel());
            prop_assert!(out.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        if img.width() >= 2 && img.height() >= 2 {
            let out = clahe(&img, 2.0, (2, 2)).unwrap();
            prop_assert_eq!(out.width(), img.width());
            prop_assert_eq!(out.height(), img.height());
            prop_assert!(out.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn regression_head_round_trip_and_monotonicity(
        map in prob_map_strategy(16),
        bump_index in any::<prop::sample::Index>(),
    ) {
        // weight_from_log(regression_head(p)) = Σp
        let sum: f64 = map.pixels().iter().sum();
        let back = weight_from_log(regression_head(&map)).unwrap();
        prop_assert!((back - sum).abs() <= 1e-9 * sum.max(1.0));

        // y_r is monotone non-decreasing in any single pixel
        let i = bump_index.index(map.pixels().len());
        let mut bumped = map.pixels().to_vec();
        bumped[i] = (bumped[i] + 0.25).min(1.0);
        let bumped = ProbMap::new(map.width(), map.height(), 1.0, bumped).unwrap();
        prop_assert!(regression_head(&bumped) >= regression_head(&map) - 1e-12);

        // masking at 0.5 keeps at most the raw mass
        let masked: Vec<f64> = map
            .pixels()
            .iter()
            .map(|&p| if p >= 0.5 { p } else { 0.0 })
            .collect();
        let masked = ProbMap::new(map.width(), map.height(), 1.0, masked).unwrap();
        prop_assert!(regression_head(&masked) <= regression_head(&map) + 1e-12);
    }

    #[test]
    fn threshold_preserves_calibration_and_binarity(
        map in prob_map_strategy(16),
        t in 0.05f64..0.95,
    ) {
        let mask = threshold(&map, t).unwrap();
        prop_assert_eq!(mask.width(), map.width());
        prop_assert_eq!(mask.mm_per_pixel(), map.mm_per_pixel());
        let expected = map.pixels().iter().filter(|&&p| p >= t).count();
        prop_assert_eq!(mask.foreground_count(), expected);
    }

    #[test]
    fn dice_is_symmetric_and_bounded_for_binary_inputs(mask in mask_strategy(16)) {
        let as_map = ProbMap::new(
            mask.width(),
            mask.height(),
            1.0,
            mask.pixels().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap();
        let flipped_mask = MaskImage::new(
            mask.width(),
            mask.height(),
            1.0,
            as_map.pixels().iter().map(|&v| v >= 0.5).collect(),
        )
        .unwrap();
        let forward = dice(&mask, &as_map, 1e-6).unwrap();
        let backward = dice(&flipped_mask, &as_map, 1e-6).unwrap();
        prop_assert!((forward - backward).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&forward));
    }

    #[test]
    fn log_dice_loss_dominates_linear((mask, map) in pair_strategy(16)) {
        let lin = loss_linear_dice(&mask, &map).unwrap();
        let log = loss_log_dice(&mask, &map).unwrap();
        prop_assert!(log.total >= lin.total - 1e-12);
        if lin.dice_value < 1.0 - 1e-9 {
            prop_assert!(log.total > lin.total);
        }
    }

    #[test]
    fn mape_scale_invariance_and_mae_homogeneity(
        pairs in proptest::collection::vec((1.0f64..1e4, 0.0f64..1e4), 1..40),
        k in 0.01f64..100.0,
    ) {
        let actual: Vec<f64> = pairs.iter().map(|&(a, _)| a).collect();
        let predicted: Vec<f64> = pairs.iter().map(|&(_, p)| p).collect();
        let scaled_actual: Vec<f64> = actual.iter().map(|a| a * k).collect();
        let scaled_predicted: Vec<f64> = predicted.iter().map(|p| p * k).collect();

        let m1 = trainmath::mape(&actual, &predicted).unwrap();
        let m2 = trainmath::mape(&scaled_actual, &scaled_predicted).unwrap();
        prop_assert!((m1 - m2).abs() <= 1e-9 * m1.max(1.0));

        let e1 = trainmath::mae(&actual, &predicted).unwrap();
        let e2 = trainmath::mae(&scaled_actual, &scaled_predicted).unwrap();
        prop_assert!((e2 - k * e1).abs() <= 1e-9 * (k * e1).max(1.0));
    }

    #[test]
    fn isometric_data_makes_all_fitters_agree(
        c in 0.05f64..0.5,
        areas in proptest::collection::vec(10.0f64..1000.0, 3..30),
    ) {
        // at least two distinct areas so the two-factor design is sound
        prop_assume!(areas.iter().any(|&a| (a - areas[0]).abs() > 1e-6));
        let samples: Vec<Sample> = areas
            .iter()
            .enumerate()
            .map(|(i, &area)| Sample::new(format!("p{i}"), area, c * area.powf(1.5)))
            .collect();
        let ds = Dataset::new("isometric", samples).unwrap();

        let fits = [
            fit_one_factor_log(&ds).unwrap(),
            fit_two_factor_log(&ds).unwrap(),
            fit_linear_mse(&ds, ModelKind::OneFactor, None).unwrap(),
            fit_linear_mse(&ds, ModelKind::TwoFactor, None).unwrap(),
            fit_ransac_log(&ds, &RansacConfig { seed: 0, ..RansacConfig::default() }).unwrap(),
        ];
        for fit in &fits {
            prop_assert!((fit.model.b - 1.5).abs() < 1e-6, "b = {}", fit.model.b);
            prop_assert!(
                (fit.model.a - c).abs() / c < 1e-6,
                "a = {} vs c = {c}",
                fit.model.a
            );
        }
    }

    #[test]
    fn csv_round_trip_preserves_samples(
        entries in proptest::collection::vec(
            (0.0f64..1e5, 0.001f64..1e6, proptest::option::of("[a-z]{1,12}")),
            1..50,
        ),
    ) {
        let samples: Vec<Sample> = entries
            .iter()
            .enumerate()
            .map(|(i, (area, weight, cohort))| Sample {
                id: format!("id{i:04}"),
                area_cm2: *area,
                weight_g: *weight,
                cohort: cohort.clone(),
            })
            .collect();
        let ds = Dataset::new("rt", samples).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        dataset::save_samples(&ds, &path).unwrap();
        let back = dataset::load_samples(&path, dataset::SampleSchema::AreaWeight).unwrap();
        prop_assert_eq!(back.samples(), ds.samples());
    }

    #[test]
    fn split_partitions_exactly(
        n in 2usize..200,
        fraction in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let samples: Vec<Sample> = (0..n)
            .map(|i| Sample::new(format!("s{i}"), 10.0 + i as f64, 100.0 + i as f64))
            .collect();
        let ds = Dataset::new("split", samples).unwrap();
        let n_train = (fraction * n as f64 + 0.5).floor() as usize;
        prop_assume!(n_train >= 1 && n_train < n);

        let result = dataset::split(&ds, fraction, seed).unwrap();
        prop_assert_eq!(result.train.len(), n_train);
        prop_assert_eq!(result.train.len() + result.validation.len(), n);
        let mut seen: Vec<&str> = result
            .train
            .iter()
            .chain(result.validation.iter())
            .map(|s| s.id.as_str())
            .collect();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), n);
    }
}

/// Brute-force oracle for the one-factor log fit: coarse grid over `ln c`
/// followed by ternary refinement of the log-space SSE.
fn brute_force_one_factor(ds: &Dataset) -> f64 {
    let terms: Vec<f64> = ds
        .iter()
        .map(|s| s.weight_g.ln() - 1.5 * s.area_cm2.ln())
        .collect();
    let sse = |ln_c: f64| -> f64 { terms.iter().map(|t| (t - ln_c) * (t - ln_c)).sum() };

    let lo = terms.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mut best = lo;
    let mut best_sse = f64::INFINITY;
    let grid = 2000;
    for i in 0..=grid {
        let candidate = lo + (hi - lo) * i as f64 / grid as f64;
        let value = sse(candidate);
        if value < best_sse {
            best_sse = value;
            best = candidate;
        }
    }
    let step = (hi - lo) / grid as f64;
    let (mut a, mut b) = (best - step, best + step);
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if sse(m1) < sse(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    ((a + b) / 2.0).exp()
}

#[test]
fn one_factor_closed_form_matches_brute_force_search() {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(99);
    for round in 0..10 {
        let n = rng.random_range(5..200);
        let samples: Vec<Sample> = (0..n)
            .map(|i| {
                let area: f64 = rng.random_range(20.0..800.0);
                let noise: f64 = rng.random_range(-0.3..0.3);
                let weight = 0.17 * area.powf(1.5) * noise.exp();
                Sample::new(format!("r{round}s{i}"), area, weight)
            })
            .collect();
        let ds = Dataset::new(format!("bf{round}"), samples).unwrap();
        let closed = fit_one_factor_log(&ds).unwrap().model.a;
        let brute = brute_force_one_factor(&ds);
        assert!(
            (closed - brute).abs() / closed < 1e-6,
            "round {round}: closed {closed} vs brute {brute}"
        );
    }
}

/// The report's fit-set MAPE must equal an independent evaluation of the
/// same model on the same set.
#[test]
fn report_metrics_are_self_consistent() {
    let (ds, _) = fishweight::synth::gen_samples(&fishweight::synth::SynthConfig {
        n: 300,
        ln_noise_sigma: 0.08,
        seed: 31,
        ..Default::default()
    })
    .unwrap();
    for report in [
        fit_one_factor_log(&ds).unwrap(),
        fit_two_factor_log(&ds).unwrap(),
        fit_linear_mse(&ds, ModelKind::TwoFactor, None).unwrap(),
    ] {
        let eval = fitting::evaluate(&report.model, &ds).unwrap();
        assert!((eval.mape - report.metrics.mape).abs() < 1e-12);
        assert!((eval.mae - report.metrics.mae).abs() < 1e-12);
    }
}
