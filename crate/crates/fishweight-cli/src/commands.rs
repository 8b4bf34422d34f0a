use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use fishweight::augment::{augment_pair, AugmentConfig};
use fishweight::dataset::{self, Dataset};
use fishweight::fitting::{self, FitReport, ModelKind, PowerLawModel, RansacConfig};
use fishweight::imaging::{self, mask_area};
use fishweight::synth::{self, SilhouetteSpec, SynthConfig};
use fishweight::trainmath::{lr_at, LrSchedule};

use crate::io_util::{to_json_bytes, write_atomic, write_via_path_atomic};
use crate::{
    AugmentArgs, EvalArgs, FitArgs, FormatArg, GenSamplesArgs, GenSilhouettesArgs, KindArg,
    MethodArg, PredictArgs, ScheduleArgs,
};

fn fmt(value: f64) -> String {
    format!("{value}")
}

fn load_dataset(path: &Path, schema: crate::SchemaArg) -> Result<Dataset> {
    dataset::load_samples(path, schema.into())
        .with_context(|| format!("loading samples from {}", path.display()))
}

pub fn gen_samples(args: GenSamplesArgs) -> Result<()> {
    let cfg = SynthConfig {
        a: args.a,
        b: args.b,
        n: args.n,
        area_range: (args.area_min, args.area_max),
        ln_noise_sigma: args.sigma,
        outlier_fraction: args.outlier_fraction,
        outlier_multipliers: args.outlier_multipliers.clone(),
        seed: args.seed,
    };
    let (ds, truth) = synth::gen_samples(&cfg)?;

    write_via_path_atomic(&args.out, |tmp| {
        dataset::save_samples(&ds, tmp).map_err(Into::into)
    })?;

    if let Some(truth_out) = &args.truth_out {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "is_outlier"])?;
        for (sample, flag) in ds.iter().zip(&truth) {
            w.write_record([sample.id.as_str(), if *flag { "1" } else { "0" }])?;
        }
        write_atomic(truth_out, &w.into_inner()?)?;
    }

    println!("{}", serde_json::to_string(&cfg)?);
    Ok(())
}

pub fn gen_silhouettes(args: GenSilhouettesArgs) -> Result<()> {
    if args.count == 0 {
        bail!("--count must be at least 1");
    }
    if !(args.length_max >= args.length_min && args.length_min > 0.0) {
        bail!("need 0 < --length-min <= --length-max");
    }
    let ext = args.format.extension();
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);

    let mut sidecar = csv::Writer::from_writer(Vec::new());
    sidecar.write_record(["id", "mask_path", "weight_g", "mm_per_pixel", "cohort"])?;

    for i in 0..args.count {
        let length = if args.length_max > args.length_min {
            rng.random_range(args.length_min..args.length_max)
        } else {
            args.length_min
        };
        let body = SilhouetteSpec {
            body_length_mm: length,
            aspect: args.aspect,
            fins: false,
            mm_per_pixel: args.mm_per_pixel,
            ..SilhouetteSpec::default()
        };
        let whole = SilhouetteSpec {
            fins: true,
            ..body.clone()
        };

        let whole_mask = synth::gen_silhouette(&whole)?;
        let body_mask = synth::gen_silhouette(&body)?;
        let weight = args.a * mask_area(&whole_mask).powf(args.b);

        let whole_name = format!("fish-{i:04}_whole.{ext}");
        let body_name = format!("fish-{i:04}_nofins.{ext}");
        write_via_path_atomic(&args.out_dir.join(&whole_name), |tmp| {
            imaging::io::write_mask(tmp, &whole_mask).map_err(Into::into)
        })?;
        write_via_path_atomic(&args.out_dir.join(&body_name), |tmp| {
            imaging::io::write_mask(tmp, &body_mask).map_err(Into::into)
        })?;

        sidecar.write_record([
            format!("fish-{i:04}-whole"),
            whole_name,
            fmt(weight),
            fmt(args.mm_per_pixel),
            "whole".to_string(),
        ])?;
        sidecar.write_record([
            format!("fish-{i:04}-nofins"),
            body_name,
            fmt(weight),
            fmt(args.mm_per_pixel),
            "no-fins".to_string(),
        ])?;
    }
    write_atomic(&args.out_dir.join("masks.csv"), &sidecar.into_inner()?)?;

    println!(
        "{}",
        serde_json::json!({
            "count": args.count,
            "length_min_mm": args.length_min,
            "length_max_mm": args.length_max,
            "aspect": args.aspect,
            "mm_per_pixel": args.mm_per_pixel,
            "a": args.a,
            "b": args.b,
            "seed": args.seed,
        })
    );
    Ok(())
}

fn residual_csv(report: &FitReport, ds: &Dataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "id",
        "area_cm2",
        "weight_g",
        "predicted_g",
        "ln_area",
        "ln_weight",
        "ln_predicted",
        "ln_residual",
        "inlier",
    ])?;
    for (i, sample) in ds.iter().enumerate() {
        let predicted = fitting::predict(&report.model, sample.area_cm2)?;
        w.write_record([
            sample.id.clone(),
            fmt(sample.area_cm2),
            fmt(sample.weight_g),
            fmt(predicted),
            fmt(sample.area_cm2.ln()),
            fmt(sample.weight_g.ln()),
            fmt(predicted.ln()),
            fmt(report.residuals[i]),
            (if report.inlier_flags[i] { "1" } else { "0" }).to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn fit(args: FitArgs) -> Result<()> {
    let ds = load_dataset(&args.data, args.schema)?;
    let report = match (args.kind, args.method) {
        (KindArg::OneFactor, MethodArg::LogMse) => fitting::fit_one_factor_log(&ds)?,
        (KindArg::TwoFactor, MethodArg::LogMse) => fitting::fit_two_factor_log(&ds)?,
        (kind, MethodArg::LinearMse) => fitting::fit_linear_mse(&ds, ModelKind::from(kind), None)?,
        (KindArg::TwoFactor, MethodArg::RansacLog) => {
            let cfg = RansacConfig {
                iterations: args.iterations,
                inlier_threshold: args.inlier_threshold,
                min_inlier_fraction: args.min_inlier_fraction,
                seed: args.seed,
            };
            fitting::fit_ransac_log(&ds, &cfg)?
        }
        (KindArg::OneFactor, MethodArg::RansacLog) => {
            bail!("ransac-log fits the two-factor model; use --kind two-factor")
        }
    };

    write_atomic(&args.out, &to_json_bytes(&report)?)?;
    if let Some(residuals_out) = &args.residuals_out {
        write_atomic(residuals_out, &residual_csv(&report, &ds)?)?;
    }
    println!("{}", serde_json::to_string(&report.model)?);
    Ok(())
}

fn read_model(path: &Path) -> Result<PowerLawModel> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading model from {}", path.display()))?;
    let model: PowerLawModel = serde_json::from_str(&text)
        .with_context(|| format!("parsing model JSON {}", path.display()))?;
    model.validate()?;
    Ok(model)
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let ds = load_dataset(&args.data, args.schema)?;
    let metrics = fitting::evaluate(&model, &ds)?;

    let bytes = match args.format {
        FormatArg::Json => to_json_bytes(&metrics)?,
        FormatArg::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["mape", "mae", "mse", "r_squared"])?;
            w.write_record([
                fmt(metrics.mape),
                fmt(metrics.mae),
                fmt(metrics.mse),
                metrics.r_squared.map(fmt).unwrap_or_default(),
            ])?;
            w.into_inner()?
        }
    };
    write_atomic(&args.out, &bytes)?;

    if let Some(outliers_out) = &args.outliers_out {
        let flagged = fitting::flag_outliers(&model, &ds, args.outlier_threshold)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "id",
            "area_cm2",
            "weight_g",
            "predicted_g",
            "relative_error_pct",
        ])?;
        for flag in &flagged {
            w.write_record([
                flag.sample.id.clone(),
                fmt(flag.sample.area_cm2),
                fmt(flag.sample.weight_g),
                fmt(flag.predicted_g),
                fmt(flag.relative_error_pct),
            ])?;
        }
        write_atomic(outliers_out, &w.into_inner()?)?;
    }

    println!("{}", serde_json::to_string(&metrics)?);
    Ok(())
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let area = match (args.area, &args.mask) {
        (Some(area), None) => area,
        (None, Some(mask_path)) => {
            let mm = args
                .mm_per_pixel
                .context("--mm-per-pixel is required with --mask")?;
            let mask = imaging::io::read_mask(mask_path, mm)?;
            mask_area(&mask)
        }
        _ => bail!("provide exactly one of --area or --mask"),
    };
    let grams = fitting::predict(&model, area)?;
    match args.format {
        None => println!("{grams}"),
        Some(FormatArg::Json) => println!(
            "{}",
            serde_json::json!({ "area_cm2": area, "predicted_g": grams })
        ),
        Some(FormatArg::Csv) => {
            println!("area_cm2,predicted_g");
            println!("{},{}", fmt(area), fmt(grams));
        }
    }
    Ok(())
}

pub fn augment(args: AugmentArgs) -> Result<()> {
    let img = imaging::io::read_gray(&args.image, args.mm_per_pixel)?;
    let mask = imaging::io::read_mask(&args.mask, args.mm_per_pixel)?;

    let mut cfg: AugmentConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config from {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config JSON {}", path.display()))?
        }
        None => AugmentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;

    let img_ext = args
        .image
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("pgm")
        .to_string();
    let mask_ext = args
        .mask
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("pgm")
        .to_string();

    for draw in 0..args.draws {
        let (out_img, out_mask) = augment_pair(&img, &mask, &cfg, draw)?;
        let img_path = args.out_dir.join(format!("aug-{draw:04}_image.{img_ext}"));
        let mask_path = args.out_dir.join(format!("aug-{draw:04}_mask.{mask_ext}"));
        write_via_path_atomic(&img_path, |tmp| {
            imaging::io::write_gray(tmp, &out_img).map_err(Into::into)
        })?;
        write_via_path_atomic(&mask_path, |tmp| {
            imaging::io::write_mask(tmp, &out_mask).map_err(Into::into)
        })?;
    }

    println!("{}", serde_json::to_string(&cfg)?);
    Ok(())
}

pub fn schedule(args: ScheduleArgs) -> Result<()> {
    let schedule = LrSchedule {
        lr_start: args.lr_start,
        lr_end: args.lr_end,
        total_epochs: args.epochs,
        encoder_factor: args.encoder_factor,
    };
    schedule.validate()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "base_lr", "encoder_lr"])?;
    for epoch in 0..=schedule.total_epochs {
        let base = lr_at(epoch, &schedule, false)?;
        let encoder = lr_at(epoch, &schedule, true)?;
        w.write_record([epoch.to_string(), fmt(base), fmt(encoder)])?;
    }
    write_atomic(&args.out, &w.into_inner()?)?;
    println!("{}", serde_json::to_string(&schedule)?);
    Ok(())
}
