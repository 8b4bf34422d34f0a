//! Power-law weight-from-area model fitting.
//!
//! Two model families: the one-factor form `M = c·S^1.5` (isometric
//! exponent pinned at 3/2) and the two-factor form `M = a·S^b`. Each can be
//! fitted by minimizing squared error in log space (closed form / ordinary
//! least squares), in linear space (closed form for one-factor,
//! Levenberg–Marquardt for two-factor), or robustly with RANSAC over
//! `(ln S, ln M)` points.
//!
//! Log-space fitting equalizes relative-error influence across fish sizes;
//! the linear-space fit is kept because earlier practice used it and its
//! large-fish bias is worth demonstrating. All fitters take `(area cm²,
//! weight g)` pairs only — mask handling stays upstream.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Sample};
use crate::trainmath::{self, Metrics, TrainMathError};

/// Exponent of the one-factor model.
pub const ONE_FACTOR_EXPONENT: f64 = 1.5;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("dataset {0:?} is empty")]
    EmptyDataset(String),
    #[error("sample {id:?} has non-positive area {area}; fits need area > 0")]
    NonPositiveArea { id: String, area: f64 },
    #[error("need at least {needed} samples for {what}, got {got}")]
    TooFewSamples {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("degenerate design: all areas equal ({0})")]
    DegenerateDesign(f64),
    #[error(
        "no RANSAC consensus: best iteration covered {best_count}/{n} samples, \
         required {required} (best trial model a={best_a:.6}, b={best_b:.4})"
    )]
    NoConsensus {
        best_count: usize,
        required: usize,
        n: usize,
        best_a: f64,
        best_b: f64,
    },
    #[error(
        "Levenberg-Marquardt did not converge in {iterations} iterations \
         (last a={a:.6}, b={b:.4}, sse={sse:.6e})"
    )]
    NonConvergence {
        iterations: usize,
        a: f64,
        b: f64,
        sse: f64,
    },
    #[error("negative area {0} passed to predict")]
    NegativeArea(f64),
    #[error("model invalid: {0}")]
    BadModel(String),
    #[error("ransac config invalid: {0}")]
    BadRansacConfig(String),
    #[error("outlier threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Metric(#[from] TrainMathError),
}

pub type Result<T> = std::result::Result<T, FitError>;

/// Model family: exponent pinned at 3/2 or free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    OneFactor,
    TwoFactor,
}

/// How the coefficients were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    LogMse,
    LinearMse,
    RansacLog,
}

/// Fitted power law `M = a·S^b` (grams from cm²).
///
/// For one-factor models `b` is exactly 1.5 and `a` plays the role of the
/// single coefficient `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawModel {
    pub kind: ModelKind,
    pub method: FitMethod,
    pub a: f64,
    pub b: f64,
}

impl PowerLawModel {
    pub fn one_factor(c: f64, method: FitMethod) -> Self {
        Self {
            kind: ModelKind::OneFactor,
            method,
            a: c,
            b: ONE_FACTOR_EXPONENT,
        }
    }

    pub fn two_factor(a: f64, b: f64, method: FitMethod) -> Self {
        Self {
            kind: ModelKind::TwoFactor,
            method,
            a,
            b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.a <= 0.0 || !self.a.is_finite() {
            return Err(FitError::BadModel(format!(
                "coefficient a must be positive, got {}",
                self.a
            )));
        }
        if !self.b.is_finite() {
            return Err(FitError::BadModel(format!(
                "exponent b must be finite, got {}",
                self.b
            )));
        }
        if self.kind == ModelKind::OneFactor && self.b != ONE_FACTOR_EXPONENT {
            return Err(FitError::BadModel(format!(
                "one-factor models fix b = {ONE_FACTOR_EXPONENT}, got {}",
                self.b
            )));
        }
        Ok(())
    }
}

/// RANSAC settings for the robust log-space fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Absolute residual bound in ln-weight units; 0.10 admits roughly a
    /// 10% multiplicative deviation.
    pub inlier_threshold: f64,
    /// Minimum fraction of samples the consensus set must reach.
    pub min_inlier_fraction: f64,
    pub seed: u64,
}

impl RansacConfig {
    /// Minimal subset size for an exact line in `(ln S, ln M)`.
    pub const MIN_SAMPLES: usize = 2;

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(FitError::BadRansacConfig("iterations must be >= 1".into()));
        }
        if self.inlier_threshold <= 0.0 || self.inlier_threshold.is_nan() {
            return Err(FitError::BadRansacConfig(format!(
                "inlier_threshold must be positive, got {}",
                self.inlier_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.min_inlier_fraction) {
            return Err(FitError::BadRansacConfig(format!(
                "min_inlier_fraction {} outside [0, 1]",
                self.min_inlier_fraction
            )));
        }
        Ok(())
    }
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            inlier_threshold: 0.10,
            min_inlier_fraction: 0.5,
            seed: 0,
        }
    }
}

/// Fit outcome: model, fit-set metrics, per-sample inlier flags and
/// ln-scale residuals (`ln M - ln(a·S^b)`), aligned with the fit set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub model: PowerLawModel,
    pub metrics: Metrics,
    /// All true for non-robust fits; consensus membership for RANSAC.
    pub inlier_flags: Vec<bool>,
    pub residuals: Vec<f64>,
}

struct LogPoints {
    ln_area: Vec<f64>,
    ln_weight: Vec<f64>,
}

fn log_points(ds: &Dataset, what: &'static str, needed: usize) -> Result<LogPoints> {
    if ds.is_empty() {
        return Err(FitError::EmptyDataset(ds.name.clone()));
    }
    if ds.len() < needed {
        return Err(FitError::TooFewSamples {
            what,
            needed,
            got: ds.len(),
        });
    }
    let mut ln_area = Vec::with_capacity(ds.len());
    let mut ln_weight = Vec::with_capacity(ds.len());
    for sample in ds.iter() {
        if sample.area_cm2 <= 0.0 {
            return Err(FitError::NonPositiveArea {
                id: sample.id.clone(),
                area: sample.area_cm2,
            });
        }
        ln_area.push(sample.area_cm2.ln());
        ln_weight.push(sample.weight_g.ln());
    }
    Ok(LogPoints { ln_area, ln_weight })
}

/// Metrics over the fit set itself; R² is left out when undefined (single
/// sample or zero weight variance) instead of failing the fit.
fn fit_set_metrics(model: &PowerLawModel, ds: &Dataset) -> Metrics {
    let actual = ds.weights();
    let predicted: Vec<f64> = ds
        .iter()
        .map(|s| model.a * s.area_cm2.powf(model.b))
        .collect();
    Metrics {
        mape: trainmath::mape(&actual, &predicted).expect("fit set weights are positive"),
        mae: trainmath::mae(&actual, &predicted).expect("lengths match"),
        mse: trainmath::mse(&actual, &predicted).expect("lengths match"),
        r_squared: trainmath::r_squared(&actual, &predicted).ok(),
    }
}

fn ln_residuals(model: &PowerLawModel, points: &LogPoints) -> Vec<f64> {
    let ln_a = model.a.ln();
    points
        .ln_area
        .iter()
        .zip(&points.ln_weight)
        .map(|(&x, &y)| y - (ln_a + model.b * x))
        .collect()
}

fn report(model: PowerLawModel, ds: &Dataset, points: &LogPoints, flags: Vec<bool>) -> FitReport {
    FitReport {
        metrics: fit_set_metrics(&model, ds),
        residuals: ln_residuals(&model, points),
        inlier_flags: flags,
        model,
    }
}

/// One-factor fit in log space; closed form
/// `ln c = mean(ln M - 1.5·ln S)`.
pub fn fit_one_factor_log(ds: &Dataset) -> Result<FitReport> {
    let points = log_points(ds, "one-factor log fit", 1)?;
    let n = points.ln_area.len() as f64;
    let ln_c = points
        .ln_weight
        .iter()
        .zip(&points.ln_area)
        .map(|(&y, &x)| y - ONE_FACTOR_EXPONENT * x)
        .sum::<f64>()
        / n;
    let model = PowerLawModel::one_factor(ln_c.exp(), FitMethod::LogMse);
    Ok(report(model, ds, &points, vec![true; ds.len()]))
}

/// Ordinary least squares of `ln M` on `ln S`; intercept and slope as
/// cov/var.
fn ols_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    // equal-x designs must error exactly; the variance test alone can miss
    // them when the mean rounds an ulp away from the repeated value
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(FitError::DegenerateDesign(xs[0].exp()));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mean_x) * (y - mean_y);
        var += (x - mean_x) * (x - mean_x);
    }
    if var == 0.0 {
        return Err(FitError::DegenerateDesign(xs[0].exp()));
    }
    let slope = cov / var;
    let intercept = mean_y - slope * mean_x;
    Ok((intercept, slope))
}

/// Two-factor fit in log space: OLS of `ln M` on `ln S` gives
/// `b = cov/var`, `ln a = mean(ln M) - b·mean(ln S)`.
pub fn fit_two_factor_log(ds: &Dataset) -> Result<FitReport> {
    let points = log_points(ds, "two-factor log fit", 2)?;
    let (intercept, slope) = ols_line(&points.ln_area, &points.ln_weight)?;
    let model = PowerLawModel::two_factor(intercept.exp(), slope, FitMethod::LogMse);
    Ok(report(model, ds, &points, vec![true; ds.len()]))
}

const LM_MAX_ITERATIONS: usize = 200;
const LM_RELATIVE_SSE_TOL: f64 = 1e-12;

fn linear_sse(ds: &Dataset, a: f64, b: f64) -> f64 {
    ds.iter()
        .map(|s| {
            let r = s.weight_g - a * s.area_cm2.powf(b);
            r * r
        })
        .sum()
}

/// Levenberg–Marquardt on `Σ(M - a·S^b)²` for the two-factor model.
fn lm_two_factor(ds: &Dataset, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let mut lambda = 1e-3;
    let mut sse = linear_sse(ds, a, b);
    for _ in 0..LM_MAX_ITERATIONS {
        // normal equations for the step: (JᵀJ + λ·diag(JᵀJ)) δ = Jᵀr
        let (mut jtj_aa, mut jtj_ab, mut jtj_bb) = (0.0, 0.0, 0.0);
        let (mut jtr_a, mut jtr_b) = (0.0, 0.0);
        for s in ds.iter() {
            let sb = s.area_cm2.powf(b);
            let r = s.weight_g - a * sb;
            let da = sb; // -∂r/∂a
            let db = a * sb * s.area_cm2.ln(); // -∂r/∂b
            jtj_aa += da * da;
            jtj_ab += da * db;
            jtj_bb += db * db;
            jtr_a += da * r;
            jtr_b += db * r;
        }

        let mut accepted = false;
        while lambda < 1e15 {
            let m_aa = jtj_aa * (1.0 + lambda);
            let m_bb = jtj_bb * (1.0 + lambda);
            let det = m_aa * m_bb - jtj_ab * jtj_ab;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let delta_a = (jtr_a * m_bb - jtr_b * jtj_ab) / det;
            let delta_b = (jtr_b * m_aa - jtr_a * jtj_ab) / det;
            let (na, nb) = (a + delta_a, b + delta_b);
            let new_sse = if na > 0.0 {
                linear_sse(ds, na, nb)
            } else {
                f64::INFINITY
            };
            if new_sse <= sse {
                let improvement = sse - new_sse;
                a = na;
                b = nb;
                let converged = improvement <= LM_RELATIVE_SSE_TOL * sse.max(f64::MIN_POSITIVE);
                sse = new_sse;
                lambda = (lambda / 10.0).max(1e-12);
                if converged {
                    return Ok((a, b));
                }
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent step exists at any damping: numerical minimum
            return Ok((a, b));
        }
    }
    Err(FitError::NonConvergence {
        iterations: LM_MAX_ITERATIONS,
        a,
        b,
        sse,
    })
}

/// Linear-scale MSE fit: minimizes `Σ(M - a·S^b)²`.
///
/// The one-factor variant has the closed form `a = Σ(M·S^1.5) / Σ(S³)`;
/// the two-factor variant runs Levenberg–Marquardt warm-started from the
/// log fit (or from `init` when supplied).
pub fn fit_linear_mse(
    ds: &Dataset,
    kind: ModelKind,
    init: Option<&PowerLawModel>,
) -> Result<FitReport> {
    match kind {
        ModelKind::OneFactor => {
            let points = log_points(ds, "one-factor linear fit", 1)?;
            let mut num = 0.0;
            let mut den = 0.0;
            for s in ds.iter() {
                let s15 = s.area_cm2.powf(ONE_FACTOR_EXPONENT);
                num += s.weight_g * s15;
                den += s15 * s15;
            }
            if den == 0.0 {
                return Err(FitError::DegenerateDesign(0.0));
            }
            let model = PowerLawModel::one_factor(num / den, FitMethod::LinearMse);
            Ok(report(model, ds, &points, vec![true; ds.len()]))
        }
        ModelKind::TwoFactor => {
            let points = log_points(ds, "two-factor linear fit", 2)?;
            let (a0, b0) = match init {
                Some(m) => {
                    m.validate()?;
                    (m.a, m.b)
                }
                None => {
                    let warm = fit_two_factor_log(ds)?;
                    (warm.model.a, warm.model.b)
                }
            };
            let (a, b) = lm_two_factor(ds, a0, b0)?;
            if a <= 0.0 || !a.is_finite() || !b.is_finite() {
                return Err(FitError::NonConvergence {
                    iterations: LM_MAX_ITERATIONS,
                    a,
                    b,
                    sse: linear_sse(ds, a, b),
                });
            }
            let model = PowerLawModel::two_factor(a, b, FitMethod::LinearMse);
            Ok(report(model, ds, &points, vec![true; ds.len()]))
        }
    }
}

fn ransac_rng(seed: u64, iteration: u64) -> ChaCha12Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&iteration.to_le_bytes());
    bytes[16] = 0x5A; // domain tag: ransac stream
    ChaCha12Rng::from_seed(bytes)
}

/// Robust two-factor fit: classic RANSAC over `(ln S, ln M)` points.
///
/// Each iteration draws two distinct points, fits the exact line through
/// them, and counts samples whose absolute ln-residual is within the
/// threshold. The consensus-maximal set wins (ties broken by lower inlier
/// SSE, then first found); the final model is an OLS refit on that set.
/// Per-iteration generators derive from `(seed, iteration)`, so the result
/// is deterministic and independent of evaluation order.
pub fn fit_ransac_log(ds: &Dataset, cfg: &RansacConfig) -> Result<FitReport> {
    cfg.validate()?;
    let points = log_points(ds, "ransac log fit", RansacConfig::MIN_SAMPLES)?;
    let n = ds.len();
    let xs = &points.ln_area;
    let ys = &points.ln_weight;

    let mut best_flags: Option<Vec<bool>> = None;
    let mut best_count = 0usize;
    let mut best_sse = f64::INFINITY;
    let mut best_line = (0.0, 0.0);

    for iteration in 0..cfg.iterations {
        let mut rng = ransac_rng(cfg.seed, iteration as u64);
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        if xs[i] == xs[j] {
            continue; // vertical pair fits no function
        }
        let slope = (ys[j] - ys[i]) / (xs[j] - xs[i]);
        let intercept = ys[i] - slope * xs[i];

        let mut count = 0usize;
        let mut sse = 0.0;
        let mut flags = vec![false; n];
        for (k, (&x, &y)) in xs.iter().zip(ys).enumerate() {
            let r = y - (intercept + slope * x);
            if r.abs() <= cfg.inlier_threshold {
                flags[k] = true;
                count += 1;
                sse += r * r;
            }
        }
        if count > best_count || (count == best_count && sse < best_sse) {
            best_count = count;
            best_sse = sse;
            best_flags = Some(flags);
            best_line = (intercept, slope);
        }
    }

    let required =
        ((cfg.min_inlier_fraction * n as f64).ceil() as usize).max(RansacConfig::MIN_SAMPLES);
    let flags = match best_flags {
        Some(flags) if best_count >= required => flags,
        _ => {
            return Err(FitError::NoConsensus {
                best_count,
                required,
                n,
                best_a: best_line.0.exp(),
                best_b: best_line.1,
            });
        }
    };

    let inlier_x: Vec<f64> = xs
        .iter()
        .zip(&flags)
        .filter_map(|(&x, &keep)| keep.then_some(x))
        .collect();
    let inlier_y: Vec<f64> = ys
        .iter()
        .zip(&flags)
        .filter_map(|(&y, &keep)| keep.then_some(y))
        .collect();
    let (intercept, slope) = ols_line(&inlier_x, &inlier_y)?;
    let model = PowerLawModel::two_factor(intercept.exp(), slope, FitMethod::RansacLog);
    let mut result = report(model, ds, &points, flags);
    result.inlier_flags.truncate(n);
    Ok(result)
}

/// Predicted weight in grams: `a · area^b`.
pub fn predict(model: &PowerLawModel, area_cm2: f64) -> Result<f64> {
    if area_cm2 < 0.0 {
        return Err(FitError::NegativeArea(area_cm2));
    }
    model.validate()?;
    Ok(model.a * area_cm2.powf(model.b))
}

/// Metrics of a model on a dataset (held-out evaluation).
///
/// A single-sample dataset evaluates fine with `r_squared` absent; with
/// two or more samples a zero-variance weight column is an error, unlike
/// the lenient fit-set metrics inside [`FitReport`].
pub fn evaluate(model: &PowerLawModel, ds: &Dataset) -> Result<Metrics> {
    model.validate()?;
    if ds.is_empty() {
        return Err(FitError::EmptyDataset(ds.name.clone()));
    }
    let actual = ds.weights();
    let mut predicted = Vec::with_capacity(ds.len());
    for s in ds.iter() {
        predicted.push(predict(model, s.area_cm2)?);
    }
    let r_squared = if ds.len() >= 2 {
        Some(trainmath::r_squared(&actual, &predicted)?)
    } else {
        None
    };
    Ok(Metrics {
        mape: trainmath::mape(&actual, &predicted)?,
        mae: trainmath::mae(&actual, &predicted)?,
        mse: trainmath::mse(&actual, &predicted)?,
        r_squared,
    })
}

/// A sample whose recorded weight deviates from the model prediction by
/// more than the reporting threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutlierFlag {
    pub sample: Sample,
    pub predicted_g: f64,
    /// `100 · |M - predicted| / M`.
    pub relative_error_pct: f64,
}

/// Samples with relative error above `rel_threshold_pct`, sorted by
/// descending error. Useful for surfacing recording or measuring mistakes.
pub fn flag_outliers(
    model: &PowerLawModel,
    ds: &Dataset,
    rel_threshold_pct: f64,
) -> Result<Vec<OutlierFlag>> {
    if rel_threshold_pct <= 0.0 || rel_threshold_pct.is_nan() {
        return Err(FitError::BadThreshold(rel_threshold_pct));
    }
    model.validate()?;
    let mut flagged = Vec::new();
    for sample in ds.iter() {
        let predicted_g = predict(model, sample.area_cm2)?;
        let relative_error_pct = 100.0 * (sample.weight_g - predicted_g).abs() / sample.weight_g;
        if relative_error_pct > rel_threshold_pct {
            flagged.push(OutlierFlag {
                sample: sample.clone(),
                predicted_g,
                relative_error_pct,
            });
        }
    }
    flagged.sort_by(|a, b| {
        b.relative_error_pct
            .partial_cmp(&a.relative_error_pct)
            .expect("relative errors are finite")
    });
    Ok(flagged)
}
