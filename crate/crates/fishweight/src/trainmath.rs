//! Segmentation losses, regression metrics, and the learning-rate schedule.
//!
//! Pure scalar math; everything here is reentrant and safe to evaluate
//! concurrently over batches.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{MaskImage, ProbMap};

/// Clamp applied to probabilities inside the cross entropy so saturated
/// predictions cannot produce infinite loss.
pub const DEFAULT_BCE_EPS: f64 = 1e-7;
/// Additive smoothing for the soft Dice coefficient; keeps `ln(dice)`
/// finite on empty intersections.
pub const DEFAULT_DICE_SMOOTH: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TrainMathError {
    #[error("mask is {mask_w}x{mask_h} but map is {map_w}x{map_h}")]
    DimensionMismatch {
        mask_w: usize,
        mask_h: usize,
        map_w: usize,
        map_h: usize,
    },
    #[error("clamp eps {0} outside (0, 0.5)")]
    BadEps(f64),
    #[error("dice smoothing must be non-negative, got {0}")]
    BadSmooth(f64),
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("actual value {value} at index {index} must be positive for MAPE")]
    NonPositiveActual { index: usize, value: f64 },
    #[error("need at least 2 observations, got {0}")]
    TooFew(usize),
    #[error("actual values have zero variance; R² undefined")]
    ZeroVariance,
    #[error("epoch {epoch} outside schedule range 0..={total_epochs}")]
    EpochOutOfRange { epoch: u32, total_epochs: u32 },
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
}

pub type Result<T> = std::result::Result<T, TrainMathError>;

/// Composite segmentation loss with its parts recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub bce_part: f64,
    pub dice_value: f64,
}

/// Linear-scale regression metrics.
///
/// `r_squared` is `None` when the coefficient of determination is
/// undefined for the evaluated set (fewer than two samples or zero
/// variance in the actual weights).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean absolute percentage error, in percent.
    pub mape: f64,
    /// Mean absolute error, grams.
    pub mae: f64,
    /// Mean squared error, grams².
    pub mse: f64,
    pub r_squared: Option<f64>,
}

/// Linear learning-rate annealing, with a reduced rate for encoder layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_start: f64,
    pub lr_end: f64,
    pub total_epochs: u32,
    /// Divisor applied to the base rate for pre-trained encoder layers.
    pub encoder_factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            lr_start: 1e-3,
            lr_end: 1e-5,
            total_epochs: 100,
            encoder_factor: 10.0,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.lr_end <= 0.0 || self.lr_end.is_nan() || self.lr_start < self.lr_end {
            return Err(TrainMathError::BadSchedule(format!(
                "need lr_start >= lr_end > 0, got {} and {}",
                self.lr_start, self.lr_end
            )));
        }
        if self.total_epochs < 1 {
            return Err(TrainMathError::BadSchedule(
                "total_epochs must be >= 1".into(),
            ));
        }
        if self.encoder_factor < 1.0 || self.encoder_factor.is_nan() {
            return Err(TrainMathError::BadSchedule(format!(
                "encoder_factor must be >= 1, got {}",
                self.encoder_factor
            )));
        }
        Ok(())
    }
}

fn check_pair(mask: &MaskImage, map: &ProbMap) -> Result<()> {
    if mask.width() != map.width() || mask.height() != map.height() {
        return Err(TrainMathError::DimensionMismatch {
            mask_w: mask.width(),
            mask_h: mask.height(),
            map_w: map.width(),
            map_h: map.height(),
        });
    }
    Ok(())
}

/// Pixel-mean binary cross entropy between a target mask and a prediction,
/// with the prediction clamped into `[eps, 1-eps]`.
pub fn bce(mask: &MaskImage, map: &ProbMap, eps: f64) -> Result<f64> {
    check_pair(mask, map)?;
    if !(eps > 0.0 && eps < 0.5) {
        return Err(TrainMathError::BadEps(eps));
    }
    let n = map.pixels().len() as f64;
    let mut sum = 0.0;
    for (&y, &p) in mask.pixels().iter().zip(map.pixels()) {
        let p = p.clamp(eps, 1.0 - eps);
        sum -= if y { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(sum / n)
}

/// Soft Dice coefficient `(2·Σ(y·p) + smooth) / (Σy + Σp + smooth)`.
///
/// Probabilities are used as-is (no thresholding), so the value is
/// differentiable in the prediction.
pub fn dice(mask: &MaskImage, map: &ProbMap, smooth: f64) -> Result<f64> {
    check_pair(mask, map)?;
    if smooth < 0.0 {
        return Err(TrainMathError::BadSmooth(smooth));
    }
    let mut intersection = 0.0;
    let mut mask_sum = 0.0;
    let mut map_sum = 0.0;
    for (&y, &p) in mask.pixels().iter().zip(map.pixels()) {
        if y {
            intersection += p;
            mask_sum += 1.0;
        }
        map_sum += p;
    }
    Ok((2.0 * intersection + smooth) / (mask_sum + map_sum + smooth))
}

/// Composite loss `bce + (1 - dice)`.
pub fn loss_linear_dice(mask: &MaskImage, map: &ProbMap) -> Result<LossValue> {
    let bce_part = bce(mask, map, DEFAULT_BCE_EPS)?;
    let dice_value = dice(mask, map, DEFAULT_DICE_SMOOTH)?;
    Ok(LossValue {
        total: bce_part + (1.0 - dice_value),
        bce_part,
        dice_value,
    })
}

/// Composite loss `bce - ln(dice)`; penalizes low overlap harder than the
/// linear form and matches it only at perfect overlap.
pub fn loss_log_dice(mask: &MaskImage, map: &ProbMap) -> Result<LossValue> {
    let bce_part = bce(mask, map, DEFAULT_BCE_EPS)?;
    let dice_value = dice(mask, map, DEFAULT_DICE_SMOOTH)?;
    Ok(LossValue {
        total: bce_part - dice_value.ln(),
        bce_part,
        dice_value,
    })
}

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(TrainMathError::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(TrainMathError::Empty);
    }
    Ok(())
}

/// Mean absolute percentage error: `100/n · Σ |a - p| / a`.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let mut sum = 0.0;
    for (index, (&a, &p)) in actual.iter().zip(predicted).enumerate() {
        if a <= 0.0 {
            return Err(TrainMathError::NonPositiveActual { index, value: a });
        }
        sum += (a - p).abs() / a;
    }
    Ok(100.0 * sum / actual.len() as f64)
}

/// Mean absolute error, grams.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(&a, &p)| (a - p).abs())
        .sum();
    Ok(sum / actual.len() as f64)
}

/// Mean squared error, grams².
pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(&a, &p)| (a - p) * (a - p))
        .sum();
    Ok(sum / actual.len() as f64)
}

/// Coefficient of determination on linear-scale weights:
/// `1 - Σ(a-p)² / Σ(a-ā)²`.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    if actual.len() < 2 {
        return Err(TrainMathError::TooFew(actual.len()));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|&a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(TrainMathError::ZeroVariance);
    }
    let ss_res: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(&a, &p)| (a - p) * (a - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Learning rate at `epoch` under linear annealing; encoder layers get the
/// base rate divided by `encoder_factor`.
pub fn lr_at(epoch: u32, schedule: &LrSchedule, is_encoder: bool) -> Result<f64> {
    schedule.validate()?;
    if epoch > schedule.total_epochs {
        return Err(TrainMathError::EpochOutOfRange {
            epoch,
            total_epochs: schedule.total_epochs,
        });
    }
    // lerp form keeps both endpoints exact in floating point
    let progress = epoch as f64 / schedule.total_epochs as f64;
    let base = schedule.lr_start * (1.0 - progress) + schedule.lr_end * progress;
    Ok(if is_encoder {
        base / schedule.encoder_factor
    } else {
        base
    })
}
