//! Seeded synthetic-data oracle.
//!
//! Two generators back the test suite and the `gen` command:
//!
//! * [`gen_samples`] draws allometric area–weight pairs with log-normal
//!   multiplicative noise and an exact count of injected gross recording
//!   errors, returning the ground-truth outlier flags alongside.
//! * [`gen_silhouette`] rasterizes a fish-like binary mask — a superellipse
//!   body, optionally with caudal/dorsal/pelvic fins sized so the body is
//!   about 20% smaller than the whole silhouette.
//!
//! Noise is multiplicative (log-normal) rather than additive: weighing
//! errors grow with fish size, and log-space fitting presumes exactly this
//! residual structure.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Sample};
use crate::imaging::MaskImage;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("degenerate raster: {0}")]
    DegenerateRaster(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Parameters for the area–weight sample generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Generating power-law coefficient (grams per cm^2b).
    pub a: f64,
    /// Generating exponent.
    pub b: f64,
    pub n: usize,
    /// Areas are drawn uniformly from this cm² interval.
    pub area_range: (f64, f64),
    /// Standard deviation of the multiplicative log-normal weight noise.
    pub ln_noise_sigma: f64,
    /// Fraction of samples turned into gross outliers (exact count
    /// `round(fraction · n)`).
    pub outlier_fraction: f64,
    /// Each outlier's weight is multiplied by one of these, chosen
    /// uniformly. 0.5 and 2.0 mimic halved / doubled recording errors.
    pub outlier_multipliers: Vec<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            a: 0.124,
            b: 1.55,
            n: 200,
            area_range: (50.0, 500.0),
            ln_noise_sigma: 0.05,
            outlier_fraction: 0.0,
            outlier_multipliers: vec![0.5, 2.0],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a <= 0.0 || self.b <= 0.0 || self.a.is_nan() || self.b.is_nan() {
            return Err(SynthError::BadConfig(format!(
                "power-law parameters must be positive, got a={}, b={}",
                self.a, self.b
            )));
        }
        if self.n == 0 {
            return Err(SynthError::BadConfig("n must be at least 1".into()));
        }
        let (lo, hi) = self.area_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(SynthError::BadConfig(format!(
                "area_range [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }
        if self.ln_noise_sigma < 0.0 || !self.ln_noise_sigma.is_finite() {
            return Err(SynthError::BadConfig(format!(
                "ln_noise_sigma {} must be non-negative",
                self.ln_noise_sigma
            )));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(SynthError::BadConfig(format!(
                "outlier_fraction {} outside [0, 1)",
                self.outlier_fraction
            )));
        }
        if self.outlier_fraction > 0.0 && self.outlier_multipliers.is_empty() {
            return Err(SynthError::BadConfig(
                "outlier_multipliers empty with a positive outlier_fraction".into(),
            ));
        }
        if self
            .outlier_multipliers
            .iter()
            .any(|&m| m <= 0.0 || !m.is_finite())
        {
            return Err(SynthError::BadConfig(
                "outlier multipliers must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Draw `n` samples `Mᵢ = a·Sᵢᵇ·exp(εᵢ)` and inject an exact count of
/// outliers; returns the dataset and the per-sample truth flags.
pub fn gen_samples(cfg: &SynthConfig) -> Result<(Dataset, Vec<bool>)> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = cfg.area_range;
    let normal = Normal::new(0.0, cfg.ln_noise_sigma.max(f64::MIN_POSITIVE))
        .expect("sigma validated non-negative");

    let mut samples = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let area: f64 = if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        };
        let noise = if cfg.ln_noise_sigma > 0.0 {
            normal.sample(&mut rng)
        } else {
            0.0
        };
        let weight = cfg.a * area.powf(cfg.b) * noise.exp();
        samples.push(Sample::new(format!("syn-{i:05}"), area, weight));
    }

    let outlier_count = (cfg.outlier_fraction * cfg.n as f64 + 0.5).floor() as usize;
    let mut truth = vec![false; cfg.n];
    if outlier_count > 0 {
        let mut indices: Vec<usize> = (0..cfg.n).collect();
        indices.shuffle(&mut rng);
        for &idx in indices.iter().take(outlier_count) {
            let multiplier =
                cfg.outlier_multipliers[rng.random_range(0..cfg.outlier_multipliers.len())];
            samples[idx].weight_g *= multiplier;
            truth[idx] = true;
        }
    }

    let dataset = Dataset::new(format!("synthetic-{}", cfg.seed), samples)
        .expect("generated samples are positive and uniquely named");
    Ok((dataset, truth))
}

/// Geometry of a rasterized fish silhouette.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SilhouetteSpec {
    /// Body length (snout to caudal peduncle) in mm.
    pub body_length_mm: f64,
    /// Body height / body length.
    pub aspect: f64,
    /// Attach caudal, dorsal, and pelvic fins.
    pub fins: bool,
    pub mm_per_pixel: f64,
    /// Superellipse exponent of the body outline.
    pub exponent: f64,
    /// Total fin area as a fraction of the body area; 0.25 makes the
    /// no-fins mask about 20% smaller than the whole fish.
    pub fin_area_fraction: f64,
}

impl Default for SilhouetteSpec {
    fn default() -> Self {
        Self {
            body_length_mm: 200.0,
            aspect: 0.35,
            fins: false,
            mm_per_pixel: 1.0,
            exponent: 2.5,
            fin_area_fraction: 0.25,
        }
    }
}

impl SilhouetteSpec {
    pub fn validate(&self) -> Result<()> {
        if self.body_length_mm <= 0.0 || self.body_length_mm.is_nan() {
            return Err(SynthError::BadConfig(
                "body_length_mm must be positive".into(),
            ));
        }
        if !(self.aspect > 0.0 && self.aspect < 1.0) || self.aspect.is_nan() {
            return Err(SynthError::BadConfig(format!(
                "aspect {} outside (0, 1)",
                self.aspect
            )));
        }
        if self.mm_per_pixel <= 0.0 || self.mm_per_pixel.is_nan() {
            return Err(SynthError::BadConfig(
                "mm_per_pixel must be positive".into(),
            ));
        }
        if self.exponent < 1.0 || self.exponent.is_nan() {
            return Err(SynthError::BadConfig("exponent must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fin_area_fraction) {
            return Err(SynthError::BadConfig(format!(
                "fin_area_fraction {} outside [0, 1]",
                self.fin_area_fraction
            )));
        }
        Ok(())
    }
}

/// Split of the fin budget between the three fins.
const CAUDAL_SHARE: f64 = 0.55;
const DORSAL_SHARE: f64 = 0.25;
const PELVIC_SHARE: f64 = 0.20;

/// Rasterize a fish silhouette from its geometry; head left, tail right.
pub fn gen_silhouette(spec: &SilhouetteSpec) -> Result<MaskImage> {
    spec.validate()?;
    let length_px = spec.body_length_mm / spec.mm_per_pixel;
    let height_px = spec.aspect * length_px;
    if length_px < 4.0 || height_px < 2.0 {
        return Err(SynthError::DegenerateRaster(format!(
            "body of {length_px:.1}x{height_px:.1} px is too small to rasterize"
        )));
    }

    let half_len = length_px / 2.0;
    let half_height = height_px / 2.0;
    let p = spec.exponent;
    let inside_body = |dx: f64, dy: f64| -> bool {
        (dx.abs() / half_len).powf(p) + (dy.abs() / half_height).powf(p) <= 1.0
    };

    // body pixel count drives the fin sizing; count in a body-tight box
    let mut body_px = 0usize;
    {
        let w = length_px.ceil() as usize + 2;
        let h = height_px.ceil() as usize + 2;
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        for y in 0..h {
            for x in 0..w {
                if inside_body(x as f64 + 0.5 - cx, y as f64 + 0.5 - cy) {
                    body_px += 1;
                }
            }
        }
    }
    if body_px == 0 {
        return Err(SynthError::DegenerateRaster(
            "body rasterized to zero pixels".into(),
        ));
    }

    let budget = if spec.fins {
        spec.fin_area_fraction * body_px as f64
    } else {
        0.0
    };

    // caudal: isoceles triangle pointing right, attached at the tail tip
    let caudal_height = 0.75 * height_px;
    let caudal_len = if spec.fins {
        2.0 * CAUDAL_SHARE * budget / caudal_height
    } else {
        0.0
    };
    // dorsal/pelvic: triangles on the flat mid-body, pointing out
    let dorsal_width = 0.50 * length_px;
    let dorsal_height = if spec.fins {
        2.0 * DORSAL_SHARE * budget / dorsal_width
    } else {
        0.0
    };
    let pelvic_width = 0.35 * length_px;
    let pelvic_height = if spec.fins {
        2.0 * PELVIC_SHARE * budget / pelvic_width
    } else {
        0.0
    };

    let margin = 2.0;
    let width = (length_px + caudal_len + 2.0 * margin).ceil() as usize;
    let height = (height_px + dorsal_height + pelvic_height + 2.0 * margin).ceil() as usize;
    let cx = margin + half_len;
    let cy = margin + dorsal_height + half_height;

    // edge of the body at |dx|, for fin attachment
    let body_half_height_at = |dx: f64| -> f64 {
        let t = (dx.abs() / half_len).powf(p);
        if t >= 1.0 {
            0.0
        } else {
            half_height * (1.0 - t).powf(1.0 / p)
        }
    };

    let tail_x = cx + half_len;
    let caudal_base_x = tail_x - 1.0; // overlap one pixel for connectivity
    let inside_caudal = |x: f64, y: f64| -> bool {
        if !spec.fins || caudal_len <= 0.0 {
            return false;
        }
        let along = x - caudal_base_x;
        if !(0.0..=caudal_len).contains(&along) {
            return false;
        }
        let half = 0.5 * caudal_height * (1.0 - along / caudal_len);
        (y - cy).abs() <= half
    };

    // triangle whose base rides the body edge (shared row keeps the fin
    // 4-connected to the body)
    let vertical_fin = |x: f64, y: f64, w: f64, h: f64, up: bool| -> bool {
        if !spec.fins || h <= 0.0 {
            return false;
        }
        let dx = x - cx;
        if dx.abs() > w / 2.0 {
            return false;
        }
        let edge = body_half_height_at(dx);
        let peak = h * (1.0 - dx.abs() / (w / 2.0));
        if up {
            let base_y = cy - edge;
            y >= base_y - peak && y <= base_y
        } else {
            let base_y = cy + edge;
            y <= base_y + peak && y >= base_y
        }
    };

    let mask = MaskImage::from_fn(width, height, spec.mm_per_pixel, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        inside_body(px - cx, py - cy)
            || inside_caudal(px, py)
            || vertical_fin(px, py, dorsal_width, dorsal_height, true)
            || vertical_fin(px, py, pelvic_width, pelvic_height, false)
    })
    .map_err(|e| SynthError::DegenerateRaster(e.to_string()))?;

    if mask.is_empty_mask() {
        return Err(SynthError::DegenerateRaster("empty silhouette".into()));
    }
    Ok(mask)
}
