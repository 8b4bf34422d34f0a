//! Deterministic, seeded image–mask pair augmentation.
//!
//! The training-time transform chain is rotate → scale → crop → flip →
//! photometric (blur and/or CLAHE on the image only). All randomness comes
//! from a generator derived from `(config seed, draw index)`, so each draw
//! is reproducible in isolation and draws can run in parallel.
//!
//! Images are resampled bilinearly, masks with nearest-neighbor; masks
//! therefore stay strictly binary through every stage, and photometric
//! stages never touch them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{blur, clahe, GrayImage, ImagingError, MaskImage};

/// CLAHE parameters used by the photometric augmentation stage.
pub const CLAHE_CLIP_LIMIT: f64 = 2.0;
pub const CLAHE_TILES: (usize, usize) = (8, 8);

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("image is {img_w}x{img_h} but mask is {mask_w}x{mask_h}")]
    DimensionMismatch {
        img_w: usize,
        img_h: usize,
        mask_w: usize,
        mask_h: usize,
    },
    #[error("scale factor {0} must be positive and finite")]
    BadScaleFactor(f64),
    #[error("scaling {w}x{h} by {factor} collapses below 1x1")]
    ScaleCollapse { w: usize, h: usize, factor: f64 },
    #[error("crop side must be positive")]
    ZeroCropSide,
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

pub type Result<T> = std::result::Result<T, AugmentError>;

/// Transform ranges and per-transform probabilities, plus the seed that
/// makes every draw reproducible. Serializable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Rotation is drawn uniformly from `[-rotation_range_deg, +rotation_range_deg)`.
    pub rotation_range_deg: f64,
    /// Uniform scale factor interval `[lo, hi]`.
    pub scale_range: (f64, f64),
    /// Output side length of the square crop, in pixels.
    pub crop_side: usize,
    /// Probability of a horizontal flip and, independently, a vertical flip.
    pub flip_prob: f64,
    pub blur_prob: f64,
    pub clahe_prob: f64,
    /// Random rescaling is disabled for regression-style training where the
    /// pixel sum itself is the signal.
    pub enable_scale: bool,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_range_deg: 180.0,
            scale_range: (0.8, 1.2),
            crop_side: 480,
            flip_prob: 0.5,
            blur_prob: 0.5,
            clahe_prob: 0.5,
            enable_scale: true,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Disabled pipeline: no rotation, no scale, no flips, no photometric
    /// ops, crop equal to `side` (an identity for `side`-sized inputs).
    pub fn identity(side: usize, seed: u64) -> Self {
        Self {
            rotation_range_deg: 0.0,
            scale_range: (1.0, 1.0),
            crop_side: side,
            flip_prob: 0.0,
            blur_prob: 0.0,
            clahe_prob: 0.0,
            enable_scale: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("flip_prob", self.flip_prob),
            ("blur_prob", self.blur_prob),
            ("clahe_prob", self.clahe_prob),
        ] {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(AugmentError::BadConfig(format!(
                    "{name} {p} outside [0, 1]"
                )));
            }
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(AugmentError::BadConfig(format!(
                "scale_range [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }
        if self.crop_side == 0 {
            return Err(AugmentError::ZeroCropSide);
        }
        if self.rotation_range_deg < 0.0 || !self.rotation_range_deg.is_finite() {
            return Err(AugmentError::BadConfig(format!(
                "rotation_range_deg {} must be non-negative",
                self.rotation_range_deg
            )));
        }
        Ok(())
    }
}

/// Concrete parameters drawn for one augmentation, in application order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub angle_deg: f64,
    pub scale_factor: Option<f64>,
    pub crop_side: usize,
    /// Crop offsets in the (possibly padded) source, x then y.
    pub crop_offset: (usize, usize),
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    pub blur_kernel: Option<usize>,
    pub apply_clahe: bool,
}

fn draw_rng(seed: u64, draw: u64) -> ChaCha12Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&draw.to_le_bytes());
    bytes[16] = 0xA6; // domain tag: augmentation stream
    ChaCha12Rng::from_seed(bytes)
}

fn bilinear_sample(img: &GrayImage, sx: f64, sy: f64) -> f64 {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let x0 = sx.floor();
    let y0 = sy.floor();
    let wx = sx - x0;
    let wy = sy - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let mut acc = 0.0;
    for (dx, dy, weight) in [
        (0, 0, (1.0 - wx) * (1.0 - wy)),
        (1, 0, wx * (1.0 - wy)),
        (0, 1, (1.0 - wx) * wy),
        (1, 1, wx * wy),
    ] {
        let (x, y) = (x0 + dx, y0 + dy);
        if x >= 0 && x < w && y >= 0 && y < h {
            acc += weight * img.get(x as usize, y as usize);
        }
    }
    acc
}

fn nearest_sample(mask: &MaskImage, sx: f64, sy: f64) -> bool {
    let x = sx.round();
    let y = sy.round();
    if x < 0.0 || y < 0.0 {
        return false;
    }
    let (x, y) = (x as usize, y as usize);
    if x >= mask.width() || y >= mask.height() {
        return false;
    }
    mask.get(x, y)
}

fn check_pair(img: &GrayImage, mask: &MaskImage) -> Result<()> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(AugmentError::DimensionMismatch {
            img_w: img.width(),
            img_h: img.height(),
            mask_w: mask.width(),
            mask_h: mask.height(),
        });
    }
    Ok(())
}

/// Rotate both members about the image center. Out-of-bounds samples are
/// background. The mask path is an exact permutation for right-angle
/// rotations of square inputs.
pub fn rotate_pair(
    img: &GrayImage,
    mask: &MaskImage,
    angle_deg: f64,
) -> Result<(GrayImage, MaskImage)> {
    check_pair(img, mask)?;
    let (w, h) = (img.width(), img.height());
    let theta = angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;

    let source = |x: usize, y: usize| -> (f64, f64) {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        (cx + dx * cos + dy * sin, cy - dx * sin + dy * cos)
    };

    let out_img = GrayImage::from_fn(w, h, img.mm_per_pixel(), |x, y| {
        let (sx, sy) = source(x, y);
        bilinear_sample(img, sx, sy)
    })?;
    let out_mask = MaskImage::from_fn(w, h, mask.mm_per_pixel(), |x, y| {
        let (sx, sy) = source(x, y);
        nearest_sample(mask, sx, sy)
    })?;
    Ok((out_img, out_mask))
}

/// Resample both members to `round(dim · factor)`.
///
/// By default the calibration is left unchanged, so a scaled fish reads as
/// a genuinely larger or smaller fish — the point of the training
/// augmentation. Pass `preserve_physical_size = true` to divide
/// mm-per-pixel by the factor instead, keeping physical measurements
/// intact for measurement-oriented use.
pub fn scale_pair_with(
    img: &GrayImage,
    mask: &MaskImage,
    factor: f64,
    preserve_physical_size: bool,
) -> Result<(GrayImage, MaskImage)> {
    check_pair(img, mask)?;
    if factor <= 0.0 || !factor.is_finite() {
        return Err(AugmentError::BadScaleFactor(factor));
    }
    let (w, h) = (img.width(), img.height());
    let out_w = (w as f64 * factor).round() as usize;
    let out_h = (h as f64 * factor).round() as usize;
    if out_w == 0 || out_h == 0 {
        return Err(AugmentError::ScaleCollapse { w, h, factor });
    }
    let ratio_x = w as f64 / out_w as f64;
    let ratio_y = h as f64 / out_h as f64;
    let src = |x: usize, y: usize| {
        (
            (x as f64 + 0.5) * ratio_x - 0.5,
            (y as f64 + 0.5) * ratio_y - 0.5,
        )
    };

    let mm_img = if preserve_physical_size {
        img.mm_per_pixel() / factor
    } else {
        img.mm_per_pixel()
    };
    let mm_mask = if preserve_physical_size {
        mask.mm_per_pixel() / factor
    } else {
        mask.mm_per_pixel()
    };

    let out_img = GrayImage::from_fn(out_w, out_h, mm_img, |x, y| {
        let (sx, sy) = src(x, y);
        bilinear_sample(
            img,
            sx.clamp(0.0, w as f64 - 1.0),
            sy.clamp(0.0, h as f64 - 1.0),
        )
    })?;
    let out_mask = MaskImage::from_fn(out_w, out_h, mm_mask, |x, y| {
        let (sx, sy) = src(x, y);
        nearest_sample(
            mask,
            sx.clamp(0.0, w as f64 - 1.0),
            sy.clamp(0.0, h as f64 - 1.0),
        )
    })?;
    Ok((out_img, out_mask))
}

/// [`scale_pair_with`] in its default, size-simulating form.
pub fn scale_pair(
    img: &GrayImage,
    mask: &MaskImage,
    factor: f64,
) -> Result<(GrayImage, MaskImage)> {
    scale_pair_with(img, mask, factor, false)
}

fn padded_extent(input: usize, side: usize) -> (usize, usize) {
    if input >= side {
        (input, 0)
    } else {
        // center the original inside the padded extent
        (side, (side - input) / 2)
    }
}

/// Crop both members to `side × side` at the given top-left offset.
///
/// Inputs smaller than the crop along an axis are zero-padded symmetrically
/// first. Offsets are clamped to keep the window inside the padded extent.
pub fn crop_pair_at(
    img: &GrayImage,
    mask: &MaskImage,
    side: usize,
    offset_x: usize,
    offset_y: usize,
) -> Result<(GrayImage, MaskImage)> {
    if side == 0 {
        return Err(AugmentError::ZeroCropSide);
    }
    let (w, h) = (img.width(), img.height());
    let (padded_w, pad_left) = padded_extent(w, side);
    let (padded_h, pad_top) = padded_extent(h, side);
    let ox = offset_x.min(padded_w - side);
    let oy = offset_y.min(padded_h - side);

    let out_img = GrayImage::from_fn(side, side, img.mm_per_pixel(), |x, y| {
        let u = (x + ox) as isize - pad_left as isize;
        let v = (y + oy) as isize - pad_top as isize;
        if u >= 0 && (u as usize) < w && v >= 0 && (v as usize) < h {
            img.get(u as usize, v as usize)
        } else {
            0.0
        }
    })?;
    let (mw, mh) = (mask.width(), mask.height());
    let (m_padded_w, m_pad_left) = padded_extent(mw, side);
    let (m_padded_h, m_pad_top) = padded_extent(mh, side);
    let mox = offset_x.min(m_padded_w - side);
    let moy = offset_y.min(m_padded_h - side);
    let out_mask = MaskImage::from_fn(side, side, mask.mm_per_pixel(), |x, y| {
        let u = (x + mox) as isize - m_pad_left as isize;
        let v = (y + moy) as isize - m_pad_top as isize;
        if u >= 0 && (u as usize) < mw && v >= 0 && (v as usize) < mh {
            mask.get(u as usize, v as usize)
        } else {
            false
        }
    })?;
    Ok((out_img, out_mask))
}

/// Crop with offsets drawn from the supplied generator (x then y).
pub fn crop_pair_random(
    img: &GrayImage,
    mask: &MaskImage,
    side: usize,
    rng: &mut impl Rng,
) -> Result<(GrayImage, MaskImage)> {
    if side == 0 {
        return Err(AugmentError::ZeroCropSide);
    }
    let (padded_w, _) = padded_extent(img.width(), side);
    let (padded_h, _) = padded_extent(img.height(), side);
    let ox = rng.random_range(0..=padded_w - side);
    let oy = rng.random_range(0..=padded_h - side);
    crop_pair_at(img, mask, side, ox, oy)
}

/// Axis reflections; exact pixel permutations on both members.
pub fn flip_pair(
    img: &GrayImage,
    mask: &MaskImage,
    horizontal: bool,
    vertical: bool,
) -> (GrayImage, MaskImage) {
    let (w, h) = (img.width(), img.height());
    let out_img = GrayImage::from_fn(w, h, img.mm_per_pixel(), |x, y| {
        let sx = if horizontal { w - 1 - x } else { x };
        let sy = if vertical { h - 1 - y } else { y };
        img.get(sx, sy)
    })
    .expect("dimensions unchanged");
    let (mw, mh) = (mask.width(), mask.height());
    let out_mask = MaskImage::from_fn(mw, mh, mask.mm_per_pixel(), |x, y| {
        let sx = if horizontal { mw - 1 - x } else { x };
        let sy = if vertical { mh - 1 - y } else { y };
        mask.get(sx, sy)
    })
    .expect("dimensions unchanged");
    (out_img, out_mask)
}

/// Draw the concrete transform parameters for `(cfg.seed, draw)`.
///
/// The draw order is fixed: rotation angle, scale factor, crop offsets
/// (x, y), horizontal flip, vertical flip, blur gate (+ kernel choice),
/// CLAHE gate. Identical inputs always yield identical parameters.
pub fn augment_params(
    img_w: usize,
    img_h: usize,
    cfg: &AugmentConfig,
    draw: u64,
) -> Result<AugmentParams> {
    cfg.validate()?;
    let mut rng = draw_rng(cfg.seed, draw);

    let angle_deg = if cfg.rotation_range_deg > 0.0 {
        rng.random_range(-cfg.rotation_range_deg..cfg.rotation_range_deg)
    } else {
        0.0
    };

    let scale_factor = if cfg.enable_scale {
        let (lo, hi) = cfg.scale_range;
        Some(if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        })
    } else {
        None
    };

    // crop offsets are drawn against the post-scale dimensions
    let (w, h) = match scale_factor {
        Some(f) => {
            let sw = (img_w as f64 * f).round() as usize;
            let sh = (img_h as f64 * f).round() as usize;
            if sw == 0 || sh == 0 {
                return Err(AugmentError::ScaleCollapse {
                    w: img_w,
                    h: img_h,
                    factor: f,
                });
            }
            (sw, sh)
        }
        None => (img_w, img_h),
    };
    let (padded_w, _) = padded_extent(w, cfg.crop_side);
    let (padded_h, _) = padded_extent(h, cfg.crop_side);
    let crop_offset = (
        rng.random_range(0..=padded_w - cfg.crop_side),
        rng.random_range(0..=padded_h - cfg.crop_side),
    );

    let flip_horizontal = rng.random_bool(cfg.flip_prob);
    let flip_vertical = rng.random_bool(cfg.flip_prob);
    let blur_kernel = if rng.random_bool(cfg.blur_prob) {
        Some(if rng.random_bool(0.5) { 3 } else { 5 })
    } else {
        None
    };
    let apply_clahe = rng.random_bool(cfg.clahe_prob);

    Ok(AugmentParams {
        angle_deg,
        scale_factor,
        crop_side: cfg.crop_side,
        crop_offset,
        flip_horizontal,
        flip_vertical,
        blur_kernel,
        apply_clahe,
    })
}

/// Apply only the geometric stages of `params` to a pair.
pub fn apply_geometric(
    img: &GrayImage,
    mask: &MaskImage,
    params: &AugmentParams,
) -> Result<(GrayImage, MaskImage)> {
    let (mut img, mut mask) = if params.angle_deg != 0.0 {
        rotate_pair(img, mask, params.angle_deg)?
    } else {
        (img.clone(), mask.clone())
    };
    if let Some(factor) = params.scale_factor {
        (img, mask) = scale_pair(&img, &mask, factor)?;
    }
    (img, mask) = crop_pair_at(
        &img,
        &mask,
        params.crop_side,
        params.crop_offset.0,
        params.crop_offset.1,
    )?;
    if params.flip_horizontal || params.flip_vertical {
        (img, mask) = flip_pair(&img, &mask, params.flip_horizontal, params.flip_vertical);
    }
    Ok((img, mask))
}

/// Run the full augmentation chain for one `(cfg, draw)` pair.
///
/// The mask goes through the geometric stages only; blur and CLAHE act on
/// the image alone, so the output mask is exactly the geometrically
/// transformed input mask regardless of the photometric gates.
pub fn augment_pair(
    img: &GrayImage,
    mask: &MaskImage,
    cfg: &AugmentConfig,
    draw: u64,
) -> Result<(GrayImage, MaskImage)> {
    check_pair(img, mask)?;
    let params = augment_params(img.width(), img.height(), cfg, draw)?;
    let (mut out_img, out_mask) = apply_geometric(img, mask, &params)?;
    if let Some(k) = params.blur_kernel {
        out_img = blur(&out_img, k)?;
    }
    if params.apply_clahe {
        out_img = clahe(&out_img, CLAHE_CLIP_LIMIT, CLAHE_TILES)?;
    }
    Ok((out_img, out_mask))
}
