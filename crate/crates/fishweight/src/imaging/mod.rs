//! One-channel image, binary mask, and probability-map types with
//! calibrated area extraction and photometric preprocessing.
//!
//! All pixel buffers are row-major. Gray images and probability maps hold
//! values in `[0, 1]`; masks are strictly binary. Every image carries a
//! mm-per-pixel calibration so pixel counts convert to physical areas.

mod clahe;
pub mod io;

pub use clahe::clahe;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("channel dimensions disagree: expected {expected} pixels, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("pixel buffer length {got} does not match {width}x{height}")]
    BadBufferLength {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("pixel value {value} at index {index} outside [0, 1]")]
    PixelOutOfRange { index: usize, value: f64 },
    #[error("mm_per_pixel must be positive, got {0}")]
    BadCalibration(f64),
    #[error("threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("negative input {0} to log-scale conversion")]
    NegativeInput(f64),
    #[error("blur kernel size {0} unsupported (expected 3 or 5)")]
    BadKernel(usize),
    #[error("image {width}x{height} smaller than {tiles_x}x{tiles_y} tile grid")]
    TileGridTooFine {
        width: usize,
        height: usize,
        tiles_x: usize,
        tiles_y: usize,
    },
    #[error("clip limit must be positive, got {0}")]
    BadClipLimit(f64),
    #[error("tile grid must be at least 1x1")]
    EmptyTileGrid,
    #[error("image has zero dimension ({width}x{height})")]
    EmptyImage { width: usize, height: usize },
    #[error("io error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("png error at {path}: {message}")]
    Png {
        path: std::path::PathBuf,
        message: String,
    },
    #[error("bad pgm file {path}: {message}")]
    Pgm {
        path: std::path::PathBuf,
        message: String,
    },
    #[error("unsupported image format for {path} (expected .pgm or .png)")]
    UnsupportedFormat { path: std::path::PathBuf },
}

pub type Result<T> = std::result::Result<T, ImagingError>;

/// One-channel image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    mm_per_pixel: f64,
    pixels: Vec<f64>,
}

/// Binary silhouette mask (`true` = foreground).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskImage {
    width: usize,
    height: usize,
    mm_per_pixel: f64,
    pixels: Vec<bool>,
}

/// Sigmoid-output probability map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    width: usize,
    height: usize,
    mm_per_pixel: f64,
    pixels: Vec<f64>,
}

fn check_plane(width: usize, height: usize, mm_per_pixel: f64, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(ImagingError::EmptyImage { width, height });
    }
    if mm_per_pixel <= 0.0 || !mm_per_pixel.is_finite() {
        return Err(ImagingError::BadCalibration(mm_per_pixel));
    }
    if len != width * height {
        return Err(ImagingError::BadBufferLength {
            width,
            height,
            got: len,
        });
    }
    Ok(())
}

fn check_unit_range(pixels: &[f64]) -> Result<()> {
    for (index, &value) in pixels.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) || value.is_nan() {
            return Err(ImagingError::PixelOutOfRange { index, value });
        }
    }
    Ok(())
}

impl GrayImage {
    pub fn new(width: usize, height: usize, mm_per_pixel: f64, pixels: Vec<f64>) -> Result<Self> {
        check_plane(width, height, mm_per_pixel, pixels.len())?;
        check_unit_range(&pixels)?;
        Ok(Self {
            width,
            height,
            mm_per_pixel,
            pixels,
        })
    }

    /// Build from a per-pixel closure `(x, y) -> value`; values are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mm_per_pixel: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        check_plane(width, height, mm_per_pixel, width * height)?;
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Ok(Self {
            width,
            height,
            mm_per_pixel,
            pixels,
        })
    }

    pub fn constant(width: usize, height: usize, mm_per_pixel: f64, value: f64) -> Result<Self> {
        Self::new(width, height, mm_per_pixel, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mm_per_pixel(&self) -> f64 {
        self.mm_per_pixel
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

impl MaskImage {
    pub fn new(width: usize, height: usize, mm_per_pixel: f64, pixels: Vec<bool>) -> Result<Self> {
        check_plane(width, height, mm_per_pixel, pixels.len())?;
        Ok(Self {
            width,
            height,
            mm_per_pixel,
            pixels,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mm_per_pixel: f64,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        check_plane(width, height, mm_per_pixel, width * height)?;
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            mm_per_pixel,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, mm_per_pixel: f64, value: bool) -> Result<Self> {
        Self::new(width, height, mm_per_pixel, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mm_per_pixel(&self) -> f64 {
        self.mm_per_pixel
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        self.foreground_count() == 0
    }
}

impl ProbMap {
    pub fn new(width: usize, height: usize, mm_per_pixel: f64, pixels: Vec<f64>) -> Result<Self> {
        check_plane(width, height, mm_per_pixel, pixels.len())?;
        check_unit_range(&pixels)?;
        Ok(Self {
            width,
            height,
            mm_per_pixel,
            pixels,
        })
    }

    pub fn constant(width: usize, height: usize, mm_per_pixel: f64, value: f64) -> Result<Self> {
        Self::new(width, height, mm_per_pixel, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mm_per_pixel(&self) -> f64 {
        self.mm_per_pixel
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Broadcast-standard luma conversion: `0.299 r + 0.587 g + 0.114 b`, clamped to `[0, 1]`.
pub fn to_grayscale(
    r: &[f64],
    g: &[f64],
    b: &[f64],
    width: usize,
    height: usize,
    mm_per_pixel: f64,
) -> Result<GrayImage> {
    let expected = width * height;
    for chan in [r, g, b] {
        if chan.len() != expected {
            return Err(ImagingError::DimensionMismatch {
                expected,
                got: chan.len(),
            });
        }
    }
    check_plane(width, height, mm_per_pixel, expected)?;
    let pixels = (0..expected)
        .map(|i| (0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]).clamp(0.0, 1.0))
        .collect();
    Ok(GrayImage {
        width,
        height,
        mm_per_pixel,
        pixels,
    })
}

/// Foreground pixel count converted to cm²: `count · mm_per_pixel² / 100`.
pub fn mask_area(mask: &MaskImage) -> f64 {
    let mm = mask.mm_per_pixel();
    mask.foreground_count() as f64 * mm * mm / 100.0
}

/// Binarize a probability map: foreground iff `value >= t`. Calibration carries over.
pub fn threshold(map: &ProbMap, t: f64) -> Result<MaskImage> {
    if !(t > 0.0 && t < 1.0) {
        return Err(ImagingError::BadThreshold(t));
    }
    MaskImage::new(
        map.width,
        map.height,
        map.mm_per_pixel,
        map.pixels.iter().map(|&p| p >= t).collect(),
    )
}

/// Log-sum regression head: `y_r = ln(Σp + 1)`.
///
/// The `+ 1` maps an all-zero map (no detected fish) to a zero log-weight.
pub fn regression_head(map: &ProbMap) -> f64 {
    let y_s: f64 = map.pixels.iter().sum();
    (y_s + 1.0).ln()
}

/// Weight (grams) to log scale: `ln(w + 1)`.
pub fn log_weight(weight_g: f64) -> Result<f64> {
    if weight_g < 0.0 {
        return Err(ImagingError::NegativeInput(weight_g));
    }
    Ok((weight_g + 1.0).ln())
}

/// Inverse of [`log_weight`]: `exp(y_r) - 1`.
pub fn weight_from_log(y_r: f64) -> Result<f64> {
    if y_r < 0.0 {
        return Err(ImagingError::NegativeInput(y_r));
    }
    Ok(y_r.exp() - 1.0)
}

/// k×k uniform mean filter with edge replication, k in {3, 5}.
pub fn blur(img: &GrayImage, k: usize) -> Result<GrayImage> {
    if k != 3 && k != 5 {
        return Err(ImagingError::BadKernel(k));
    }
    let half = (k / 2) as isize;
    let (w, h) = (img.width as isize, img.height as isize);
    let norm = 1.0 / (k * k) as f64;
    let mut pixels = Vec::with_capacity(img.pixels.len());
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -half..=half {
                for dx in -half..=half {
                    let sx = (x + dx).clamp(0, w - 1) as usize;
                    let sy = (y + dy).clamp(0, h - 1) as usize;
                    acc += img.pixels[sy * img.width + sx];
                }
            }
            pixels.push((acc * norm).clamp(0.0, 1.0));
        }
    }
    Ok(GrayImage {
        width: img.width,
        height: img.height,
        mm_per_pixel: img.mm_per_pixel,
        pixels,
    })
}
