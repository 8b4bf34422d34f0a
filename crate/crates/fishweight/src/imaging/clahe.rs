//! Contrast-limited adaptive histogram equalization on `[0, 1]` gray images.
//!
//! Zuiderveld's scheme: the image is divided into a grid of tiles, each tile
//! gets a 256-bin histogram whose bins are clipped at `clip_limit` times the
//! uniform level (excess redistributed evenly), and every pixel is remapped
//! by bilinear interpolation between the four nearest tile mappings.

use super::{GrayImage, ImagingError, Result};

const BINS: usize = 256;

/// Quantize a `[0, 1]` intensity to a histogram bin.
fn bin_of(value: f64) -> usize {
    ((value * BINS as f64) as usize).min(BINS - 1)
}

/// Clip a histogram at `limit` per bin and spread the excess evenly.
fn clip_histogram(hist: &mut [f64; BINS], limit: f64) {
    let mut clipped = 0.0;
    for bin in hist.iter_mut() {
        if *bin > limit {
            clipped += *bin - limit;
            *bin = limit;
        }
    }
    if clipped > 0.0 {
        let share = clipped / BINS as f64;
        for bin in hist.iter_mut() {
            *bin += share;
        }
    }
}

/// Build a tile mapping from its clipped histogram.
///
/// Midpoint-CDF convention: bin `i` maps to the cumulative mass up to the
/// middle of bin `i`, normalized by the tile area. A uniform histogram then
/// maps bin centers onto themselves, so near-degenerate histograms (e.g. a
/// constant tile) stay within one quantization step of the identity.
fn tile_lut(hist: &[f64; BINS], area: usize) -> [f64; BINS] {
    let inv = 1.0 / area as f64;
    let mut lut = [0.0f64; BINS];
    let mut cum = 0.0;
    for i in 0..BINS {
        let mid = cum + hist[i] / 2.0;
        lut[i] = (mid * inv).clamp(0.0, 1.0);
        cum += hist[i];
    }
    lut
}

/// Contrast-limited adaptive histogram equalization.
///
/// `clip_limit` is relative to the uniform histogram level (2.0 means bins
/// may hold at most twice the uniform count); `tiles` is the `(x, y)` grid.
pub fn clahe(img: &GrayImage, clip_limit: f64, tiles: (usize, usize)) -> Result<GrayImage> {
    let (tiles_x, tiles_y) = tiles;
    if tiles_x == 0 || tiles_y == 0 {
        return Err(ImagingError::EmptyTileGrid);
    }
    if clip_limit <= 0.0 || clip_limit.is_nan() {
        return Err(ImagingError::BadClipLimit(clip_limit));
    }
    let (w, h) = (img.width(), img.height());
    if w < tiles_x || h < tiles_y {
        return Err(ImagingError::TileGridTooFine {
            width: w,
            height: h,
            tiles_x,
            tiles_y,
        });
    }

    // Tile column/row boundaries; tiles differ by at most one pixel when the
    // dimensions are not divisible by the grid.
    let x_bound = |i: usize| i * w / tiles_x;
    let y_bound = |j: usize| j * h / tiles_y;

    let mut luts = vec![[0.0f64; BINS]; tiles_x * tiles_y];
    for tj in 0..tiles_y {
        for ti in 0..tiles_x {
            let (x0, x1) = (x_bound(ti), x_bound(ti + 1));
            let (y0, y1) = (y_bound(tj), y_bound(tj + 1));
            let area = (x1 - x0) * (y1 - y0);
            let mut hist = [0.0f64; BINS];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bin_of(img.get(x, y))] += 1.0;
                }
            }
            let limit = clip_limit * area as f64 / BINS as f64;
            clip_histogram(&mut hist, limit);
            luts[tj * tiles_x + ti] = tile_lut(&hist, area);
        }
    }

    // Bilinear interpolation between tile centers; border pixels replicate
    // the edge tiles.
    let tile_w = w as f64 / tiles_x as f64;
    let tile_h = h as f64 / tiles_y as f64;
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        let gy = (y as f64 + 0.5) / tile_h - 0.5;
        let j0f = gy.floor();
        let wy = gy - j0f;
        let j0 = (j0f.max(0.0) as usize).min(tiles_y - 1);
        let j1 = ((j0f + 1.0).max(0.0) as usize).min(tiles_y - 1);
        for x in 0..w {
            let gx = (x as f64 + 0.5) / tile_w - 0.5;
            let i0f = gx.floor();
            let wx = gx - i0f;
            let i0 = (i0f.max(0.0) as usize).min(tiles_x - 1);
            let i1 = ((i0f + 1.0).max(0.0) as usize).min(tiles_x - 1);

            let b = bin_of(img.get(x, y));
            let tl = luts[j0 * tiles_x + i0][b];
            let tr = luts[j0 * tiles_x + i1][b];
            let bl = luts[j1 * tiles_x + i0][b];
            let br = luts[j1 * tiles_x + i1][b];
            let top = tl * (1.0 - wx) + tr * wx;
            let bottom = bl * (1.0 - wx) + br * wx;
            pixels.push((top * (1.0 - wy) + bottom * wy).clamp(0.0, 1.0));
        }
    }

    GrayImage::new(w, h, img.mm_per_pixel(), pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Reference: plain global clipped histogram equalization. For a 1x1
    /// tile grid CLAHE must reduce to exactly this mapping.
    fn global_clipped_equalization(img: &GrayImage, clip_limit: f64) -> Vec<f64> {
        let area = img.pixels().len() as f64;
        let mut hist = vec![0.0f64; BINS];
        for &v in img.pixels() {
            hist[bin_of(v)] += 1.0;
        }
        let limit = clip_limit * area / BINS as f64;
        let mut clipped = 0.0;
        for h in hist.iter_mut() {
            if *h > limit {
                clipped += *h - limit;
                *h = limit;
            }
        }
        for h in hist.iter_mut() {
            *h += clipped / BINS as f64;
        }
        let mut lut = vec![0.0f64; BINS];
        let mut cum = 0.0;
        for i in 0..BINS {
            lut[i] = (cum + hist[i] / 2.0) / area;
            cum += hist[i];
        }
        img.pixels().iter().map(|&v| lut[bin_of(v)]).collect()
    }

    #[test]
    fn constant_image_stays_constant_within_one_step() {
        let img = GrayImage::constant(64, 64, 1.0, 0.5).unwrap();
        let out = clahe(&img, 2.0, (8, 8)).unwrap();
        let first = out.get(0, 0);
        for &p in out.pixels() {
            assert_eq!(p, first, "output must be constant");
        }
        assert!(
            (first - 0.5).abs() <= 1.0 / 256.0 + 1e-12,
            "constant drifted by {}",
            (first - 0.5).abs()
        );
    }

    #[test]
    fn output_stays_in_unit_range() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let img = GrayImage::from_fn(50, 41, 1.0, |_, _| rng.random::<f64>()).unwrap();
        let out = clahe(&img, 2.0, (8, 8)).unwrap();
        assert!(out.pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert_eq!(out.width(), 50);
        assert_eq!(out.height(), 41);
        assert_eq!(out.mm_per_pixel(), 1.0);
    }

    #[test]
    fn low_contrast_ramp_widens() {
        // horizontal ramp occupying [0.4, 0.6]
        let img = GrayImage::from_fn(128, 64, 1.0, |x, _| 0.4 + 0.2 * x as f64 / 127.0).unwrap();
        let out = clahe(&img, 2.0, (8, 8)).unwrap();
        let min = out.pixels().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = out
            .pixels()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(max - min > 0.2, "span {} not wider than input", max - min);
    }

    #[test]
    fn single_tile_matches_global_equalization() {
        let img = GrayImage::from_fn(96, 48, 1.0, |x, _| 0.4 + 0.2 * x as f64 / 95.0).unwrap();
        let out = clahe(&img, 2.0, (1, 1)).unwrap();
        let reference = global_clipped_equalization(&img, 2.0);
        for (a, b) in out.pixels().iter().zip(reference.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let min = out.pixels().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = out
            .pixels()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(max - min > 0.2);
    }

    #[test]
    fn rejects_image_smaller_than_grid() {
        let img = GrayImage::constant(4, 4, 1.0, 0.5).unwrap();
        assert!(matches!(
            clahe(&img, 2.0, (8, 8)),
            Err(ImagingError::TileGridTooFine { .. })
        ));
    }

    #[test]
    fn rejects_bad_parameters() {
        let img = GrayImage::constant(16, 16, 1.0, 0.5).unwrap();
        assert!(clahe(&img, 0.0, (2, 2)).is_err());
        assert!(clahe(&img, 2.0, (0, 2)).is_err());
    }
}
