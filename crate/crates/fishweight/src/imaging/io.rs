//! Mask and gray-image file I/O.
//!
//! Supported formats: 8-bit binary PGM (P5) and 8-bit grayscale PNG,
//! selected by file extension. Masks treat any nonzero byte as foreground;
//! gray images map `byte / 255` into `[0, 1]`. Calibration is never stored
//! in the pixels — callers supply mm-per-pixel explicitly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GrayImage, ImagingError, MaskImage, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Pgm,
    Png,
}

fn format_of(path: &Path) -> Result<Format> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
    {
        Some(ext) if ext == "pgm" => Ok(Format::Pgm),
        Some(ext) if ext == "png" => Ok(Format::Png),
        _ => Err(ImagingError::UnsupportedFormat {
            path: path.to_path_buf(),
        }),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> ImagingError {
    ImagingError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_bytes(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    match format_of(path)? {
        Format::Pgm => read_pgm(path),
        Format::Png => read_png(path),
    }
}

fn write_bytes(path: &Path, width: usize, height: usize, bytes: &[u8]) -> Result<()> {
    match format_of(path)? {
        Format::Pgm => write_pgm(path, width, height, bytes),
        Format::Png => write_png(path, width, height, bytes),
    }
}

/// Read a mask; any nonzero byte is foreground.
pub fn read_mask(path: impl AsRef<Path>, mm_per_pixel: f64) -> Result<MaskImage> {
    let path = path.as_ref();
    let (w, h, bytes) = read_bytes(path)?;
    MaskImage::new(w, h, mm_per_pixel, bytes.iter().map(|&b| b != 0).collect())
}

/// Write a mask as 0/255 bytes.
pub fn write_mask(path: impl AsRef<Path>, mask: &MaskImage) -> Result<()> {
    let bytes: Vec<u8> = mask
        .pixels()
        .iter()
        .map(|&p| if p { 255 } else { 0 })
        .collect();
    write_bytes(path.as_ref(), mask.width(), mask.height(), &bytes)
}

/// Read a gray image; bytes map to `[0, 1]` via `b / 255`.
pub fn read_gray(path: impl AsRef<Path>, mm_per_pixel: f64) -> Result<GrayImage> {
    let path = path.as_ref();
    let (w, h, bytes) = read_bytes(path)?;
    GrayImage::new(
        w,
        h,
        mm_per_pixel,
        bytes.iter().map(|&b| b as f64 / 255.0).collect(),
    )
}

/// Write a gray image, quantizing `[0, 1]` values to bytes.
pub fn write_gray(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let bytes: Vec<u8> = img
        .pixels()
        .iter()
        .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    write_bytes(path.as_ref(), img.width(), img.height(), &bytes)
}

fn pgm_err(path: &Path, message: impl Into<String>) -> ImagingError {
    ImagingError::Pgm {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Parse the three PGM header fields (width, height, maxval), skipping
/// whitespace and `#` comments.
fn parse_pgm_header(path: &Path, data: &[u8]) -> Result<(usize, usize, usize, usize)> {
    if data.len() < 2 || &data[0..2] != b"P5" {
        return Err(pgm_err(path, "missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < data.len() && data[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(pgm_err(path, "truncated header"));
        }
        let text = std::str::from_utf8(&data[start..pos]).expect("digits are ascii");
        *field = text
            .parse()
            .map_err(|_| pgm_err(path, "bad header number"))?;
    }
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(pgm_err(path, "missing separator after maxval"));
    }
    pos += 1;
    Ok((fields[0], fields[1], fields[2], pos))
}

fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let mut data = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| io_err(path, e))?;
    let (width, height, maxval, offset) = parse_pgm_header(path, &data)?;
    if maxval == 0 || maxval > 255 {
        return Err(pgm_err(path, format!("unsupported maxval {maxval}")));
    }
    let expected = width * height;
    let body = &data[offset..];
    if body.len() < expected {
        return Err(pgm_err(
            path,
            format!("expected {expected} pixel bytes, found {}", body.len()),
        ));
    }
    Ok((width, height, body[..expected].to_vec()))
}

fn write_pgm(path: &Path, width: usize, height: usize, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{width} {height}\n255\n").map_err(|e| io_err(path, e))?;
    out.write_all(bytes).map_err(|e| io_err(path, e))?;
    out.flush().map_err(|e| io_err(path, e))
}

fn png_err(path: &Path, message: impl ToString) -> ImagingError {
    ImagingError::Png {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn read_png(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let mut buf = vec![
        0u8;
        reader
            .output_buffer_size()
            .ok_or_else(|| png_err(path, "image too large"))?
    ];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(png_err(
            path,
            format!(
                "expected 8-bit grayscale, got {:?}/{:?}",
                info.color_type, info.bit_depth
            ),
        ));
    }
    let expected = info.width as usize * info.height as usize;
    Ok((
        info.width as usize,
        info.height as usize,
        buf[..expected].to_vec(),
    ))
}

fn write_png(path: &Path, width: usize, height: usize, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| png_err(path, e))?;
    writer.write_image_data(bytes).map_err(|e| png_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::mask_area;

    fn disk_mask() -> MaskImage {
        MaskImage::from_fn(32, 24, 1.0, |x, y| {
            let dx = x as f64 - 15.5;
            let dy = y as f64 - 11.5;
            dx * dx + dy * dy < 81.0
        })
        .unwrap()
    }

    #[test]
    fn pgm_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.pgm");
        let mask = disk_mask();
        write_mask(&path, &mask).unwrap();
        let back = read_mask(&path, 1.0).unwrap();
        assert_eq!(back, mask);
        assert_eq!(mask_area(&back), mask_area(&mask));
    }

    #[test]
    fn png_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.png");
        let mask = disk_mask();
        write_mask(&path, &mask).unwrap();
        let back = read_mask(&path, 2.5).unwrap();
        assert_eq!(back.pixels(), mask.pixels());
        assert_eq!(back.mm_per_pixel(), 2.5);
    }

    #[test]
    fn gray_round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["img.pgm", "img.png"] {
            let path = dir.path().join(name);
            let img =
                GrayImage::from_fn(17, 9, 1.0, |x, y| ((x * 31 + y * 7) % 256) as f64 / 255.0)
                    .unwrap();
            write_gray(&path, &img).unwrap();
            let back = read_gray(&path, 1.0).unwrap();
            assert_eq!(back.pixels(), img.pixels());
        }
    }

    #[test]
    fn pgm_header_with_comment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let mut body = b"P5\n# a comment\n3 2\n255\n".to_vec();
        body.extend_from_slice(&[0, 255, 0, 255, 0, 255]);
        std::fs::write(&path, &body).unwrap();
        let mask = read_mask(&path, 1.0).unwrap();
        assert_eq!(mask.width(), 3);
        assert_eq!(mask.height(), 2);
        assert_eq!(mask.foreground_count(), 3);
    }

    #[test]
    fn rejects_unknown_extension() {
        assert!(matches!(
            read_mask("mask.tiff", 1.0),
            Err(ImagingError::UnsupportedFormat { .. })
        ));
    }

    #[test]
    fn rejects_truncated_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n4 4\n255\nab").unwrap();
        assert!(matches!(
            read_mask(&path, 1.0),
            Err(ImagingError::Pgm { .. })
        ));
    }
}
