//! 8-bit raster I/O.
//!
//! Binary portable any-maps (`P5` grayscale, `P6` RGB, maxval 255) are read
//! and written here directly so that output bytes are fully determined by
//! the buffer. PNG goes through the `image` crate.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ImageBuffer;

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Maps a stored 8-bit code value to `[0, 1]`.
#[inline]
pub fn decode_u8(v: u8) -> f64 {
    v as f64 / 255.0
}

/// Maps a channel value to its nearest 8-bit code, clamping out-of-range
/// values.
#[inline]
pub fn encode_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn to_bytes(img: &ImageBuffer) -> Vec<u8> {
    img.data.iter().map(|&v| encode_u8(v)).collect()
}

pub fn from_bytes(height: usize, width: usize, channels: usize, bytes: &[u8]) -> ImageBuffer {
    ImageBuffer {
        height,
        width,
        channels,
        data: bytes.iter().map(|&b| decode_u8(b)).collect(),
    }
}

/// Reads a PNM or PNG file, detected by content.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(&bytes, path)
    } else if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(&bytes, path)
    } else {
        Err(Error::UnsupportedFormat(path.to_path_buf()))
    }
}

/// Writes `img` in the format named by the file extension (`ppm`, `pgm`,
/// `pnm` or `png`).
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let bytes = match ext.as_deref() {
        Some("ppm" | "pgm" | "pnm") => encode_pnm(img)?,
        Some("png") => encode_png(img, path)?,
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Serializes to `P5` (one channel) or `P6` (three channels).
pub fn encode_pnm(img: &ImageBuffer) -> Result<Vec<u8>> {
    let magic = match img.channels {
        1 => "P5",
        3 => "P6",
        n => {
            return Err(Error::ShapeMismatch(format!(
                "PNM needs 1 or 3 channels, got {n}"
            )))
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(to_bytes(img));
    Ok(out)
}

pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<ImageBuffer> {
    let channels = match &bytes[..2.min(bytes.len())] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    };
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in &mut header {
        // Whitespace and `#` comments may separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::corrupt(path, "malformed header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::corrupt(path, "header value out of range"))?;
    }
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(path.to_path_buf()));
    }
    if width == 0 || height == 0 {
        return Err(Error::corrupt(path, "zero dimension"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::corrupt(path, "missing raster separator"));
    }
    pos += 1;
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::corrupt(path, "dimensions overflow"))?;
    let raster = bytes
        .get(pos..pos + len)
        .ok_or_else(|| Error::corrupt(path, "truncated raster"))?;
    Ok(from_bytes(height, width, channels, raster))
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<ImageBuffer> {
    use image::{ColorType, DynamicImage};
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::corrupt(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img.color() {
        ColorType::L8 | ColorType::La8 => {
            Ok(from_bytes(h, w, 1, DynamicImage::to_luma8(&img).as_raw()))
        }
        ColorType::Rgb8 | ColorType::Rgba8 => {
            Ok(from_bytes(h, w, 3, DynamicImage::to_rgb8(&img).as_raw()))
        }
        _ => Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
}

fn encode_png(img: &ImageBuffer, path: &Path) -> Result<Vec<u8>> {
    let color = match img.channels {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        n => {
            return Err(Error::ShapeMismatch(format!(
                "PNG output needs 1 or 3 channels, got {n}"
            )))
        }
    };
    let mut out = Vec::new();
    let encoder = image::codecs::png::PngEncoder::new(&mut out);
    image::ImageEncoder::write_image(
        encoder,
        &to_bytes(img),
        img.width as u32,
        img.height as u32,
        color,
    )
    .map_err(|e| Error::corrupt(path, e.to_string()))?;
    Ok(out)
}
