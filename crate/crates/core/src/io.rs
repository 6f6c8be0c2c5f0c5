//! Image and sidecar file I/O.
//!
//! Binary PGM is parsed and emitted directly. PNG goes through the `image`
//! crate and is restricted to 8-bit gray, gray+alpha, and RGB. Intensities
//! map to [0, 1] on load and back to bytes with round-half-up on save, so a
//! load/save cycle reproduces the file byte for byte.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::round_half_up;
use crate::pool::Image;

fn byte_to_unit(b: u8, maxval: u16) -> f64 {
    b as f64 / maxval as f64
}

fn unit_to_byte(v: f64) -> u8 {
    round_half_up(v.clamp(0.0, 1.0) * 255.0) as u8
}

/// Parses binary (P5) PGM bytes. Comments are allowed in the header;
/// 16-bit rasters are rejected.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;

    fn skip_separators(bytes: &[u8], pos: &mut usize) {
        while *pos < bytes.len() {
            match bytes[*pos] {
                b' ' | b'\t' | b'\r' | b'\n' => *pos += 1,
                b'#' => {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                }
                _ => return,
            }
        }
    }

    fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
        skip_separators(bytes, pos);
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::InvalidParam("pgm header ends early".into()));
        }
        Ok(&bytes[start..*pos])
    }

    fn number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u64> {
        let tok = token(bytes, pos)?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| Error::InvalidParam(format!("pgm {what} is not a number")))
    }

    if token(bytes, &mut pos)? != b"P5" {
        return Err(Error::UnsupportedImage("not a binary pgm (P5)".into()));
    }
    let width = number(bytes, &mut pos, "width")? as usize;
    let height = number(bytes, &mut pos, "height")? as usize;
    let maxval = number(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::InvalidParam(format!("pgm maxval {maxval} is invalid")));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedImage(format!(
            "16-bit pgm (maxval {maxval}) is not supported"
        )));
    }
    // Exactly one separator byte between the header and the raster.
    pos += 1;
    let raster = bytes.len().saturating_sub(pos);
    if raster != width * height {
        return Err(Error::InvalidParam(format!(
            "pgm raster holds {raster} bytes, expected {}",
            width * height
        )));
    }
    let data = bytes[pos..]
        .iter()
        .map(|&b| byte_to_unit(b, maxval as u16))
        .collect();
    Image::new(width, height, 1, data)
}

/// Emits binary (P5) PGM bytes with maxval 255. Single-channel only.
pub fn encode_pgm(img: &Image) -> Result<Vec<u8>> {
    if img.channels() != 1 {
        return Err(Error::UnsupportedImage(format!(
            "pgm stores one channel, image has {}",
            img.channels()
        )));
    }
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| unit_to_byte(v)));
    Ok(out)
}

fn decode_png(path: &Path) -> Result<Image> {
    let dynimg = image::io::Reader::open(path)?
        .decode()
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::Io(io),
            other => Error::UnsupportedImage(other.to_string()),
        })?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let (channels, raw) = match dynimg {
        image::DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        image::DynamicImage::ImageLumaA8(buf) => (2, buf.into_raw()),
        image::DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        other => {
            return Err(Error::UnsupportedImage(format!(
                "png pixel type {:?} is not supported (use 8-bit gray, gray+alpha, or rgb)",
                other.color()
            )))
        }
    };
    let data = raw.iter().map(|&b| byte_to_unit(b, 255)).collect();
    Image::new(w, h, channels, data)
}

fn encode_png(path: &Path, img: &Image) -> Result<()> {
    let color = match img.channels() {
        1 => image::ColorType::L8,
        2 => image::ColorType::La8,
        3 => image::ColorType::Rgb8,
        n => {
            return Err(Error::UnsupportedImage(format!(
                "png supports 1, 2, or 3 channels, image has {n}"
            )))
        }
    };
    let bytes: Vec<u8> = img.data().iter().map(|&v| unit_to_byte(v)).collect();
    image::save_buffer_with_format(
        path,
        &bytes,
        img.width() as u32,
        img.height() as u32,
        color,
        image::ImageFormat::Png,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::UnsupportedImage(other.to_string()),
    })
}

fn extension_of(path: &Path) -> Result<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .ok_or_else(|| {
            Error::UnsupportedImage(format!(
                "cannot tell the format of {} (use .pgm or .png)",
                path.display()
            ))
        })
}

/// Loads an image by extension (.pgm or .png), normalized to [0, 1].
pub fn load_image(path: &Path) -> Result<Image> {
    match extension_of(path)?.as_str() {
        "pgm" => decode_pgm(&std::fs::read(path)?),
        "png" => decode_png(path),
        ext => Err(Error::UnsupportedImage(format!(
            "unknown image extension .{ext} (use .pgm or .png)"
        ))),
    }
}

/// Saves an image by extension (.pgm or .png). Values are clamped to
/// [0, 1] and quantized to bytes with round-half-up.
pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    match extension_of(path)?.as_str() {
        "pgm" => Ok(std::fs::write(path, encode_pgm(img)?)?),
        "png" => encode_png(path, img),
        ext => Err(Error::UnsupportedImage(format!(
            "unknown image extension .{ext} (use .pgm or .png)"
        ))),
    }
}

/// Reads a whole file as a string (small JSON sidecars).
pub fn read_text(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

/// Writes a string to a file, appending a trailing newline if missing.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut owned = text.to_string();
    if !owned.ends_with('\n') {
        owned.push('\n');
    }
    Ok(std::fs::write(path, owned)?)
}
