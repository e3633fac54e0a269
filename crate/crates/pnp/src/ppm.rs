//! Binary PPM (P6) image IO. The only image format the pipeline reads:
//! bit-exact, no codec dependencies.

use std::fs;
use std::path::Path;

use pnp_core::vision::Image;

use crate::error::{FileError, Result};

struct HeaderScanner<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> HeaderScanner<'a> {
    /// Next whitespace-delimited token, skipping '#' comments to end of line.
    fn token(&mut self) -> Option<&'a [u8]> {
        loop {
            while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.buf.len() && self.buf[self.pos] == b'#' {
                while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.buf.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Some(&self.buf[start..self.pos])
    }

    fn number(&mut self) -> Option<usize> {
        let t = self.token()?;
        std::str::from_utf8(t).ok()?.parse().ok()
    }
}

/// Reads a P6 file into an image with values in [0,1]. Maxval up to 255.
pub fn read_ppm(path: &Path) -> Result<Image> {
    let buf = fs::read(path).map_err(|e| FileError::io(path, e))?;
    let mut scan = HeaderScanner { buf: &buf, pos: 0 };
    let bad = |detail: &str| FileError::format(path, detail);
    if scan.token() != Some(b"P6".as_slice()) {
        return Err(bad("not a binary PPM (P6) file"));
    }
    let width = scan.number().ok_or_else(|| bad("missing or invalid width"))?;
    let height = scan.number().ok_or_else(|| bad("missing or invalid height"))?;
    let maxval = scan.number().ok_or_else(|| bad("missing or invalid maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(bad("maxval must be between 1 and 255"));
    }
    // Exactly one whitespace byte separates the header from pixel data.
    let data_start = scan.pos + 1;
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| bad("image dimensions overflow"))?;
    let pixels = buf.get(data_start..).unwrap_or(&[]);
    if pixels.len() != expected {
        return Err(bad(&format!(
            "expected {expected} pixel bytes for {width}x{height}, found {}",
            pixels.len()
        )));
    }
    let data: Vec<f64> = pixels.iter().map(|&b| b as f64 / maxval as f64).collect();
    Ok(Image::new(height, width, data)?)
}

/// Reads an image and enforces that the patch grid divides it evenly.
pub fn load_image(path: &Path, grid: (usize, usize)) -> Result<Image> {
    let img = read_ppm(path)?;
    let (rows, cols) = grid;
    if img.height % rows != 0 || img.width % cols != 0 {
        return Err(FileError::format(
            path,
            format!(
                "{}x{} image is not divisible by the {rows}x{cols} patch grid",
                img.height, img.width
            ),
        ));
    }
    Ok(img)
}

/// Writes an image as maxval-255 P6, rounding each channel.
pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| (v * 255.0).round() as u8));
    fs::write(path, out).map_err(|e| FileError::io(path, e))
}
