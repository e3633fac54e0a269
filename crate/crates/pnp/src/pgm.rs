//! Heatmap export: relevance maps rendered as binary PGM (P5), upsampled
//! nearest-neighbor so a 4x4 grid is viewable at 64x64.

use std::fs;
use std::path::Path;

use pnp_core::relevance::{quantize_heatmap, RelevanceMap};

use crate::error::{FileError, Result};

pub const UPSAMPLE: usize = 16;

/// Renders the map's 0..=255 quantization at UPSAMPLE x UPSAMPLE pixels per
/// patch cell. Output bytes are a pure function of the map.
pub fn render_pgm(map: &RelevanceMap) -> Vec<u8> {
    let (rows, cols) = map.grid;
    let levels = quantize_heatmap(map);
    let (h, w) = (rows * UPSAMPLE, cols * UPSAMPLE);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for r in 0..h {
        for c in 0..w {
            out.push(levels[(r / UPSAMPLE) * cols + c / UPSAMPLE]);
        }
    }
    out
}

pub fn write_heatmap(path: &Path, map: &RelevanceMap) -> Result<()> {
    fs::write(path, render_pgm(map)).map_err(|e| FileError::io(path, e))
}
