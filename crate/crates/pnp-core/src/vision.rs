//! Patch feature extraction.
//!
//! The image is cut into a fixed grid of patches. Each patch is reduced to
//! 12 raw channels (mean R, G, B over each of its four quadrants), embedded
//! into d_v dimensions, tagged with its grid position, and run through one
//! self-attention plus feed-forward block so every patch feature reflects
//! global context. Positional information is baked into the feature rows
//! here, which is what lets downstream consumers take arbitrary patch
//! subsets without losing track of where each patch came from.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::ArchConfig;
use crate::error::{Error, Result};
use crate::mha::{ffn_residual, mha, AttnMask};
use crate::tensor::{add, Tensor};
use crate::weights::{VisionWeights, PATCH_RAW_DIM};

/// RGB image with values in [0,1], row-major, channels interleaved.
#[derive(Debug, Clone)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Image> {
        if data.len() != height * width * 3 {
            return Err(Error::ShapeMismatch {
                op: "image",
                expected: vec![height, width, 3],
                actual: vec![data.len()],
            });
        }
        if !data.iter().all(|&v| (0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidParam {
                name: "image",
                detail: "pixel values must lie in [0,1]".into(),
            });
        }
        Ok(Image { height, width, data })
    }

    fn pixel(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.data[(r * self.width + c) * 3 + ch]
    }
}

/// Per-patch features, K x d_v, grid row-major.
#[derive(Debug, Clone)]
pub struct PatchFeatures {
    pub features: Tensor,
    pub grid: (usize, usize),
}

/// Mean R,G,B over the four quadrants of one pixel block. A block too thin
/// to split reuses its first half for the second.
fn quadrant_means(img: &Image, r0: usize, r1: usize, c0: usize, c1: usize) -> [f64; PATCH_RAW_DIM] {
    let rm = if r1 - r0 > 1 { r0 + (r1 - r0) / 2 } else { r1 };
    let cm = if c1 - c0 > 1 { c0 + (c1 - c0) / 2 } else { c1 };
    let quads = [
        (r0, rm.max(r0 + 1), c0, cm.max(c0 + 1)),
        (r0, rm.max(r0 + 1), cm.min(c1 - 1), c1),
        (rm.min(r1 - 1), r1, c0, cm.max(c0 + 1)),
        (rm.min(r1 - 1), r1, cm.min(c1 - 1), c1),
    ];
    let mut out = [0.0; PATCH_RAW_DIM];
    for (qi, &(qr0, qr1, qc0, qc1)) in quads.iter().enumerate() {
        let n = ((qr1 - qr0) * (qc1 - qc0)) as f64;
        for ch in 0..3 {
            let mut sum = 0.0;
            for r in qr0..qr1 {
                for c in qc0..qc1 {
                    sum += img.pixel(r, c, ch);
                }
            }
            out[qi * 3 + ch] = sum / n;
        }
    }
    out
}

/// Encodes an image into per-patch features on the configured grid.
pub fn vision_encode(w: &VisionWeights, cfg: &ArchConfig, img: &Image) -> Result<PatchFeatures> {
    let (rows, cols) = cfg.patch_grid;
    if img.height < rows || img.width < cols {
        return Err(Error::InvalidParam {
            name: "image",
            detail: format!(
                "{}x{} image cannot cover a {rows}x{cols} patch grid",
                img.height, img.width
            ),
        });
    }
    let k = cfg.k();
    let d_v = cfg.d_v;
    let mut raw = Vec::with_capacity(k * PATCH_RAW_DIM);
    for pr in 0..rows {
        let r0 = pr * img.height / rows;
        let r1 = (pr + 1) * img.height / rows;
        for pc in 0..cols {
            let c0 = pc * img.width / cols;
            let c1 = (pc + 1) * img.width / cols;
            raw.extend_from_slice(&quadrant_means(img, r0, r1, c0, c1));
        }
    }
    let raw = Tensor::new(vec![k, PATCH_RAW_DIM], raw)?;
    let mut embedded = crate::tensor::add_row_broadcast(
        &crate::tensor::matmul(&raw, &w.embed_w)?,
        &w.embed_b,
    )?;
    embedded = add(&embedded, &w.pos)?;
    let attended = add(&embedded, &mha(&embedded, &embedded, &w.attn, AttnMask::None)?)?;
    let features = ffn_residual(&attended, &w.ffn)?;
    debug_assert_eq!(features.dims(), &[k, d_v]);
    Ok(PatchFeatures { features, grid: (rows, cols) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::weights::ModelBundle;

    fn toy_cfg() -> ArchConfig {
        ArchConfig {
            d_v: 10,
            d_t: 8,
            heads: 2,
            ite_layers: 1,
            cap_layers: 1,
            qa_enc_layers: 1,
            qa_dec_layers: 1,
            vocab_size: 16,
            max_enc_len: 32,
            patch_grid: (2, 2),
        }
    }

    fn toy_image(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = RngStream::new(seed).child(3);
        Image::new(h, w, (0..h * w * 3).map(|_| rng.next_f64()).collect()).unwrap()
    }

    #[test]
    fn encoding_is_deterministic() {
        let cfg = toy_cfg();
        let b = ModelBundle::seeded(&cfg, 0).unwrap();
        let img = toy_image(1, 8, 8);
        let f1 = vision_encode(&b.vision, &cfg, &img).unwrap();
        let f2 = vision_encode(&b.vision, &cfg, &img).unwrap();
        assert_eq!(f1.features.data(), f2.features.data());
    }

    #[test]
    fn single_pixel_change_moves_every_patch_feature() {
        // Self-attention mixes patches, so even far-away rows should move.
        let cfg = toy_cfg();
        let b = ModelBundle::seeded(&cfg, 0).unwrap();
        let img = toy_image(2, 8, 8);
        let mut bumped = img.clone();
        bumped.data[0] = (bumped.data[0] + 0.5) % 1.0;
        let f = vision_encode(&b.vision, &cfg, &img).unwrap();
        let g = vision_encode(&b.vision, &cfg, &bumped).unwrap();
        for row in 0..cfg.k() {
            let moved = (0..cfg.d_v).any(|c| f.features.get2(row, c) != g.features.get2(row, c));
            assert!(moved, "patch {row} unchanged");
        }
    }

    #[test]
    fn uniform_color_image_gives_identical_patch_raws_but_distinct_features() {
        // Identical content, different positions: the position table must
        // be the only thing separating the rows.
        let cfg = toy_cfg();
        let b = ModelBundle::seeded(&cfg, 0).unwrap();
        let img = Image::new(8, 8, vec![0.5; 8 * 8 * 3]).unwrap();
        let f = vision_encode(&b.vision, &cfg, &img).unwrap();
        let distinct = (1..cfg.k())
            .any(|row| (0..cfg.d_v).any(|c| f.features.get2(row, c) != f.features.get2(0, c)));
        assert!(distinct);
    }

    #[test]
    fn odd_image_sizes_are_accepted() {
        let cfg = toy_cfg();
        let b = ModelBundle::seeded(&cfg, 0).unwrap();
        for (h, w) in [(5, 7), (2, 2), (3, 9)] {
            let img = toy_image(4, h, w);
            let f = vision_encode(&b.vision, &cfg, &img).unwrap();
            assert_eq!(f.features.dims(), &[cfg.k(), cfg.d_v]);
        }
    }

    #[test]
    fn undersized_image_is_rejected() {
        let cfg = toy_cfg();
        let b = ModelBundle::seeded(&cfg, 0).unwrap();
        let img = toy_image(5, 1, 8);
        assert!(vision_encode(&b.vision, &cfg, &img).is_err());
    }

    #[test]
    fn image_validation_rejects_bad_data() {
        assert!(Image::new(2, 2, vec![0.0; 11]).is_err());
        assert!(Image::new(1, 1, vec![0.5, 0.5, 1.5]).is_err());
        assert!(Image::new(1, 1, vec![0.5, -0.1, 0.5]).is_err());
    }
}
