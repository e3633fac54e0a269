//! Model architecture dimensions shared by every component.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Architecture hyperparameters. These describe the weight shapes; run-time
/// knobs (caption counts, decoding, fusion) live in `pipeline::RunConfig`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    /// Patch feature width produced by the vision encoder.
    pub d_v: usize,
    /// Text hidden width used by the matcher, captioner, and answerer.
    pub d_t: usize,
    /// Attention heads in the text-side models. Must divide `d_t`.
    pub heads: usize,
    /// Cross-attention layers in the image-question matcher.
    pub ite_layers: usize,
    /// Decoder layers in the captioner.
    pub cap_layers: usize,
    /// Encoder layers in the answer generator.
    pub qa_enc_layers: usize,
    /// Decoder layers in the answer generator.
    pub qa_dec_layers: usize,
    /// Vocabulary size including the four reserved tokens.
    pub vocab_size: usize,
    /// Hard cap on a single encoder pass, in tokens.
    pub max_enc_len: usize,
    /// Patch grid as (rows, cols); the patch count K is their product.
    pub patch_grid: (usize, usize),
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        let positive: &[(&'static str, usize)] = &[
            ("d_v", self.d_v),
            ("d_t", self.d_t),
            ("heads", self.heads),
            ("ite_layers", self.ite_layers),
            ("cap_layers", self.cap_layers),
            ("qa_enc_layers", self.qa_enc_layers),
            ("qa_dec_layers", self.qa_dec_layers),
            ("max_enc_len", self.max_enc_len),
            ("grid rows", self.patch_grid.0),
            ("grid cols", self.patch_grid.1),
        ];
        for &(name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidParam { name: "arch", detail: format!("{name} must be positive") });
            }
        }
        if !self.d_t.is_multiple_of(self.heads) {
            return Err(Error::InvalidParam {
                name: "arch",
                detail: format!("heads {} must divide d_t {}", self.heads, self.d_t),
            });
        }
        if self.vocab_size < 5 {
            return Err(Error::InvalidParam {
                name: "arch",
                detail: format!("vocab_size {} leaves no room past reserved tokens", self.vocab_size),
            });
        }
        Ok(())
    }

    /// Patch count K.
    pub fn k(&self) -> usize {
        self.patch_grid.0 * self.patch_grid.1
    }

    pub fn d_head(&self) -> usize {
        self.d_t / self.heads
    }

    /// Hidden width of text-side feed-forward blocks.
    pub fn ffn_t(&self) -> usize {
        2 * self.d_t
    }

    /// Hidden width of the vision feed-forward block.
    pub fn ffn_v(&self) -> usize {
        2 * self.d_v
    }

    /// Longest framed question the matcher accepts (token budget for its
    /// position table).
    pub fn max_question_len(&self) -> usize {
        64
    }

    /// Token budget for the captioner's position table.
    pub fn max_caption_positions(&self) -> usize {
        64
    }

    pub fn dims_summary(&self) -> Vec<usize> {
        alloc::vec![self.d_v, self.d_t, self.heads, self.k()]
    }
}
