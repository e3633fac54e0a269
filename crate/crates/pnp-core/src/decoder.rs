//! Captioner forward pass: next-token logits for a token prefix over a
//! patch subset.
//!
//! The decoder embeds the prefix, runs causal self-attention, cross-attends
//! over the selected patch feature rows, applies the feed-forward block
//! (all with residuals), and reads logits off the last position. Patch rows
//! keep the positional identity given to them by the vision encoder, so the
//! order in which a subset's indices are listed cannot matter; indices are
//! canonicalized (sorted) before the rows are gathered.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::ArchConfig;
use crate::error::{Error, Result};
use crate::mha::{ffn_residual, mha, AttnMask};
use crate::sampler::PatchSubset;
use crate::tensor::{add, add_row_broadcast, matmul, Tensor};
use crate::vision::PatchFeatures;
use crate::weights::CaptionerWeights;

/// Gather the subset's rows (sorted ascending) from the full patch matrix.
pub fn gather_subset(patches: &PatchFeatures, subset: &PatchSubset) -> Result<Tensor> {
    if subset.indices.is_empty() {
        return Err(Error::EmptySubset);
    }
    let k = patches.features.rows();
    let d_v = patches.features.cols();
    let mut order: Vec<usize> = subset.indices.clone();
    order.sort_unstable();
    if order.windows(2).any(|w| w[0] == w[1]) || *order.last().unwrap() >= k {
        return Err(Error::InvalidParam {
            name: "subset",
            detail: alloc::format!("indices must be distinct and < {k}"),
        });
    }
    let mut data = Vec::with_capacity(order.len() * d_v);
    for &i in &order {
        data.extend_from_slice(patches.features.row(i));
    }
    Tensor::new(vec![order.len(), d_v], data)
}

fn embed_prefix(w: &CaptionerWeights, cfg: &ArchConfig, tokens: &[u32]) -> Result<Tensor> {
    if tokens.is_empty() {
        return Err(Error::InvalidParam { name: "prefix", detail: "empty token prefix".into() });
    }
    if tokens.len() > cfg.max_caption_positions() {
        return Err(Error::Overlong { len: tokens.len(), max: cfg.max_caption_positions() });
    }
    let d_t = cfg.d_t;
    let mut data = Vec::with_capacity(tokens.len() * d_t);
    for (pos, &tok) in tokens.iter().enumerate() {
        let tok = tok as usize;
        if tok >= cfg.vocab_size {
            return Err(Error::InvalidParam {
                name: "prefix",
                detail: alloc::format!("token id {tok} outside vocab of {}", cfg.vocab_size),
            });
        }
        for c in 0..d_t {
            data.push(w.embed.get2(tok, c) + w.pos.get2(pos, c));
        }
    }
    Tensor::new(vec![tokens.len(), d_t], data)
}

/// Next-token logits (length vocab_size) after the given prefix.
pub fn caption_logits(
    w: &CaptionerWeights,
    cfg: &ArchConfig,
    tokens: &[u32],
    patches: &PatchFeatures,
    subset: &PatchSubset,
) -> Result<Vec<f64>> {
    let xs = gather_subset(patches, subset)?;
    let mut y = embed_prefix(w, cfg, tokens)?;
    for layer in &w.layers {
        y = add(&y, &mha(&y, &y, &layer.self_attn, AttnMask::Causal)?)?;
        y = add(&y, &mha(&y, &xs, &layer.cross_attn, AttnMask::None)?)?;
        y = ffn_residual(&y, &layer.ffn)?;
    }
    let last = Tensor::new(vec![1, cfg.d_t], y.row(y.rows() - 1).to_vec())?;
    let logits = add_row_broadcast(&matmul(&last, &w.out_w)?, &w.out_b)?;
    Ok(logits.data().to_vec())
}
