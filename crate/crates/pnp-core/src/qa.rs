//! Answer generator: bidirectional encoder over rendered question+context
//! groups, causal decoder cross-attending over the fused context, greedy
//! decoding.
//!
//! The encoder enforces the hard input cap `max_enc_len`; everything about
//! how multiple caption groups are combined lives in `fusion`.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::ArchConfig;
use crate::error::{Error, Result};
use crate::mha::{ffn_residual, mha, AttnMask};
use crate::tensor::{add, add_row_broadcast, matmul, Tensor};
use crate::text::{BOS, EOS};
use crate::weights::{QaWeights, ANSWER_POS};

/// Generated answers are cut off after this many tokens past BOS.
pub const MAX_ANSWER_TOKENS: usize = 8;

const _: () = assert!(MAX_ANSWER_TOKENS < ANSWER_POS);

fn embed(table: &Tensor, pos: &Tensor, cfg: &ArchConfig, tokens: &[u32]) -> Result<Tensor> {
    let d_t = cfg.d_t;
    let mut data = Vec::with_capacity(tokens.len() * d_t);
    for (i, &tok) in tokens.iter().enumerate() {
        let tok = tok as usize;
        if tok >= cfg.vocab_size {
            return Err(Error::InvalidParam {
                name: "tokens",
                detail: alloc::format!("token id {tok} outside vocab of {}", cfg.vocab_size),
            });
        }
        for c in 0..d_t {
            data.push(table.get2(tok, c) + pos.get2(i, c));
        }
    }
    Tensor::new(vec![tokens.len(), d_t], data)
}

/// Encodes one framed token group. Returns the token representations
/// (len x d_t) and the number of self-attention token pairs the pass
/// performed (len^2 per layer).
pub fn qa_encode(w: &QaWeights, cfg: &ArchConfig, framed: &[u32]) -> Result<(Tensor, u64)> {
    if framed.is_empty() {
        return Err(Error::InvalidParam { name: "group", detail: "empty token group".into() });
    }
    if framed.len() > cfg.max_enc_len {
        return Err(Error::Overlong { len: framed.len(), max: cfg.max_enc_len });
    }
    let mut y = embed(&w.embed, &w.enc_pos, cfg, framed)?;
    let mut pairs = 0u64;
    for layer in &w.enc_layers {
        y = add(&y, &mha(&y, &y, &layer.self_attn, AttnMask::None)?)?;
        y = ffn_residual(&y, &layer.ffn)?;
        pairs += (framed.len() * framed.len()) as u64;
    }
    Ok((y, pairs))
}

/// One decoder forward over the whole current prefix: next-token logits
/// plus the number of cross-attention token pairs performed.
pub fn qa_decode_step(
    w: &QaWeights,
    cfg: &ArchConfig,
    prefix: &[u32],
    fused: &Tensor,
) -> Result<(Vec<f64>, u64)> {
    if prefix.is_empty() {
        return Err(Error::InvalidParam { name: "prefix", detail: "empty decoder prefix".into() });
    }
    if prefix.len() > ANSWER_POS {
        return Err(Error::Overlong { len: prefix.len(), max: ANSWER_POS });
    }
    if fused.rank() != 2 || fused.cols() != cfg.d_t || fused.rows() == 0 {
        return Err(Error::ShapeMismatch {
            op: "qa_decode_step",
            expected: vec![1, cfg.d_t],
            actual: fused.dims().to_vec(),
        });
    }
    let mut y = embed(&w.embed, &w.dec_pos, cfg, prefix)?;
    let mut cross_pairs = 0u64;
    for layer in &w.dec_layers {
        y = add(&y, &mha(&y, &y, &layer.self_attn, AttnMask::Causal)?)?;
        y = add(&y, &mha(&y, fused, &layer.cross_attn, AttnMask::None)?)?;
        y = ffn_residual(&y, &layer.ffn)?;
        cross_pairs += (prefix.len() * fused.rows()) as u64;
    }
    let last = Tensor::new(vec![1, cfg.d_t], y.row(y.rows() - 1).to_vec())?;
    let logits = add_row_broadcast(&matmul(&last, &w.out_w)?, &w.out_b)?;
    Ok((logits.data().to_vec(), cross_pairs))
}

/// Greedy decode over a fused context. Returns the generated token ids
/// (without BOS, possibly ending in EOS), the per-step logits, and the
/// total cross-attention pair count.
pub fn qa_decode_greedy(
    w: &QaWeights,
    cfg: &ArchConfig,
    fused: &Tensor,
) -> Result<(Vec<u32>, Vec<Vec<f64>>, u64)> {
    let mut prefix = vec![BOS];
    let mut step_logits = Vec::new();
    let mut cross_pairs = 0u64;
    for _ in 0..MAX_ANSWER_TOKENS {
        let (logits, pairs) = qa_decode_step(w, cfg, &prefix, fused)?;
        cross_pairs += pairs;
        let mut best = 0usize;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        step_logits.push(logits);
        prefix.push(best as u32);
        if best as u32 == EOS {
            break;
        }
    }
    Ok((prefix[1..].to_vec(), step_logits, cross_pairs))
}
