//! Image-text matcher: a stack of question-to-patch cross-attention layers
//! ending in a scalar similarity score, with a recorded trace that supports
//! exact replay and a hand-rolled backward pass.
//!
//! Layer ℓ maps text states Y through cross-attention over fixed patch
//! features X and a tanh feed-forward block, both with residuals:
//!
//!   Y_mid  = Y + CrossAttn(Y, X)
//!   Y_next = Y_mid + tanh(Y_mid W1 + b1) W2 + b2
//!
//! The similarity is a linear read-out of the first (BOS) token of the
//! final layer. `frozen_attention_forward` re-runs the network from a
//! recorded layer input with that layer's attention tensor replaced
//! verbatim, which is what lets finite differences probe "the derivative
//! of the score with respect to the attention map" without touching the
//! softmax that produced it. `backward` reads the adjoint off at each
//! post-softmax attention node while still differentiating through the
//! softmax on the way to earlier layers.

use alloc::vec;
use alloc::vec::Vec;

use crate::attention::{
    attention_maps, cross_attention_backward, forward_from_attn, CrossAttnRecord,
};
use crate::config::ArchConfig;
use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_nt, Tensor};
use crate::weights::{IteLayerWeights, IteWeights};

/// Everything one traced forward pass records.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    /// Patch features the pass ran over, K x d_v.
    pub x: Tensor,
    /// Framed question length M.
    pub m: usize,
    pub layers: Vec<LayerTraceRecord>,
    /// Final text states, M x d_t.
    pub y_out: Tensor,
    /// Similarity score of the pass.
    pub sim: f64,
}

#[derive(Debug, Clone)]
pub struct LayerTraceRecord {
    /// Layer input, M x d_t.
    pub y_in: Tensor,
    pub attn: CrossAttnRecord,
    /// After the cross-attention residual, M x d_t.
    pub y_mid: Tensor,
    /// tanh activations of the feed-forward block, M x ffn_t.
    pub ffn_h: Tensor,
}

/// Token embedding plus position table for the framed question.
pub fn embed_question(w: &IteWeights, cfg: &ArchConfig, framed: &[u32]) -> Result<Tensor> {
    if framed.is_empty() {
        return Err(Error::InvalidParam { name: "question", detail: "empty token sequence".into() });
    }
    if framed.len() > cfg.max_question_len() {
        return Err(Error::Overlong { len: framed.len(), max: cfg.max_question_len() });
    }
    let d_t = cfg.d_t;
    let mut data = Vec::with_capacity(framed.len() * d_t);
    for (pos, &tok) in framed.iter().enumerate() {
        let tok = tok as usize;
        if tok >= cfg.vocab_size {
            return Err(Error::InvalidParam {
                name: "question",
                detail: alloc::format!("token id {tok} outside vocab of {}", cfg.vocab_size),
            });
        }
        for c in 0..d_t {
            data.push(w.embed.get2(tok, c) + w.pos.get2(pos, c));
        }
    }
    Tensor::new(vec![framed.len(), d_t], data)
}

/// One layer from an explicit attention tensor. Shared by the normal
/// forward and the frozen replay so the two are bit-identical on equal
/// inputs. Returns (y_next, y_mid, ffn_h).
fn layer_from_attn(
    y_in: &Tensor,
    x: &Tensor,
    attn: &Tensor,
    lw: &IteLayerWeights,
) -> Result<(Tensor, Tensor, Tensor)> {
    let attn_out = forward_from_attn(x, attn, &lw.cross)?;
    let y_mid = crate::tensor::add(y_in, &attn_out)?;
    let pre = crate::tensor::add_row_broadcast(&matmul(&y_mid, &lw.ffn.w1)?, &lw.ffn.b1)?;
    let h = crate::tensor::tanh(&pre)?;
    let y_next = crate::tensor::add(
        &y_mid,
        &crate::tensor::add_row_broadcast(&matmul(&h, &lw.ffn.w2)?, &lw.ffn.b2)?,
    )?;
    Ok((y_next, y_mid, h))
}

fn similarity_head(w: &IteWeights, y_out: &Tensor) -> f64 {
    let mut sim = w.sim_b.data()[0];
    for (a, b) in w.sim_w.data().iter().zip(y_out.row(0)) {
        sim += a * b;
    }
    sim
}

fn check_x(cfg: &ArchConfig, x: &Tensor) -> Result<()> {
    if x.rank() != 2 || x.rows() != cfg.k() || x.cols() != cfg.d_v {
        return Err(Error::ShapeMismatch {
            op: "ite_similarity",
            expected: vec![cfg.k(), cfg.d_v],
            actual: x.dims().to_vec(),
        });
    }
    Ok(())
}

/// Question-image similarity. With `record`, also returns the full trace.
pub fn ite_similarity(
    w: &IteWeights,
    cfg: &ArchConfig,
    x: &Tensor,
    framed: &[u32],
    record: bool,
) -> Result<(f64, Option<AttentionTrace>)> {
    check_x(cfg, x)?;
    let mut y = embed_question(w, cfg, framed)?;
    let m = framed.len();
    let mut records = Vec::new();
    for lw in &w.layers {
        let (logits, attn) = attention_maps(&y, x, &lw.cross)?;
        let (y_next, y_mid, ffn_h) = layer_from_attn(&y, x, &attn, lw)?;
        if record {
            records.push(LayerTraceRecord {
                y_in: y,
                attn: CrossAttnRecord { logits, attn },
                y_mid,
                ffn_h,
            });
        }
        y = y_next;
    }
    let sim = similarity_head(w, &y);
    if !sim.is_finite() {
        return Err(Error::NonFinite { op: "ite_similarity" });
    }
    let trace = record.then(|| AttentionTrace {
        x: x.clone(),
        m,
        layers: records,
        y_out: y,
        sim,
    });
    Ok((sim, trace))
}

fn check_trace(w: &IteWeights, trace: &AttentionTrace, layer: usize) -> Result<()> {
    if trace.layers.len() != w.layers.len() {
        return Err(Error::TraceNotRecorded);
    }
    if layer >= w.layers.len() {
        return Err(Error::LayerOutOfRange { layer, layers: w.layers.len() });
    }
    Ok(())
}

/// Re-runs the stack from the recorded input of `layer`, with that layer's
/// attention replaced by `attn_override`; later layers run normally.
/// Replaying the recorded attention reproduces the recorded score exactly.
pub fn frozen_attention_forward(
    w: &IteWeights,
    trace: &AttentionTrace,
    layer: usize,
    attn_override: &Tensor,
) -> Result<f64> {
    check_trace(w, trace, layer)?;
    let rec = &trace.layers[layer];
    if attn_override.dims() != rec.attn.attn.dims() {
        return Err(Error::ShapeMismatch {
            op: "frozen_attention_forward",
            expected: rec.attn.attn.dims().to_vec(),
            actual: attn_override.dims().to_vec(),
        });
    }
    let (mut y, _, _) = layer_from_attn(&rec.y_in, &trace.x, attn_override, &w.layers[layer])?;
    for lw in &w.layers[layer + 1..] {
        let (_, attn) = attention_maps(&y, &trace.x, &lw.cross)?;
        let (y_next, _, _) = layer_from_attn(&y, &trace.x, &attn, lw)?;
        y = y_next;
    }
    let sim = similarity_head(w, &y);
    if !sim.is_finite() {
        return Err(Error::NonFinite { op: "frozen_attention_forward" });
    }
    Ok(sim)
}

/// Adjoints of the similarity score at every post-softmax attention node,
/// one (H, M, K) tensor per layer, from a single reverse sweep.
pub fn ite_backward(w: &IteWeights, cfg: &ArchConfig, trace: &AttentionTrace) -> Result<Vec<Tensor>> {
    check_trace(w, trace, 0)?;
    let m = trace.m;
    let d_t = cfg.d_t;
    // d sim / d y_out: row 0 holds the head weights.
    let mut d_y = vec![0.0; m * d_t];
    d_y[..d_t].copy_from_slice(w.sim_w.data());
    let mut d_y = Tensor::new(vec![m, d_t], d_y)?;

    let mut grads = vec![Tensor::zeros(vec![0]); w.layers.len()];
    for (l, lw) in w.layers.iter().enumerate().rev() {
        let rec = &trace.layers[l];
        // Feed-forward block backward.
        let d_h = matmul_nt(&d_y, &lw.ffn.w2)?;
        let d_pre = Tensor::from_fn(d_h.dims().to_vec(), |i| {
            let h = rec.ffn_h.data()[i];
            d_h.data()[i] * (1.0 - h * h)
        })?;
        let d_y_mid = crate::tensor::add(&d_y, &matmul_nt(&d_pre, &lw.ffn.w1)?)?;
        // Cross-attention backward; the residual passes d_y_mid through.
        let (d_y_attn, d_attn) =
            cross_attention_backward(d_t, &trace.x, &rec.attn, &lw.cross, &d_y_mid)?;
        grads[l] = d_attn;
        d_y = crate::tensor::add(&d_y_mid, &d_y_attn)?;
    }
    Ok(grads)
}

/// Adjoint at one layer's attention node.
pub fn grad_wrt_attention(
    w: &IteWeights,
    cfg: &ArchConfig,
    trace: &AttentionTrace,
    layer: usize,
) -> Result<Tensor> {
    check_trace(w, trace, layer)?;
    let mut grads = ite_backward(w, cfg, trace)?;
    Ok(grads.swap_remove(layer))
}

/// Central finite differences of the score with respect to one layer's
/// attention entries, using the frozen replay. O(H*M*K) forward pairs.
pub fn finite_diff_grads(
    w: &IteWeights,
    trace: &AttentionTrace,
    layer: usize,
    epsilon: f64,
) -> Result<Tensor> {
    if epsilon <= 0.0 || epsilon.is_nan() {
        return Err(Error::InvalidParam {
            name: "epsilon",
            detail: alloc::format!("must be positive, got {epsilon}"),
        });
    }
    check_trace(w, trace, layer)?;
    let base = &trace.layers[layer].attn.attn;
    let dims = base.dims().to_vec();
    let n = base.data().len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut plus = base.data().to_vec();
        plus[i] += epsilon;
        let mut minus = base.data().to_vec();
        minus[i] -= epsilon;
        let f_plus = frozen_attention_forward(w, trace, layer, &Tensor::new(dims.clone(), plus)?)?;
        let f_minus = frozen_attention_forward(w, trace, layer, &Tensor::new(dims.clone(), minus)?)?;
        out.push((f_plus - f_minus) / (2.0 * epsilon));
    }
    Tensor::new(dims, out)
}
