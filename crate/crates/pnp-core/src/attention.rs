//! Question-to-patch cross-attention.
//!
//! One layer attends text states Y (M x d_t) over patch features X (K x d_v).
//! Per head h:
//!
//!   A_h = softmax_rows( (Y Wq_h) (X Wk_h)^T / sqrt(d_t) )     (M x K)
//!   ctx_h = A_h (X Wv_h)                                      (M x d_head)
//!
//! and the concatenated per-head contexts go through Wo. The query and key
//! projections are full-width (d_t wide per head) and the logit scale is
//! sqrt(d_t), not sqrt(d_head); the attention maps this produces are the
//! ones the relevance computation differentiates, so their exact shape is
//! part of the contract here, not an implementation detail.
//!
//! `forward_from_attn` recomputes the layer output from an explicit
//! attention tensor. The normal forward calls it with the freshly computed
//! A, so replaying a recorded A reproduces the recorded output bit for bit.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_nt, softmax_rows, Tensor};

/// Weights of one cross-attention layer.
///
/// `w_q[h]`: d_t x d_t, `w_k[h]`: d_v x d_t, `w_v[h]`: d_v x d_head,
/// `w_o`: d_t x d_t.
#[derive(Debug, Clone)]
pub struct CrossAttnParams {
    pub w_q: Vec<Tensor>,
    pub w_k: Vec<Tensor>,
    pub w_v: Vec<Tensor>,
    pub w_o: Tensor,
}

impl CrossAttnParams {
    pub fn heads(&self) -> usize {
        self.w_q.len()
    }
}

/// What one forward pass records for backward and replay.
#[derive(Debug, Clone)]
pub struct CrossAttnRecord {
    /// Pre-softmax scores, (H, M, K).
    pub logits: Tensor,
    /// Post-softmax attention, (H, M, K).
    pub attn: Tensor,
}

/// Computes per-head attention maps for `y` over `x`.
/// Returns (logits, attn), both (H, M, K).
pub fn attention_maps(y: &Tensor, x: &Tensor, params: &CrossAttnParams) -> Result<(Tensor, Tensor)> {
    let heads = params.heads();
    let m = y.rows();
    let k = x.rows();
    let d_t = y.cols();
    let scale = 1.0 / libm::sqrt(d_t as f64);
    let mut logits = Vec::with_capacity(heads * m * k);
    for h in 0..heads {
        let q = matmul(y, &params.w_q[h])?; // M x d_t
        let kk = matmul(x, &params.w_k[h])?; // K x d_t
        let scores = matmul_nt(&q, &kk)?; // M x K
        logits.extend(scores.data().iter().map(|v| v * scale));
    }
    let logits = Tensor::new(vec![heads, m, k], logits)?;
    let attn = softmax_rows(&logits)?;
    Ok((logits, attn))
}

/// Layer output given an explicit attention tensor (H, M, K).
/// This is the single code path that turns A into the layer output; the
/// gradient checker overrides A here without touching anything upstream.
pub fn forward_from_attn(x: &Tensor, attn: &Tensor, params: &CrossAttnParams) -> Result<Tensor> {
    let heads = params.heads();
    if attn.rank() != 3 || attn.dims()[0] != heads || attn.dims()[2] != x.rows() {
        return Err(Error::ShapeMismatch {
            op: "forward_from_attn",
            expected: vec![heads, attn.dims().get(1).copied().unwrap_or(0), x.rows()],
            actual: attn.dims().to_vec(),
        });
    }
    let m = attn.dims()[1];
    let k = x.rows();
    let d_head = params.w_v[0].cols();
    let d_t = params.w_o.rows();
    let mut ctx = vec![0.0; m * d_t];
    for h in 0..heads {
        let v = matmul(x, &params.w_v[h])?; // K x d_head
        let a_h = Tensor::new(
            vec![m, k],
            attn.data()[h * m * k..(h + 1) * m * k].to_vec(),
        )?;
        let ctx_h = matmul(&a_h, &v)?; // M x d_head
        for r in 0..m {
            for c in 0..d_head {
                ctx[r * d_t + h * d_head + c] = ctx_h.get2(r, c);
            }
        }
    }
    let ctx = Tensor::new(vec![m, d_t], ctx)?;
    matmul(&ctx, &params.w_o)
}

/// Full layer forward: returns the output (M x d_t, pre-residual) and the
/// record needed for backward.
pub fn cross_attention_forward(
    y: &Tensor,
    x: &Tensor,
    params: &CrossAttnParams,
) -> Result<(Tensor, CrossAttnRecord)> {
    let (logits, attn) = attention_maps(y, x, params)?;
    let out = forward_from_attn(x, &attn, params)?;
    Ok((out, CrossAttnRecord { logits, attn }))
}

/// Softmax vector-Jacobian product for one row:
/// d_logit[i] = a[i] * (d_a[i] - sum_j d_a[j] * a[j]).
pub fn softmax_vjp_row(a: &[f64], d_a: &[f64], d_logit: &mut [f64]) {
    let mut dot = 0.0;
    for (av, dv) in a.iter().zip(d_a) {
        dot += av * dv;
    }
    for i in 0..a.len() {
        d_logit[i] = a[i] * (d_a[i] - dot);
    }
}

/// Backward through one layer. Given the adjoint of the layer output
/// (pre-residual), returns the adjoint of `y` and the adjoint at the
/// post-softmax attention node, (H, M, K).
///
/// The attention adjoint is read off before the softmax Jacobian is
/// applied; the softmax is then differentiated normally to keep
/// propagating into `y` and earlier layers.
pub fn cross_attention_backward(
    y_cols: usize,
    x: &Tensor,
    record: &CrossAttnRecord,
    params: &CrossAttnParams,
    d_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let heads = params.heads();
    let m = record.attn.dims()[1];
    let k = record.attn.dims()[2];
    let d_head = params.w_v[0].cols();
    let d_t = y_cols;
    let scale = 1.0 / libm::sqrt(d_t as f64);

    // d_ctx = d_out @ w_o^T
    let d_ctx = matmul_nt(d_out, &params.w_o)?;

    let mut d_y = vec![0.0; m * d_t];
    let mut d_attn = vec![0.0; heads * m * k];
    for h in 0..heads {
        let v = matmul(x, &params.w_v[h])?; // K x d_head
        let mut d_ctx_h = vec![0.0; m * d_head];
        for r in 0..m {
            for c in 0..d_head {
                d_ctx_h[r * d_head + c] = d_ctx.get2(r, h * d_head + c);
            }
        }
        let d_ctx_h = Tensor::new(vec![m, d_head], d_ctx_h)?;
        // ctx_h = A_h @ V  =>  dA_h = d_ctx_h @ V^T
        let d_a = matmul_nt(&d_ctx_h, &v)?; // M x K
        d_attn[h * m * k..(h + 1) * m * k].copy_from_slice(d_a.data());

        // Through the softmax, then the scaled score product.
        let mut d_logits = vec![0.0; m * k];
        for r in 0..m {
            let a_row = &record.attn.data()[(h * m + r) * k..(h * m + r + 1) * k];
            softmax_vjp_row(a_row, d_a.row(r), &mut d_logits[r * k..(r + 1) * k]);
        }
        let d_logits = Tensor::new(vec![m, k], d_logits)?;
        // logits = (Y Wq)(X Wk)^T * scale  =>  dQ = d_logits @ (X Wk) * scale
        let kk = matmul(x, &params.w_k[h])?;
        let d_q = matmul(&d_logits, &kk)?; // M x d_t
        let d_y_h = matmul_nt(&d_q, &params.w_q[h])?; // M x d_t
        for (acc, v) in d_y.iter_mut().zip(d_y_h.data()) {
            *acc += v * scale;
        }
    }
    Ok((
        Tensor::new(vec![m, d_t], d_y)?,
        Tensor::new(vec![heads, m, k], d_attn)?,
    ))
}
