//! Packed multi-head attention and feed-forward blocks.
//!
//! These are the conventional transformer pieces used by the vision
//! encoder, the captioner, and the answer generator: packed d-wide
//! projections, per-head slices, 1/sqrt(d_head) scaling. The
//! image-question matcher does NOT use this block; its cross-attention has
//! a different convention and lives in `attention`.

use alloc::vec;

use crate::error::{Error, Result};
use crate::tensor::{add, add_row_broadcast, matmul, softmax_in_place, tanh, Tensor};

/// Packed attention weights. `w_q`: d_q_src x d, `w_k`/`w_v`: d_kv_src x d,
/// `w_o`: d x d.
#[derive(Debug, Clone)]
pub struct MhaParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
    pub heads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttnMask {
    None,
    /// Row r attends to keys 0..=r. Requires square attention.
    Causal,
}

/// Attention block output (pre-residual): softmax(Q K^T / sqrt(d_head)) V
/// per head, concatenated, projected through `w_o`.
pub fn mha(q_src: &Tensor, kv_src: &Tensor, p: &MhaParams, mask: AttnMask) -> Result<Tensor> {
    let q = matmul(q_src, &p.w_q)?;
    let k = matmul(kv_src, &p.w_k)?;
    let v = matmul(kv_src, &p.w_v)?;
    let d = q.cols();
    if d % p.heads != 0 {
        return Err(Error::DimMismatch {
            op: "mha",
            detail: alloc::format!("heads {} do not divide width {d}", p.heads),
        });
    }
    let d_head = d / p.heads;
    let m_q = q.rows();
    let m_k = k.rows();
    if mask == AttnMask::Causal && m_q != m_k {
        return Err(Error::DimMismatch {
            op: "mha",
            detail: alloc::format!("causal mask needs square attention, got {m_q}x{m_k}"),
        });
    }
    let scale = 1.0 / libm::sqrt(d_head as f64);
    let mut ctx = vec![0.0; m_q * d];
    for h in 0..p.heads {
        let col0 = h * d_head;
        for r in 0..m_q {
            let visible = match mask {
                AttnMask::None => m_k,
                AttnMask::Causal => r + 1,
            };
            let mut scores = vec![0.0; visible];
            for (c, s) in scores.iter_mut().enumerate() {
                let mut acc = 0.0;
                for i in 0..d_head {
                    acc += q.get2(r, col0 + i) * k.get2(c, col0 + i);
                }
                *s = acc * scale;
            }
            softmax_in_place(&mut scores);
            for i in 0..d_head {
                let mut acc = 0.0;
                for (c, &a) in scores.iter().enumerate() {
                    acc += a * v.get2(c, col0 + i);
                }
                ctx[r * d + col0 + i] = acc;
            }
        }
    }
    matmul(&Tensor::new(vec![m_q, d], ctx)?, &p.w_o)
}

/// Feed-forward weights: w1 d x f, b1 f, w2 f x d, b2 d.
#[derive(Debug, Clone)]
pub struct FfnWeights {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// x + tanh(x w1 + b1) w2 + b2.
pub fn ffn_residual(x: &Tensor, w: &FfnWeights) -> Result<Tensor> {
    let h = tanh(&add_row_broadcast(&matmul(x, &w.w1)?, &w.b1)?)?;
    add(x, &add_row_broadcast(&matmul(&h, &w.w2)?, &w.b2)?)
}
