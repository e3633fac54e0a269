//! Per-patch relevance from recorded attention and its gradients.
//!
//! For the chosen layer, each patch i scores
//!
//!   rel(i) = (1/H) * sum_j sum_h max(0, grad[h][j][i]) * A[h][j][i]
//!
//! where the sum over j runs over all M question tokens, BOS and EOS
//! included, and the clamp is applied per entry before weighting. Scaling
//! all gradients by c > 0 scales the whole map by c, so downstream
//! sampling probabilities (which normalize) do not depend on the score's
//! overall scale.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ite::AttentionTrace;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMap {
    /// One nonnegative value per patch, grid row-major.
    pub rel: Vec<f64>,
    /// Layer the map was computed from.
    pub layer: usize,
    pub question_id: String,
    /// Patch grid (rows, cols); rows*cols == rel.len().
    pub grid: (usize, usize),
}

pub fn compute_relevance(
    trace: &AttentionTrace,
    grads: &Tensor,
    layer: usize,
    question_id: String,
    grid: (usize, usize),
) -> Result<RelevanceMap> {
    if layer >= trace.layers.len() {
        return Err(Error::LayerOutOfRange { layer, layers: trace.layers.len() });
    }
    let attn = &trace.layers[layer].attn.attn;
    if grads.dims() != attn.dims() {
        return Err(Error::ShapeMismatch {
            op: "compute_relevance",
            expected: attn.dims().to_vec(),
            actual: grads.dims().to_vec(),
        });
    }
    let (heads, m, k) = (attn.dims()[0], attn.dims()[1], attn.dims()[2]);
    if grid.0 * grid.1 != k {
        return Err(Error::DimMismatch {
            op: "compute_relevance",
            detail: alloc::format!("grid {}x{} does not cover {k} patches", grid.0, grid.1),
        });
    }
    let mut rel = vec![0.0; k];
    for h in 0..heads {
        for j in 0..m {
            for (i, r) in rel.iter_mut().enumerate() {
                let g = grads.get3(h, j, i);
                if g > 0.0 {
                    *r += g * attn.get3(h, j, i);
                }
            }
        }
    }
    let inv_h = 1.0 / heads as f64;
    for r in rel.iter_mut() {
        *r *= inv_h;
    }
    Ok(RelevanceMap { rel, layer, question_id, grid })
}

/// Min-max quantization of a relevance map to bytes on its grid.
/// A constant map (including all-zero) renders mid-gray.
pub fn quantize_heatmap(map: &RelevanceMap) -> Vec<u8> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in &map.rel {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi <= lo || hi.is_nan() || lo.is_nan() {
        return vec![128; map.rel.len()];
    }
    map.rel
        .iter()
        .map(|&v| libm::round((v - lo) / (hi - lo) * 255.0) as u8)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::CrossAttnRecord;
    use crate::config::ArchConfig;
    use crate::ite::{
        finite_diff_grads, grad_wrt_attention, ite_similarity, LayerTraceRecord,
    };
    use crate::rng::RngStream;
    use crate::weights::ModelBundle;
    use alloc::string::ToString;

    /// Builds a trace with exactly one layer whose attention is `attn`;
    /// the other recorded tensors are placeholders the relevance
    /// computation never touches.
    fn trace_with_attention(attn: Tensor, m: usize) -> AttentionTrace {
        let placeholder = Tensor::zeros(vec![m, 1]);
        AttentionTrace {
            x: Tensor::zeros(vec![attn.dims()[2], 1]),
            m,
            layers: vec![LayerTraceRecord {
                y_in: placeholder.clone(),
                attn: CrossAttnRecord { logits: attn.clone(), attn },
                y_mid: placeholder.clone(),
                ffn_h: placeholder.clone(),
            }],
            y_out: placeholder,
            sim: 0.0,
        }
    }

    #[test]
    fn hand_case_single_head() {
        // H=1, M=2, K=2, all gradients 1, A rows [0.2,0.8] and [0.5,0.5].
        let attn = Tensor::new(vec![1, 2, 2], vec![0.2, 0.8, 0.5, 0.5]).unwrap();
        let trace = trace_with_attention(attn, 2);
        let grads = Tensor::new(vec![1, 2, 2], vec![1.0; 4]).unwrap();
        let map = compute_relevance(&trace, &grads, 0, "q".to_string(), (1, 2)).unwrap();
        assert_eq!(map.rel, vec![0.7, 1.3]);
    }

    #[test]
    fn nonpositive_gradients_give_zero_map() {
        let attn = Tensor::new(vec![1, 2, 2], vec![0.2, 0.8, 0.5, 0.5]).unwrap();
        let trace = trace_with_attention(attn, 2);
        let grads = Tensor::new(vec![1, 2, 2], vec![-1.0, 0.0, -0.5, -2.0]).unwrap();
        let map = compute_relevance(&trace, &grads, 0, "q".to_string(), (1, 2)).unwrap();
        assert_eq!(map.rel, vec![0.0, 0.0]);
    }

    #[test]
    fn head_averaging_divides_by_head_count() {
        // Two identical heads must give the same map as one.
        let one = Tensor::new(vec![1, 1, 2], vec![0.3, 0.7]).unwrap();
        let two = Tensor::new(vec![2, 1, 2], vec![0.3, 0.7, 0.3, 0.7]).unwrap();
        let g1 = Tensor::new(vec![1, 1, 2], vec![1.0, 2.0]).unwrap();
        let g2 = Tensor::new(vec![2, 1, 2], vec![1.0, 2.0, 1.0, 2.0]).unwrap();
        let m1 = compute_relevance(&trace_with_attention(one, 1), &g1, 0, "q".into(), (1, 2)).unwrap();
        let m2 = compute_relevance(&trace_with_attention(two, 1), &g2, 0, "q".into(), (1, 2)).unwrap();
        assert_eq!(m1.rel, m2.rel);
    }

    #[test]
    fn shape_and_layer_validation() {
        let attn = Tensor::new(vec![1, 2, 2], vec![0.25; 4]).unwrap();
        let trace = trace_with_attention(attn, 2);
        let bad = Tensor::zeros(vec![1, 2, 3]);
        assert!(compute_relevance(&trace, &bad, 0, "q".into(), (1, 2)).is_err());
        let good = Tensor::zeros(vec![1, 2, 2]);
        assert!(matches!(
            compute_relevance(&trace, &good, 5, "q".into(), (1, 2)),
            Err(Error::LayerOutOfRange { .. })
        ));
        assert!(compute_relevance(&trace, &good, 0, "q".into(), (2, 2)).is_err());
    }

    fn toy_cfg() -> ArchConfig {
        ArchConfig {
            d_v: 10,
            d_t: 8,
            heads: 2,
            ite_layers: 2,
            cap_layers: 1,
            qa_enc_layers: 1,
            qa_dec_layers: 1,
            vocab_size: 16,
            max_enc_len: 32,
            patch_grid: (2, 3),
        }
    }

    #[test]
    fn analytic_and_finite_difference_relevance_agree() {
        let cfg = toy_cfg();
        let bundle = ModelBundle::seeded(&cfg, 0).unwrap();
        let mut rng = RngStream::new(0).child(1);
        let x = Tensor::from_fn(vec![cfg.k(), cfg.d_v], |_| rng.next_f64() * 2.0 - 1.0).unwrap();
        let framed = vec![0, 7, 9, 4, 1];
        let (_, trace) = ite_similarity(&bundle.ite, &cfg, &x, &framed, true).unwrap();
        let trace = trace.unwrap();
        for layer in 0..cfg.ite_layers {
            let an = grad_wrt_attention(&bundle.ite, &cfg, &trace, layer).unwrap();
            let fd = finite_diff_grads(&bundle.ite, &trace, layer, 1e-3).unwrap();
            let map_an =
                compute_relevance(&trace, &an, layer, "q".into(), cfg.patch_grid).unwrap();
            let map_fd =
                compute_relevance(&trace, &fd, layer, "q".into(), cfg.patch_grid).unwrap();
            for (a, f) in map_an.rel.iter().zip(&map_fd.rel) {
                let rel_err = (a - f).abs() / (a.abs() + f.abs()).max(1e-6);
                assert!(rel_err <= 1e-4, "layer {layer}: {a} vs {f}");
            }
        }
    }

    #[test]
    fn map_is_nonnegative_and_scales_linearly_with_gradients() {
        let mut rng = RngStream::new(9).child(0);
        for _ in 0..200 {
            let (h, m, k) = (1 + (rng.next_u64() % 3) as usize, 1 + (rng.next_u64() % 4) as usize, 4);
            let attn = Tensor::from_fn(vec![h, m, k], |_| rng.next_f64()).unwrap();
            let grads = Tensor::from_fn(vec![h, m, k], |_| rng.next_f64() * 4.0 - 2.0).unwrap();
            let trace = trace_with_attention(attn.clone(), m);
            let base = compute_relevance(&trace, &grads, 0, "q".into(), (1, k)).unwrap();
            assert!(base.rel.iter().all(|&v| v >= 0.0));
            let c = 0.5 + rng.next_f64() * 3.0;
            let scaled_grads = Tensor::from_fn(grads.dims().to_vec(), |i| grads.data()[i] * c).unwrap();
            let scaled = compute_relevance(&trace, &scaled_grads, 0, "q".into(), (1, k)).unwrap();
            for (b, s) in base.rel.iter().zip(&scaled.rel) {
                assert!((b * c - s).abs() <= 1e-12 * (1.0 + s.abs()));
            }
        }
    }

    #[test]
    fn increasing_attention_under_positive_gradient_never_decreases_relevance() {
        let attn = Tensor::new(vec![1, 2, 2], vec![0.2, 0.8, 0.5, 0.5]).unwrap();
        let grads = Tensor::new(vec![1, 2, 2], vec![1.0, 0.5, 2.0, 0.1]).unwrap();
        let base = compute_relevance(&trace_with_attention(attn.clone(), 2), &grads, 0, "q".into(), (1, 2))
            .unwrap();
        let bumped = Tensor::new(vec![1, 2, 2], vec![0.3, 0.8, 0.5, 0.5]).unwrap();
        let after = compute_relevance(&trace_with_attention(bumped, 2), &grads, 0, "q".into(), (1, 2))
            .unwrap();
        assert!(after.rel[0] >= base.rel[0]);
        assert!((after.rel[1] - base.rel[1]).abs() <= 1e-15);
    }

    #[test]
    fn quantization_handles_range_and_degenerate_maps() {
        let map = RelevanceMap {
            rel: vec![1.0, 0.0, 0.0, 0.0],
            layer: 0,
            question_id: "q".into(),
            grid: (2, 2),
        };
        assert_eq!(quantize_heatmap(&map), vec![255, 0, 0, 0]);
        let flat = RelevanceMap { rel: vec![0.4; 4], layer: 0, question_id: "q".into(), grid: (2, 2) };
        assert_eq!(quantize_heatmap(&flat), vec![128; 4]);
        let zero = RelevanceMap { rel: vec![0.0; 4], layer: 0, question_id: "q".into(), grid: (2, 2) };
        assert_eq!(quantize_heatmap(&zero), vec![128; 4]);
    }
}
