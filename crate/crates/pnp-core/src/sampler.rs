//! Patch subset selection: relevance-weighted sampling, uniform sampling,
//! or all patches.
//!
//! Weighted sampling draws without replacement: each draw picks index i
//! with probability weight_i over the remaining total, then removes it and
//! renormalizes. An all-zero weight vector falls back to uniform; if the
//! positive mass runs out mid-way (more draws requested than positive
//! weights), the remaining draws are uniform over what is left.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchStrategy {
    QuestionGuided,
    Uniform,
    All,
}

impl PatchStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            PatchStrategy::QuestionGuided => "question_guided",
            PatchStrategy::Uniform => "uniform",
            PatchStrategy::All => "all",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "question" | "question_guided" => Ok(PatchStrategy::QuestionGuided),
            "uniform" => Ok(PatchStrategy::Uniform),
            "all" => Ok(PatchStrategy::All),
            other => Err(Error::InvalidParam {
                name: "patch_strategy",
                detail: alloc::format!("unknown strategy '{other}'"),
            }),
        }
    }
}

/// The patches a caption will be conditioned on. Indices are distinct,
/// ascending, and index into the full patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSubset {
    pub indices: Vec<usize>,
    pub strategy: PatchStrategy,
    pub k_prime: usize,
}

/// Selects patch indices out of `k` patches. `weights` is required for the
/// question-guided strategy (one nonnegative weight per patch) and ignored
/// otherwise. Requesting `k_prime >= k` degenerates to all patches.
pub fn sample_patches(
    k: usize,
    weights: Option<&[f64]>,
    k_prime: usize,
    strategy: PatchStrategy,
    stream: &mut RngStream,
) -> Result<PatchSubset> {
    if k == 0 {
        return Err(Error::InvalidParam { name: "patches", detail: String::from("no patches") });
    }
    if strategy != PatchStrategy::All && k_prime < 1 {
        return Err(Error::InvalidParam {
            name: "k_prime",
            detail: String::from("must be at least 1"),
        });
    }
    let all = || (0..k).collect::<Vec<usize>>();
    let indices = match strategy {
        PatchStrategy::All => all(),
        _ if k_prime >= k => all(),
        PatchStrategy::Uniform => draw_without_replacement(k, None, k_prime, stream)?,
        PatchStrategy::QuestionGuided => {
            let w = weights.ok_or(Error::InvalidParam {
                name: "weights",
                detail: String::from("question-guided sampling needs a relevance map"),
            })?;
            if w.len() != k {
                return Err(Error::ShapeMismatch {
                    op: "sample_patches",
                    expected: alloc::vec![k],
                    actual: alloc::vec![w.len()],
                });
            }
            if w.iter().any(|&v| v < 0.0 || v.is_nan()) {
                return Err(Error::InvalidParam {
                    name: "weights",
                    detail: String::from("weights must be nonnegative and finite"),
                });
            }
            draw_without_replacement(k, Some(w), k_prime, stream)?
        }
    };
    Ok(PatchSubset { indices, strategy, k_prime })
}

fn draw_without_replacement(
    k: usize,
    weights: Option<&[f64]>,
    k_prime: usize,
    stream: &mut RngStream,
) -> Result<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..k).collect();
    let mut w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => alloc::vec![1.0; k],
    };
    let mut picked = Vec::with_capacity(k_prime);
    for _ in 0..k_prime {
        let total: f64 = w.iter().sum();
        let u = stream.next_f64();
        let chosen = if total > 0.0 {
            let target = u * total;
            let mut acc = 0.0;
            let mut idx = w.len() - 1;
            for (i, &wi) in w.iter().enumerate() {
                acc += wi;
                if target < acc {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            // Positive mass exhausted (or never present): uniform.
            let m = remaining.len();
            ((u * m as f64) as usize).min(m - 1)
        };
        picked.push(remaining.swap_remove(chosen));
        w.swap_remove(chosen);
    }
    picked.sort_unstable();
    Ok(picked)
}
