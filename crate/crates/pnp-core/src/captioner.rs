//! Caption generation: stochastic decoding over sampled patch subsets and
//! the substring deduplication of the resulting caption list.
//!
//! Decoding methods: top-k, nucleus, and temperature sampling draw from a
//! truncated/rescaled next-token distribution; beam search is fully
//! deterministic. Caption i derives its randomness from the stream paths
//! [i, 0] (patch subset) and [i, 1] (token sampling) under the caller's
//! stream, so captions are independent of each other and of evaluation
//! order.

use alloc::string::String;
use alloc::vec::Vec;

use crate::config::ArchConfig;
use crate::decoder::caption_logits;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sampler::{sample_patches, PatchStrategy, PatchSubset};
use crate::text::{Vocab, BOS, EOS};
use crate::vision::PatchFeatures;
use crate::weights::CaptionerWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMethod {
    TopK,
    Nucleus,
    Temperature,
    Beam,
}

impl DecodeMethod {
    pub fn name(&self) -> &'static str {
        match self {
            DecodeMethod::TopK => "topk",
            DecodeMethod::Nucleus => "nucleus",
            DecodeMethod::Temperature => "temp",
            DecodeMethod::Beam => "beam",
        }
    }
}

/// Decoding knobs. Only the parameter belonging to `method` is consulted.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    pub method: DecodeMethod,
    pub k: usize,
    pub p: f64,
    pub temp: f64,
    pub beam_width: usize,
    pub max_caption_len: usize,
    pub prompt: String,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            method: DecodeMethod::TopK,
            k: 50,
            p: 0.9,
            temp: 1.0,
            beam_width: 3,
            max_caption_len: 16,
            prompt: String::from("a picture of "),
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        match self.method {
            DecodeMethod::TopK if self.k < 1 => Err(Error::InvalidParam {
                name: "k",
                detail: String::from("top-k needs k >= 1"),
            }),
            DecodeMethod::Nucleus if self.p <= 0.0 || self.p > 1.0 || self.p.is_nan() => {
                Err(Error::InvalidParam {
                    name: "p",
                    detail: alloc::format!("nucleus mass must be in (0,1], got {}", self.p),
                })
            }
            DecodeMethod::Temperature if self.temp <= 0.0 || self.temp.is_nan() => {
                Err(Error::InvalidParam {
                    name: "temp",
                    detail: alloc::format!("temperature must be positive, got {}", self.temp),
                })
            }
            DecodeMethod::Beam if self.beam_width < 1 => Err(Error::InvalidParam {
                name: "beam_width",
                detail: String::from("beam width must be at least 1"),
            }),
            _ if self.max_caption_len < 1 => Err(Error::InvalidParam {
                name: "max_caption_len",
                detail: String::from("must be at least 1"),
            }),
            _ => Ok(()),
        }
    }
}

/// The support and probabilities a stochastic method samples from:
/// (token id, probability) pairs, probabilities summing to 1.
pub fn decode_distribution(logits: &[f64], cfg: &DecodeConfig) -> Result<Vec<(u32, f64)>> {
    cfg.validate()?;
    if logits.is_empty() || !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { op: "decode_distribution" });
    }
    // Descending logit, ties broken toward the lower id: a total order, so
    // the support set is deterministic.
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| {
        logits[b]
            .partial_cmp(&logits[a])
            .expect("finite logits")
            .then(a.cmp(&b))
    });
    let softmax_over = |ids: &[usize]| -> Vec<(u32, f64)> {
        let max = ids.iter().map(|&i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = ids.iter().map(|&i| libm::exp(logits[i] - max)).collect();
        let total: f64 = exps.iter().sum();
        ids.iter()
            .zip(&exps)
            .map(|(&i, &e)| (i as u32, e / total))
            .collect()
    };
    match cfg.method {
        DecodeMethod::TopK => {
            let take = cfg.k.min(order.len());
            Ok(softmax_over(&order[..take]))
        }
        DecodeMethod::Nucleus => {
            let full = softmax_over(&order);
            let mut cum = 0.0;
            let mut cut = full.len();
            for (i, &(_, p)) in full.iter().enumerate() {
                cum += p;
                if cum >= cfg.p {
                    cut = i + 1; // the boundary token is included
                    break;
                }
            }
            let total: f64 = full[..cut].iter().map(|&(_, p)| p).sum();
            Ok(full[..cut].iter().map(|&(id, p)| (id, p / total)).collect())
        }
        DecodeMethod::Temperature => {
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&v| libm::exp((v - max) / cfg.temp)).collect();
            let total: f64 = exps.iter().sum();
            Ok(exps
                .iter()
                .enumerate()
                .map(|(i, &e)| (i as u32, e / total))
                .collect())
        }
        DecodeMethod::Beam => Err(Error::InvalidParam {
            name: "method",
            detail: String::from("beam search is not a per-token sampler"),
        }),
    }
}

/// Samples the next token id for a stochastic method.
pub fn decode_next(logits: &[f64], cfg: &DecodeConfig, stream: &mut RngStream) -> Result<u32> {
    let dist = decode_distribution(logits, cfg)?;
    let u = stream.next_f64();
    let mut acc = 0.0;
    for &(id, p) in &dist {
        acc += p;
        if u < acc {
            return Ok(id);
        }
    }
    Ok(dist.last().expect("nonempty distribution").0)
}

fn prompt_prefix(vocab: &Vocab, cfg: &DecodeConfig) -> Vec<u32> {
    let mut prefix = alloc::vec![BOS];
    prefix.extend(vocab.tokenize(&cfg.prompt).ids);
    prefix
}

/// Generates one caption body (prompt excluded) for a patch subset.
/// Stochastic methods consume `stream`; beam search ignores it.
pub fn generate_caption(
    w: &CaptionerWeights,
    arch: &ArchConfig,
    vocab: &Vocab,
    patches: &PatchFeatures,
    subset: &PatchSubset,
    cfg: &DecodeConfig,
    stream: &mut RngStream,
) -> Result<String> {
    cfg.validate()?;
    if cfg.method == DecodeMethod::Beam {
        return beam_caption(w, arch, vocab, patches, subset, cfg);
    }
    let prompt = prompt_prefix(vocab, cfg);
    let mut tokens = prompt.clone();
    while tokens.len() < cfg.max_caption_len {
        let logits = caption_logits(w, arch, &tokens, patches, subset)?;
        let next = decode_next(&logits, cfg, stream)?;
        tokens.push(next);
        if next == EOS {
            break;
        }
    }
    Ok(vocab.detokenize(&tokens[prompt.len()..]))
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = libm::log(logits.iter().map(|&v| libm::exp(v - max)).sum::<f64>());
    logits.iter().map(|&v| v - max - log_sum).collect()
}

fn beam_caption(
    w: &CaptionerWeights,
    arch: &ArchConfig,
    vocab: &Vocab,
    patches: &PatchFeatures,
    subset: &PatchSubset,
    cfg: &DecodeConfig,
) -> Result<String> {
    let prompt = prompt_prefix(vocab, cfg);
    if prompt.len() >= cfg.max_caption_len {
        return Ok(String::new());
    }
    // (tokens, summed log-prob). Finished beams ended in EOS or were cut at
    // the length cap; either way they stop expanding.
    let mut live: Vec<(Vec<u32>, f64)> = alloc::vec![(prompt.clone(), 0.0)];
    let mut finished: Vec<(Vec<u32>, f64)> = Vec::new();
    while !live.is_empty() {
        let mut candidates: Vec<(Vec<u32>, f64)> = Vec::new();
        for (tokens, logp) in &live {
            let logits = caption_logits(w, arch, tokens, patches, subset)?;
            let lps = log_softmax(&logits);
            for (id, lp) in lps.iter().enumerate() {
                let mut t = tokens.clone();
                t.push(id as u32);
                candidates.push((t, logp + lp));
            }
        }
        candidates.sort_by(|a, b| {
            b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0))
        });
        candidates.truncate(cfg.beam_width);
        live = Vec::new();
        for (tokens, logp) in candidates {
            if *tokens.last().unwrap() == EOS || tokens.len() >= cfg.max_caption_len {
                finished.push((tokens, logp));
            } else {
                live.push((tokens, logp));
            }
        }
    }
    // Highest length-normalized score wins; ties break toward the
    // lexicographically smaller token sequence.
    let best = finished
        .into_iter()
        .map(|(tokens, logp)| {
            let gen_len = (tokens.len() - prompt.len()).max(1) as f64;
            (logp / gen_len, tokens)
        })
        .max_by(|a, b| {
            a.0.partial_cmp(&b.0).expect("finite scores").then(b.1.cmp(&a.1))
        })
        .expect("at least one finished beam");
    Ok(vocab.detokenize(&best.1[prompt.len()..]))
}

/// One generated caption with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Caption {
    pub text: String,
    pub subset: PatchSubset,
    /// RNG path prefix (under the run's root) this caption derived from.
    pub rng_path: Vec<u64>,
}

/// The deduplicated caption list for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionSet {
    pub captions: Vec<Caption>,
    pub n_requested: usize,
    pub n_kept: usize,
}

impl CaptionSet {
    pub fn texts(&self) -> Vec<String> {
        self.captions.iter().map(|c| c.text.clone()).collect()
    }
}

/// Keep flags under the one-directional substring rule: a caption is kept
/// iff it is not a substring of any EARLIER KEPT caption. Earlier captions
/// are never retroactively removed by a later superstring.
pub fn dedup_keep_flags(texts: &[String]) -> Vec<bool> {
    let mut kept: Vec<&str> = Vec::new();
    let mut flags = Vec::with_capacity(texts.len());
    for t in texts {
        let keep = !kept.iter().any(|earlier| earlier.contains(t.as_str()));
        if keep {
            kept.push(t);
        }
        flags.push(keep);
    }
    flags
}

/// The kept sublist, in order.
pub fn dedup_filter(texts: &[String]) -> Vec<String> {
    dedup_keep_flags(texts)
        .into_iter()
        .zip(texts)
        .filter(|&(keep, _)| keep)
        .map(|(_, t)| t.clone())
        .collect()
}

/// Generates `n` captions (subset + decode per caption index) and applies
/// the dedup rule in generation order. `weights` is the relevance map for
/// question-guided sampling, ignored by the other strategies.
#[allow(clippy::too_many_arguments)]
pub fn generate_caption_set(
    w: &CaptionerWeights,
    arch: &ArchConfig,
    vocab: &Vocab,
    patches: &PatchFeatures,
    weights: Option<&[f64]>,
    n: usize,
    k_prime: usize,
    strategy: PatchStrategy,
    cfg: &DecodeConfig,
    question_stream: &RngStream,
) -> Result<CaptionSet> {
    let mut generated: Vec<Caption> = Vec::with_capacity(n);
    for i in 0..n {
        let caption_stream = question_stream.child(i as u64);
        let mut subset_stream = caption_stream.child(0);
        let mut decode_stream = caption_stream.child(1);
        let subset = sample_patches(arch.k(), weights, k_prime, strategy, &mut subset_stream)?;
        let text = generate_caption(w, arch, vocab, patches, &subset, cfg, &mut decode_stream)?;
        generated.push(Caption {
            text,
            subset,
            rng_path: caption_stream.path().to_vec(),
        });
    }
    let texts: Vec<String> = generated.iter().map(|c| c.text.clone()).collect();
    let flags = dedup_keep_flags(&texts);
    let captions: Vec<Caption> = generated
        .into_iter()
        .zip(&flags)
        .filter_map(|(c, &keep)| keep.then_some(c))
        .collect();
    let n_kept = captions.len();
    Ok(CaptionSet { captions, n_requested: n, n_kept })
}
