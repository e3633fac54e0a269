//! Answer generation over the caption set: fusion-in-encoder packs the
//! question and every caption into one encoder input (hard length cap);
//! fusion-in-decoder encodes caption groups separately and concatenates
//! their token representations as the decoder's cross-attention context,
//! which removes the global cap at the price of more encoder passes.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::config::ArchConfig;
use crate::error::{Error, Result};
use crate::qa::{qa_decode_greedy, qa_encode};
use crate::tensor::Tensor;
use crate::text::Vocab;
use crate::weights::QaWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    Encoder,
    Decoder,
}

impl FusionMode {
    pub fn name(&self) -> &'static str {
        match self {
            FusionMode::Encoder => "fie",
            FusionMode::Decoder => "fid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fie" => Ok(FusionMode::Encoder),
            "fid" => Ok(FusionMode::Decoder),
            other => Err(Error::InvalidParam {
                name: "fusion",
                detail: format!("expected fie or fid, got {other}"),
            }),
        }
    }
}

/// Operation counters for the cost-scaling comparison between the modes.
/// Token pairs count self-attention score entries in the encoder and
/// cross-attention score entries in the decoder, summed over layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FusionCost {
    pub encoder_passes: usize,
    pub encoder_token_pairs: u64,
    pub decoder_cross_pairs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerPrediction {
    pub text: String,
    pub fusion: FusionMode,
    pub group_size: usize,
    pub n_captions_used: usize,
    pub cost: FusionCost,
}

/// One encoder input: the question plus one caption group, rendered and
/// framed. Build-time length checking makes overlong inputs fail before
/// any encoding starts.
#[derive(Debug, Clone, PartialEq)]
pub struct QaContextGroup {
    pub captions: Vec<String>,
    pub rendered: String,
    pub framed: Vec<u32>,
}

fn render(question: &str, captions: &[String]) -> String {
    let mut s = format!("question: {question} context:");
    for c in captions {
        s.push(' ');
        s.push_str(c);
    }
    s
}

fn make_group(
    vocab: &Vocab,
    cfg: &ArchConfig,
    question: &str,
    captions: &[String],
) -> Result<QaContextGroup> {
    let rendered = render(question, captions);
    let framed = vocab.frame(&vocab.tokenize(&rendered).ids);
    if framed.len() > cfg.max_enc_len {
        return Err(Error::Overlong { len: framed.len(), max: cfg.max_enc_len });
    }
    Ok(QaContextGroup { captions: captions.to_vec(), rendered, framed })
}

/// Partitions the captions in order into ceil(n / group_size) groups; the
/// last group may be short. Zero captions produce one question-only group.
pub fn build_groups(
    vocab: &Vocab,
    cfg: &ArchConfig,
    question: &str,
    captions: &[String],
    group_size: usize,
) -> Result<Vec<QaContextGroup>> {
    if group_size < 1 {
        return Err(Error::InvalidParam {
            name: "group_size",
            detail: String::from("must be at least 1"),
        });
    }
    if captions.is_empty() {
        return Ok(alloc::vec![make_group(vocab, cfg, question, &[])?]);
    }
    captions
        .chunks(group_size)
        .map(|chunk| make_group(vocab, cfg, question, chunk))
        .collect()
}

/// Encodes every group and stacks the token representations in group
/// order. Returns the fused context alongside the encoder counters.
pub fn fused_context(
    w: &QaWeights,
    cfg: &ArchConfig,
    groups: &[QaContextGroup],
) -> Result<(Tensor, FusionCost)> {
    if groups.is_empty() {
        return Err(Error::InvalidParam {
            name: "groups",
            detail: String::from("need at least one context group"),
        });
    }
    let mut rows = 0;
    let mut data = Vec::new();
    let mut cost = FusionCost::default();
    for g in groups {
        let (enc, pairs) = qa_encode(w, cfg, &g.framed)?;
        rows += enc.rows();
        data.extend_from_slice(enc.data());
        cost.encoder_passes += 1;
        cost.encoder_token_pairs += pairs;
    }
    Ok((Tensor::new(alloc::vec![rows, cfg.d_t], data)?, cost))
}

fn decode_over(
    w: &QaWeights,
    cfg: &ArchConfig,
    vocab: &Vocab,
    groups: &[QaContextGroup],
) -> Result<(String, FusionCost)> {
    let (fused, mut cost) = fused_context(w, cfg, groups)?;
    let (tokens, _, cross_pairs) = qa_decode_greedy(w, cfg, &fused)?;
    cost.decoder_cross_pairs = cross_pairs;
    Ok((vocab.detokenize(&tokens), cost))
}

/// One encoder pass over the full question-plus-all-captions rendering.
/// Errors with Overlong once the rendering exceeds max_enc_len.
pub fn fuse_in_encoder(
    w: &QaWeights,
    cfg: &ArchConfig,
    vocab: &Vocab,
    question: &str,
    captions: &[String],
) -> Result<AnswerPrediction> {
    let group = make_group(vocab, cfg, question, captions)?;
    let (text, cost) = decode_over(w, cfg, vocab, &[group])?;
    Ok(AnswerPrediction {
        text,
        fusion: FusionMode::Encoder,
        group_size: captions.len().max(1),
        n_captions_used: captions.len(),
        cost,
    })
}

/// One encoder pass per group, decoder cross-attending over the stacked
/// representations. No global length cap; only single groups can overflow.
pub fn fuse_in_decoder(
    w: &QaWeights,
    cfg: &ArchConfig,
    vocab: &Vocab,
    groups: &[QaContextGroup],
    group_size: usize,
) -> Result<AnswerPrediction> {
    let n_captions_used = groups.iter().map(|g| g.captions.len()).sum();
    let (text, cost) = decode_over(w, cfg, vocab, groups)?;
    Ok(AnswerPrediction {
        text,
        fusion: FusionMode::Decoder,
        group_size,
        n_captions_used,
        cost,
    })
}

/// Mode dispatch. Greedy decoding keeps the whole answering stage
/// deterministic; all stochasticity lives upstream in captioning.
pub fn answer(
    w: &QaWeights,
    cfg: &ArchConfig,
    vocab: &Vocab,
    question: &str,
    captions: &[String],
    mode: FusionMode,
    group_size: usize,
) -> Result<AnswerPrediction> {
    match mode {
        FusionMode::Encoder => fuse_in_encoder(w, cfg, vocab, question, captions),
        FusionMode::Decoder => {
            let groups = build_groups(vocab, cfg, question, captions, group_size)?;
            fuse_in_decoder(w, cfg, vocab, &groups, group_size)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::ModelBundle;
    use alloc::string::ToString;

    fn toy_cfg(max_enc_len: usize) -> ArchConfig {
        ArchConfig {
            d_v: 8,
            d_t: 8,
            heads: 2,
            ite_layers: 1,
            cap_layers: 1,
            qa_enc_layers: 2,
            qa_dec_layers: 2,
            vocab_size: 16,
            max_enc_len,
            patch_grid: (2, 2),
        }
    }

    fn toy_vocab() -> Vocab {
        Vocab::new(
            [
                "question", "context", "what", "color", "is", "the", "sky", "blue", "a",
                "picture", "of", "red",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        )
        .unwrap()
    }

    fn caps(texts: &[&str]) -> Vec<String> {
        texts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn groups_partition_in_order_with_short_tail() {
        let cfg = toy_cfg(256);
        let vocab = toy_vocab();
        let captions: Vec<String> = (0..7).map(|i| format!("sky {i}")).collect();
        let groups = build_groups(&vocab, &cfg, "what color", &captions, 5).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].captions.len(), 5);
        assert_eq!(groups[1].captions.len(), 2);
        assert_eq!(groups[0].captions[0], "sky 0");
        assert_eq!(groups[1].captions[1], "sky 6");

        let hundred: Vec<String> = (0..100).map(|_| "sky".to_string()).collect();
        let g = build_groups(&vocab, &cfg, "what", &hundred, 5).unwrap();
        assert_eq!(g.len(), 20);
        assert!(g.iter().all(|g| g.captions.len() == 5));
    }

    #[test]
    fn zero_captions_make_one_question_only_group() {
        let cfg = toy_cfg(256);
        let vocab = toy_vocab();
        let groups = build_groups(&vocab, &cfg, "what color is the sky", &[], 5).unwrap();
        assert_eq!(groups.len(), 1);
        assert!(groups[0].captions.is_empty());
        assert_eq!(groups[0].rendered, "question: what color is the sky context:");
    }

    #[test]
    fn group_size_zero_is_rejected() {
        let cfg = toy_cfg(256);
        let vocab = toy_vocab();
        let err = build_groups(&vocab, &cfg, "what", &caps(&["sky"]), 0).unwrap_err();
        assert!(matches!(err, Error::InvalidParam { name: "group_size", .. }));
    }

    #[test]
    fn overlong_group_fails_at_build_time() {
        let cfg = toy_cfg(12);
        let vocab = toy_vocab();
        let long = caps(&["the blue sky is a picture of the red sky"]);
        let err = build_groups(&vocab, &cfg, "what color is the sky", &long, 1).unwrap_err();
        assert!(matches!(err, Error::Overlong { .. }));
    }

    #[test]
    fn answers_are_deterministic() {
        let cfg = toy_cfg(64);
        let b = ModelBundle::seeded(&cfg, 3).unwrap();
        let vocab = toy_vocab();
        let captions = caps(&["the sky is blue", "a red sky"]);
        let a1 = answer(&b.qa, &cfg, &vocab, "what color is the sky", &captions,
            FusionMode::Decoder, 1)
        .unwrap();
        let a2 = answer(&b.qa, &cfg, &vocab, "what color is the sky", &captions,
            FusionMode::Decoder, 1)
        .unwrap();
        assert_eq!(a1, a2);
        assert_eq!(a1.cost.encoder_passes, 2);
        assert_eq!(a1.n_captions_used, 2);
    }

    #[test]
    fn single_group_decoder_fusion_equals_encoder_fusion() {
        let vocab = toy_vocab();
        let captions = caps(&["the sky is blue", "a picture of red sky"]);
        for seed in 0..4 {
            let cfg = toy_cfg(64);
            let b = ModelBundle::seeded(&cfg, seed).unwrap();
            let fie = fuse_in_encoder(&b.qa, &cfg, &vocab, "what color", &captions).unwrap();
            let groups =
                build_groups(&vocab, &cfg, "what color", &captions, captions.len()).unwrap();
            assert_eq!(groups.len(), 1);
            let fid = fuse_in_decoder(&b.qa, &cfg, &vocab, &groups, captions.len()).unwrap();
            assert_eq!(fie.text, fid.text);
            assert_eq!(fie.cost.encoder_token_pairs, fid.cost.encoder_token_pairs);

            let (ctx_fid, _) = fused_context(&b.qa, &cfg, &groups).unwrap();
            let (toks, logits_fid, _) = qa_decode_greedy(&b.qa, &cfg, &ctx_fid).unwrap();
            let single = make_group(&vocab, &cfg, "what color", &captions).unwrap();
            let (ctx_fie, _) = fused_context(&b.qa, &cfg, &[single]).unwrap();
            let (toks2, logits_fie, _) = qa_decode_greedy(&b.qa, &cfg, &ctx_fie).unwrap();
            assert_eq!(toks, toks2);
            for (a, f) in logits_fid.iter().flatten().zip(logits_fie.iter().flatten()) {
                assert!((a - f).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn encoder_fusion_pairs_grow_quadratically_decoder_fusion_linearly() {
        let cfg = toy_cfg(4096);
        let b = ModelBundle::seeded(&cfg, 0).unwrap();
        let vocab = toy_vocab();
        let caption = "the blue sky".to_string();
        let run = |n: usize, mode: FusionMode| {
            let captions: Vec<String> = (0..n).map(|_| caption.clone()).collect();
            answer(&b.qa, &cfg, &vocab, "what color", &captions, mode, 1).unwrap().cost
        };
        let fie_10 = run(10, FusionMode::Encoder);
        let fie_20 = run(20, FusionMode::Encoder);
        let fid_10 = run(10, FusionMode::Decoder);
        let fid_20 = run(20, FusionMode::Decoder);
        // Identical captions give identical group lengths, so doubling the
        // caption count exactly doubles the decoder-fusion encoder cost.
        assert_eq!(fid_20.encoder_token_pairs, 2 * fid_10.encoder_token_pairs);
        assert_eq!(fid_20.encoder_passes, 20);
        assert_eq!(fie_20.encoder_passes, 1);
        // The single concatenated pass grows superlinearly.
        let ratio = fie_20.encoder_token_pairs as f64 / fie_10.encoder_token_pairs as f64;
        assert!(ratio > 3.0, "expected near-quadratic growth, got ratio {ratio}");
    }

    #[test]
    fn encoder_fusion_caps_where_decoder_fusion_continues() {
        let cfg = toy_cfg(32);
        let b = ModelBundle::seeded(&cfg, 1).unwrap();
        let vocab = toy_vocab();
        let captions: Vec<String> = (0..100).map(|_| "the blue sky".to_string()).collect();
        let fie = answer(&b.qa, &cfg, &vocab, "what color", &captions, FusionMode::Encoder, 1);
        assert!(matches!(fie.unwrap_err(), Error::Overlong { .. }));
        let fid = answer(&b.qa, &cfg, &vocab, "what color", &captions, FusionMode::Decoder, 1)
            .unwrap();
        assert_eq!(fid.cost.encoder_passes, 100);
        assert_eq!(fid.n_captions_used, 100);
    }

    #[test]
    fn no_captions_answers_from_question_alone() {
        let cfg = toy_cfg(64);
        let b = ModelBundle::seeded(&cfg, 2).unwrap();
        let vocab = toy_vocab();
        for mode in [FusionMode::Encoder, FusionMode::Decoder] {
            let p = answer(&b.qa, &cfg, &vocab, "what color is the sky", &[], mode, 5).unwrap();
            assert_eq!(p.n_captions_used, 0);
            assert_eq!(p.cost.encoder_passes, 1);
        }
    }

    #[test]
    fn group_permutation_runs_without_error() {
        let cfg = toy_cfg(64);
        let b = ModelBundle::seeded(&cfg, 4).unwrap();
        let vocab = toy_vocab();
        let captions = caps(&["blue sky", "red sky", "a picture"]);
        let mut groups = build_groups(&vocab, &cfg, "what color", &captions, 1).unwrap();
        groups.reverse();
        // Group order feeds the decoder's cross-attention, so the answer may
        // change; only successful completion is guaranteed.
        let p = fuse_in_decoder(&b.qa, &cfg, &vocab, &groups, 1).unwrap();
        assert_eq!(p.n_captions_used, 3);
    }

    #[test]
    fn swapping_qa_weights_changes_only_the_answer_stage() {
        let cfg = toy_cfg(64);
        let b1 = ModelBundle::seeded(&cfg, 0).unwrap();
        let b2 = ModelBundle::seeded(&cfg, 77).unwrap();
        let vocab = toy_vocab();
        let captions = caps(&["the sky is blue"]);
        let p1 = answer(&b1.qa, &cfg, &vocab, "what color", &captions, FusionMode::Decoder, 1)
            .unwrap();
        let p2 = answer(&b2.qa, &cfg, &vocab, "what color", &captions, FusionMode::Decoder, 1)
            .unwrap();
        // The interface is weight-agnostic: structure and encoder cost are
        // unchanged, only the generated text may differ.
        assert_eq!(p1.fusion, p2.fusion);
        assert_eq!(p1.n_captions_used, p2.n_captions_used);
        assert_eq!(p1.cost.encoder_token_pairs, p2.cost.encoder_token_pairs);
        assert_eq!(p1.cost.encoder_passes, p2.cost.encoder_passes);
    }
}
