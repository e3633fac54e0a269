//! End-to-end orchestration for one question: patch features, question
//! relevance, caption sampling, fused answering, scoring. Every source of
//! randomness is addressed by (run seed, question id hash, caption index),
//! so results are independent of evaluation order and thread schedule.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::captioner::{generate_caption_set, DecodeConfig, DecodeMethod};
use crate::config::ArchConfig;
use crate::error::{Error, Result};
use crate::eval::{QuestionRecord, QuestionResult};
use crate::fusion::{answer, FusionMode};
use crate::ite::{grad_wrt_attention, ite_similarity};
use crate::metrics::{exact_match, question_hit, soft_accuracy};
use crate::relevance::{compute_relevance, RelevanceMap};
use crate::rng::{fnv1a64, RngStream};
use crate::sampler::PatchStrategy;
use crate::vision::{vision_encode, Image};
use crate::weights::ModelBundle;

/// Default attribution layer: the eighth cross-attention layer, or the last
/// one when the matcher is shallower.
pub const DEFAULT_GRADCAM_LAYER: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_captions: usize,
    pub k_prime: usize,
    /// 1-based layer pick; None resolves to the 8th-or-last layer.
    pub gradcam_layer: Option<usize>,
    pub patch_strategy: PatchStrategy,
    pub decode: DecodeConfig,
    pub fusion: FusionMode,
    pub group_size: usize,
    /// Runtime cap on encoder inputs; None uses the model's own limit.
    pub max_enc_len: Option<usize>,
    pub seed: u64,
    pub ahr_word_boundary: bool,
    pub use_human_captions: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_captions: 100,
            k_prime: 20,
            gradcam_layer: None,
            patch_strategy: PatchStrategy::QuestionGuided,
            decode: DecodeConfig::default(),
            fusion: FusionMode::Decoder,
            group_size: 1,
            max_enc_len: None,
            seed: 0,
            ahr_word_boundary: false,
            use_human_captions: false,
        }
    }
}

impl RunConfig {
    /// 0-based index of the attribution layer.
    pub fn resolved_layer(&self, arch: &ArchConfig) -> Result<usize> {
        let one_based = self
            .gradcam_layer
            .unwrap_or_else(|| DEFAULT_GRADCAM_LAYER.min(arch.ite_layers));
        if one_based < 1 || one_based > arch.ite_layers {
            return Err(Error::LayerOutOfRange { layer: one_based, layers: arch.ite_layers });
        }
        Ok(one_based - 1)
    }

    pub fn resolved_max_enc_len(&self, arch: &ArchConfig) -> Result<usize> {
        match self.max_enc_len {
            None => Ok(arch.max_enc_len),
            Some(m) if m >= 3 && m <= arch.max_enc_len => Ok(m),
            Some(m) => Err(Error::InvalidParam {
                name: "max_enc_len",
                detail: format!(
                    "must lie in [3, {}] for this model, got {m}",
                    arch.max_enc_len
                ),
            }),
        }
    }

    pub fn validate(&self, arch: &ArchConfig) -> Result<()> {
        self.resolved_layer(arch)?;
        self.resolved_max_enc_len(arch)?;
        self.decode.validate()?;
        if self.group_size < 1 {
            return Err(Error::InvalidParam {
                name: "group_size",
                detail: String::from("must be at least 1"),
            });
        }
        if self.patch_strategy != PatchStrategy::All && self.k_prime < 1 {
            return Err(Error::InvalidParam {
                name: "k_prime",
                detail: String::from("must be at least 1"),
            });
        }
        Ok(())
    }

    /// The per-question stream. Addressing by id hash keeps a question's
    /// randomness stable under dataset reordering and parallel evaluation.
    pub fn question_stream(&self, question_id: &str) -> RngStream {
        RngStream::new(self.seed).child(fnv1a64(question_id))
    }
}

fn effective_arch(arch: &ArchConfig, run: &RunConfig) -> Result<ArchConfig> {
    let mut eff = arch.clone();
    eff.max_enc_len = run.resolved_max_enc_len(arch)?;
    Ok(eff)
}

struct QuestionOutcome {
    prediction: crate::fusion::AnswerPrediction,
    captions: Vec<String>,
    n_kept: usize,
    relevance: Option<RelevanceMap>,
}

fn run_generated(
    bundle: &ModelBundle,
    vocab: &crate::text::Vocab,
    arch: &ArchConfig,
    run: &RunConfig,
    record: &QuestionRecord,
    image: Option<&Image>,
) -> Result<QuestionOutcome> {
    let image = image.ok_or(Error::InvalidParam {
        name: "image",
        detail: format!("question '{}' has no image loaded", record.id),
    })?;
    let patches = vision_encode(&bundle.vision, arch, image)?;
    let framed = vocab.frame(&vocab.tokenize(&record.question).ids);
    let (_sim, trace) = ite_similarity(&bundle.ite, arch, &patches.features, &framed, true)?;
    let trace = trace.expect("trace requested");
    let layer = run.resolved_layer(arch)?;
    let grads = grad_wrt_attention(&bundle.ite, arch, &trace, layer)?;
    let rel = compute_relevance(&trace, &grads, layer, record.id.clone(), patches.grid)?;
    let set = generate_caption_set(
        &bundle.captioner,
        arch,
        vocab,
        &patches,
        Some(&rel.rel),
        run.n_captions,
        run.k_prime,
        run.patch_strategy,
        &run.decode,
        &run.question_stream(&record.id),
    )?;
    let captions = set.texts();
    let prediction =
        answer(&bundle.qa, arch, vocab, &record.question, &captions, run.fusion, run.group_size)?;
    Ok(QuestionOutcome {
        prediction,
        n_kept: set.n_kept,
        captions,
        relevance: Some(rel),
    })
}

fn run_human(
    bundle: &ModelBundle,
    vocab: &crate::text::Vocab,
    arch: &ArchConfig,
    run: &RunConfig,
    record: &QuestionRecord,
) -> Result<QuestionOutcome> {
    let captions = record
        .human_captions
        .clone()
        .ok_or(Error::MissingHumanCaptions { id: record.id.clone() })?;
    let prediction =
        answer(&bundle.qa, arch, vocab, &record.question, &captions, run.fusion, run.group_size)?;
    Ok(QuestionOutcome {
        prediction,
        n_kept: captions.len(),
        captions,
        relevance: None,
    })
}

/// Evaluates one question. Errors never escape; they land in the result's
/// error field so batch runs continue.
pub fn run_question(
    bundle: &ModelBundle,
    vocab: &crate::text::Vocab,
    run: &RunConfig,
    record: &QuestionRecord,
    image: Option<&Image>,
) -> QuestionResult {
    let inner = || -> Result<QuestionOutcome> {
        record.validate()?;
        let arch = effective_arch(&bundle.config, run)?;
        if run.use_human_captions {
            run_human(bundle, vocab, &arch, run, record)
        } else {
            run_generated(bundle, vocab, &arch, run, record, image)
        }
    };
    match inner() {
        Err(e) => QuestionResult::failed(record.id.clone(), &e),
        Ok(out) => QuestionResult {
            id: record.id.clone(),
            soft_accuracy: Some(soft_accuracy(&out.prediction.text, &record.answers)),
            exact_match: Some(exact_match(&out.prediction.text, &record.answers)),
            ahr_hit: question_hit(&out.captions, &record.answers, run.ahr_word_boundary),
            n_captions_kept: out.n_kept,
            captions: out.captions,
            relevance: out.relevance,
            prediction: Some(out.prediction),
            error: None,
        },
    }
}

/// Sequential evaluation with a caller-supplied image loader. The loader
/// may return None when no image is needed (human-caption runs).
pub fn evaluate<F>(
    bundle: &ModelBundle,
    vocab: &crate::text::Vocab,
    run: &RunConfig,
    records: &[QuestionRecord],
    mut load_image: F,
) -> Vec<QuestionResult>
where
    F: FnMut(&QuestionRecord) -> Result<Option<Image>>,
{
    records
        .iter()
        .map(|rec| match load_image(rec) {
            Err(e) => QuestionResult::failed(rec.id.clone(), &e),
            Ok(img) => run_question(bundle, vocab, run, rec, img.as_ref()),
        })
        .collect()
}

/// A pipeline knob a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    GradcamLayer,
    KPrime,
    NCaptions,
    DecodeMethod,
    Fusion,
    GroupSize,
    PatchStrategy,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::GradcamLayer => "gradcam_layer",
            SweepParam::KPrime => "k_prime",
            SweepParam::NCaptions => "n_captions",
            SweepParam::DecodeMethod => "decode_method",
            SweepParam::Fusion => "fusion",
            SweepParam::GroupSize => "group_size",
            SweepParam::PatchStrategy => "patch_strategy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gradcam_layer" => Ok(SweepParam::GradcamLayer),
            "k_prime" => Ok(SweepParam::KPrime),
            "n_captions" => Ok(SweepParam::NCaptions),
            "decode_method" => Ok(SweepParam::DecodeMethod),
            "fusion" => Ok(SweepParam::Fusion),
            "group_size" => Ok(SweepParam::GroupSize),
            "patch_strategy" => Ok(SweepParam::PatchStrategy),
            other => Err(Error::InvalidParam {
                name: "param",
                detail: format!("unknown sweep parameter '{other}'"),
            }),
        }
    }

    /// The base config with this parameter set to `value`.
    pub fn apply(&self, base: &RunConfig, value: &str) -> Result<RunConfig> {
        let mut cfg = base.clone();
        let int = |name: &'static str| {
            value.parse::<usize>().map_err(|_| Error::InvalidParam {
                name,
                detail: format!("expected an integer, got '{value}'"),
            })
        };
        match self {
            SweepParam::GradcamLayer => cfg.gradcam_layer = Some(int("gradcam_layer")?),
            SweepParam::KPrime => cfg.k_prime = int("k_prime")?,
            SweepParam::NCaptions => cfg.n_captions = int("n_captions")?,
            SweepParam::GroupSize => cfg.group_size = int("group_size")?,
            SweepParam::Fusion => cfg.fusion = FusionMode::parse(value)?,
            SweepParam::PatchStrategy => cfg.patch_strategy = PatchStrategy::parse(value)?,
            SweepParam::DecodeMethod => cfg.decode = parse_decode_spec(value, &base.decode)?,
        }
        Ok(cfg)
    }
}

/// Parses a decoding spec of the form "method" or "method:param", e.g.
/// "beam", "topk:100", "nucleus:0.95", "temp:0.5". Fields not named by the
/// spec keep their values from `base`.
pub fn parse_decode_spec(spec: &str, base: &DecodeConfig) -> Result<DecodeConfig> {
    let (method, param) = match spec.split_once(':') {
        Some((m, p)) => (m, Some(p)),
        None => (spec, None),
    };
    let mut cfg = base.clone();
    let bad = |detail: String| Error::InvalidParam { name: "decode", detail };
    match method {
        "topk" => {
            cfg.method = DecodeMethod::TopK;
            if let Some(p) = param {
                cfg.k = p
                    .parse()
                    .map_err(|_| bad(format!("top-k count must be an integer, got '{p}'")))?;
            }
        }
        "nucleus" => {
            cfg.method = DecodeMethod::Nucleus;
            if let Some(p) = param {
                cfg.p = p
                    .parse()
                    .map_err(|_| bad(format!("nucleus mass must be a number, got '{p}'")))?;
            }
        }
        "temp" => {
            cfg.method = DecodeMethod::Temperature;
            if let Some(p) = param {
                cfg.temp = p
                    .parse()
                    .map_err(|_| bad(format!("temperature must be a number, got '{p}'")))?;
            }
        }
        "beam" => {
            cfg.method = DecodeMethod::Beam;
            if let Some(p) = param {
                cfg.beam_width = p
                    .parse()
                    .map_err(|_| bad(format!("beam width must be an integer, got '{p}'")))?;
            }
        }
        other => return Err(bad(format!("unknown decoding method '{other}'"))),
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::aggregate;
    use crate::text::Vocab;
    use alloc::vec;
    use alloc::vec::Vec;

    fn toy_arch() -> ArchConfig {
        ArchConfig {
            d_v: 10,
            d_t: 8,
            heads: 2,
            ite_layers: 2,
            cap_layers: 1,
            qa_enc_layers: 1,
            qa_dec_layers: 1,
            vocab_size: 20,
            max_enc_len: 96,
            patch_grid: (2, 2),
        }
    }

    fn toy_vocab() -> Vocab {
        Vocab::new(
            [
                "question", "context", "a", "picture", "of", "what", "color", "is", "the",
                "sky", "blue", "red", "dog", "cat", "grass", "yes",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        )
        .unwrap()
    }

    fn toy_image(seed: u64) -> Image {
        let mut rng = RngStream::new(seed).child(77);
        let data: Vec<f64> = (0..8 * 8 * 3).map(|_| rng.next_f64()).collect();
        Image::new(8, 8, data).unwrap()
    }

    fn toy_record(id: &str) -> QuestionRecord {
        QuestionRecord {
            id: id.into(),
            image_ref: format!("{id}.ppm"),
            question: "what color is the sky".into(),
            answers: vec!["blue".into(), "blue".into(), "sky blue".into()],
            human_captions: Some(vec!["the sky is blue".into(), "a blue sky".into()]),
        }
    }

    fn small_run() -> RunConfig {
        RunConfig {
            n_captions: 4,
            k_prime: 2,
            decode: DecodeConfig { k: 8, max_caption_len: 8, ..DecodeConfig::default() },
            ..RunConfig::default()
        }
    }

    #[test]
    fn layer_resolution_defaults_to_eighth_or_last() {
        let arch = toy_arch();
        let run = RunConfig::default();
        assert_eq!(run.resolved_layer(&arch).unwrap(), 1);
        let deep = ArchConfig { ite_layers: 12, ..arch.clone() };
        assert_eq!(run.resolved_layer(&deep).unwrap(), 7);
        let pick = RunConfig { gradcam_layer: Some(1), ..RunConfig::default() };
        assert_eq!(pick.resolved_layer(&arch).unwrap(), 0);
        let bad = RunConfig { gradcam_layer: Some(3), ..RunConfig::default() };
        assert!(matches!(bad.resolved_layer(&arch), Err(Error::LayerOutOfRange { .. })));
        let zero = RunConfig { gradcam_layer: Some(0), ..RunConfig::default() };
        assert!(zero.resolved_layer(&arch).is_err());
    }

    #[test]
    fn runs_are_deterministic_per_question() {
        let arch = toy_arch();
        let bundle = ModelBundle::seeded(&arch, 0).unwrap();
        let vocab = toy_vocab();
        let run = small_run();
        let rec = toy_record("q1");
        let img = toy_image(1);
        let r1 = run_question(&bundle, &vocab, &run, &rec, Some(&img));
        let r2 = run_question(&bundle, &vocab, &run, &rec, Some(&img));
        assert_eq!(r1, r2);
        assert!(r1.error.is_none(), "{:?}", r1.error);
        assert!(r1.prediction.is_some());
        assert!(r1.relevance.is_some());
        assert_eq!(r1.n_captions_kept, r1.captions.len());
    }

    #[test]
    fn question_results_do_not_depend_on_dataset_order() {
        let arch = toy_arch();
        let bundle = ModelBundle::seeded(&arch, 0).unwrap();
        let vocab = toy_vocab();
        let run = small_run();
        let recs = [toy_record("q1"), toy_record("q2")];
        let load = |rec: &QuestionRecord| {
            Ok(Some(toy_image(if rec.id == "q1" { 1 } else { 2 })))
        };
        let fwd = evaluate(&bundle, &vocab, &run, &recs, load);
        let rev_recs = [recs[1].clone(), recs[0].clone()];
        let rev = evaluate(&bundle, &vocab, &run, &rev_recs, load);
        assert_eq!(fwd[0], rev[1]);
        assert_eq!(fwd[1], rev[0]);
        assert_ne!(fwd[0].captions, fwd[1].captions, "distinct ids must decouple streams");
    }

    #[test]
    fn human_caption_runs_skip_the_visual_stages() {
        let arch = toy_arch();
        let bundle = ModelBundle::seeded(&arch, 0).unwrap();
        let vocab = toy_vocab();
        let run = RunConfig { use_human_captions: true, ..small_run() };
        let rec = toy_record("q1");
        let r = run_question(&bundle, &vocab, &run, &rec, None);
        assert!(r.error.is_none(), "{:?}", r.error);
        assert!(r.relevance.is_none());
        assert_eq!(r.captions, rec.human_captions.clone().unwrap());
        assert_eq!(r.n_captions_kept, 2);

        let mut bare = rec.clone();
        bare.human_captions = None;
        let failed = run_question(&bundle, &vocab, &run, &bare, None);
        let msg = failed.error.expect("must fail");
        assert!(msg.contains("q1"), "{msg}");
    }

    #[test]
    fn per_question_errors_are_captured_not_propagated() {
        let arch = toy_arch();
        let bundle = ModelBundle::seeded(&arch, 0).unwrap();
        let vocab = toy_vocab();
        let run = RunConfig { gradcam_layer: Some(9), ..small_run() };
        let rec = toy_record("q1");
        let img = toy_image(1);
        let r = run_question(&bundle, &vocab, &run, &rec, Some(&img));
        assert!(r.error.is_some());
        assert!(r.prediction.is_none());
        assert_eq!(r.soft_accuracy, None);

        let missing_img = run_question(&bundle, &vocab, &small_run(), &rec, None);
        assert!(missing_img.error.is_some());
    }

    #[test]
    fn caption_sets_nest_across_caption_counts() {
        let arch = toy_arch();
        let bundle = ModelBundle::seeded(&arch, 0).unwrap();
        let vocab = toy_vocab();
        let rec = toy_record("q3");
        let img = toy_image(3);
        let mut per_n: Vec<QuestionResult> = Vec::new();
        for n in [1usize, 3, 8] {
            let run = RunConfig { n_captions: n, ..small_run() };
            per_n.push(run_question(&bundle, &vocab, &run, &rec, Some(&img)));
        }
        for w in per_n.windows(2) {
            let (small, large) = (&w[0], &w[1]);
            assert!(
                large.captions.starts_with(&small.captions),
                "kept captions must be nested prefixes: {:?} vs {:?}",
                small.captions,
                large.captions
            );
            if small.ahr_hit == Some(true) {
                assert_eq!(large.ahr_hit, Some(true), "hits must never regress");
            }
        }
    }

    #[test]
    fn aggregates_recompute_from_rows() {
        let arch = toy_arch();
        let bundle = ModelBundle::seeded(&arch, 0).unwrap();
        let vocab = toy_vocab();
        let run = small_run();
        let recs: Vec<QuestionRecord> = (0..3).map(|i| toy_record(&format!("q{i}"))).collect();
        let results = evaluate(&bundle, &vocab, &run, &recs, |r| {
            Ok(Some(toy_image(fnv1a64(&r.id))))
        });
        let agg = aggregate(&results);
        assert_eq!(agg.n_questions, 3);
        assert_eq!(agg.n_failed, 0);
        let manual: f64 =
            results.iter().filter_map(|r| r.soft_accuracy).sum::<f64>() / 3.0;
        assert_eq!(agg.soft_accuracy, Some(manual));
    }

    #[test]
    fn sweep_values_apply_to_the_right_knob() {
        let base = RunConfig::default();
        let c = SweepParam::GradcamLayer.apply(&base, "2").unwrap();
        assert_eq!(c.gradcam_layer, Some(2));
        let c = SweepParam::KPrime.apply(&base, "5").unwrap();
        assert_eq!(c.k_prime, 5);
        let c = SweepParam::NCaptions.apply(&base, "20").unwrap();
        assert_eq!(c.n_captions, 20);
        let c = SweepParam::GroupSize.apply(&base, "5").unwrap();
        assert_eq!(c.group_size, 5);
        let c = SweepParam::Fusion.apply(&base, "fie").unwrap();
        assert_eq!(c.fusion, FusionMode::Encoder);
        let c = SweepParam::PatchStrategy.apply(&base, "uniform").unwrap();
        assert_eq!(c.patch_strategy, PatchStrategy::Uniform);
        let c = SweepParam::DecodeMethod.apply(&base, "nucleus:0.95").unwrap();
        assert_eq!(c.decode.method, DecodeMethod::Nucleus);
        assert_eq!(c.decode.p, 0.95);
        assert!(SweepParam::KPrime.apply(&base, "x").is_err());
        assert!(SweepParam::parse("nonsense").is_err());
        assert_eq!(SweepParam::parse("k_prime").unwrap(), SweepParam::KPrime);
    }

    #[test]
    fn decode_specs_cover_all_method_forms() {
        let base = DecodeConfig::default();
        let c = parse_decode_spec("beam", &base).unwrap();
        assert_eq!(c.method, DecodeMethod::Beam);
        assert_eq!(c.beam_width, base.beam_width);
        let c = parse_decode_spec("beam:5", &base).unwrap();
        assert_eq!(c.beam_width, 5);
        let c = parse_decode_spec("topk:100", &base).unwrap();
        assert_eq!((c.method, c.k), (DecodeMethod::TopK, 100));
        let c = parse_decode_spec("temp:0.5", &base).unwrap();
        assert_eq!(c.method, DecodeMethod::Temperature);
        assert!((c.temp - 0.5).abs() <= 1e-15);
        let c = parse_decode_spec("nucleus", &base).unwrap();
        assert_eq!((c.method, c.p), (DecodeMethod::Nucleus, base.p));
        assert!(parse_decode_spec("topk:zero", &base).is_err());
        assert!(parse_decode_spec("greedy", &base).is_err());
        assert!(parse_decode_spec("temp:0", &base).is_err(), "must fail validation");
    }

    #[test]
    fn runtime_encoder_cap_tightens_but_never_exceeds_the_model() {
        let arch = toy_arch();
        let run = RunConfig { max_enc_len: Some(48), ..RunConfig::default() };
        assert_eq!(run.resolved_max_enc_len(&arch).unwrap(), 48);
        let over = RunConfig { max_enc_len: Some(200), ..RunConfig::default() };
        assert!(over.resolved_max_enc_len(&arch).is_err());
        let none = RunConfig::default();
        assert_eq!(none.resolved_max_enc_len(&arch).unwrap(), 96);
    }
}
