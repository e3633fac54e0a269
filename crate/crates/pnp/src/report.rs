//! Report rendering with byte-stable output: fixed key order, fixed float
//! formatting (17 significant digits), no dependence on map iteration or
//! thread schedule. Golden-file comparisons rely on every byte.

use pnp_core::config::ArchConfig;
use pnp_core::eval::{aggregate, QuestionResult};
use pnp_core::pipeline::RunConfig;

/// Input paths exactly as the user supplied them.
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub arch: String,
    pub vocab: String,
    pub weights: String,
    pub dataset: String,
}

/// Ordered JSON value. Object keys keep insertion order, which is what
/// makes renders reproducible.
pub enum J {
    Null,
    Bool(bool),
    Int(i128),
    Float(f64),
    Str(String),
    Arr(Vec<J>),
    Obj(Vec<(&'static str, J)>),
}

impl J {
    pub fn str(s: impl Into<String>) -> J {
        J::Str(s.into())
    }

    pub fn int(v: impl Into<i128>) -> J {
        J::Int(v.into())
    }

    pub fn opt_float(v: Option<f64>) -> J {
        v.map_or(J::Null, J::Float)
    }

    pub fn opt_bool(v: Option<bool>) -> J {
        v.map_or(J::Null, J::Bool)
    }
}

fn escape_into(s: &str, out: &mut String) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// 17 significant digits, enough to reconstruct any f64 exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_value(v: &J, indent: usize, out: &mut String) {
    match v {
        J::Null => out.push_str("null"),
        J::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        J::Int(i) => out.push_str(&i.to_string()),
        J::Float(f) => out.push_str(&format_float(*f)),
        J::Str(s) => escape_into(s, out),
        J::Arr(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                out.push('\n');
                out.push_str(&"  ".repeat(indent + 1));
                write_value(item, indent + 1, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
            }
            out.push('\n');
            out.push_str(&"  ".repeat(indent));
            out.push(']');
        }
        J::Obj(fields) => {
            if fields.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (key, val)) in fields.iter().enumerate() {
                out.push('\n');
                out.push_str(&"  ".repeat(indent + 1));
                escape_into(key, out);
                out.push_str(": ");
                write_value(val, indent + 1, out);
                if i + 1 < fields.len() {
                    out.push(',');
                }
            }
            out.push('\n');
            out.push_str(&"  ".repeat(indent));
            out.push('}');
        }
    }
}

pub fn render_json(v: &J) -> String {
    let mut out = String::new();
    write_value(v, 0, &mut out);
    out.push('\n');
    out
}

/// The config echo: every knob that affects results, fully resolved, plus
/// the input paths as given. Output destinations and thread counts are
/// deliberately absent; they must not change a single report byte.
fn config_json(run: &RunConfig, arch: &ArchConfig, paths: &ReportPaths) -> J {
    let decode = J::Obj(vec![
        ("method", J::str(run.decode.method.name())),
        ("k", J::int(run.decode.k as u64)),
        ("p", J::Float(run.decode.p)),
        ("temp", J::Float(run.decode.temp)),
        ("beam_width", J::int(run.decode.beam_width as u64)),
        ("max_caption_len", J::int(run.decode.max_caption_len as u64)),
        ("prompt", J::str(run.decode.prompt.clone())),
    ]);
    J::Obj(vec![
        (
            "paths",
            J::Obj(vec![
                ("arch", J::str(paths.arch.clone())),
                ("vocab", J::str(paths.vocab.clone())),
                ("weights", J::str(paths.weights.clone())),
                ("dataset", J::str(paths.dataset.clone())),
            ]),
        ),
        ("seed", J::int(run.seed)),
        ("n_captions", J::int(run.n_captions as u64)),
        ("k_prime", J::int(run.k_prime as u64)),
        (
            "gradcam_layer",
            match run.resolved_layer(arch) {
                Ok(zero_based) => J::int((zero_based + 1) as u64),
                Err(_) => J::Null,
            },
        ),
        ("patch_strategy", J::str(run.patch_strategy.name())),
        ("decode", decode),
        ("fusion", J::str(run.fusion.name())),
        ("group_size", J::int(run.group_size as u64)),
        (
            "max_enc_len",
            match run.resolved_max_enc_len(arch) {
                Ok(m) => J::int(m as u64),
                Err(_) => J::Null,
            },
        ),
        ("ahr_word_boundary", J::Bool(run.ahr_word_boundary)),
        ("use_human_captions", J::Bool(run.use_human_captions)),
    ])
}

fn question_json(r: &QuestionResult) -> J {
    let mut fields: Vec<(&'static str, J)> = vec![
        ("id", J::str(r.id.clone())),
        ("error", r.error.clone().map_or(J::Null, J::Str)),
        (
            "answer",
            r.prediction.as_ref().map_or(J::Null, |p| J::str(p.text.clone())),
        ),
        ("soft_accuracy", J::opt_float(r.soft_accuracy)),
        ("exact_match", J::opt_float(r.exact_match)),
        ("ahr_hit", J::opt_bool(r.ahr_hit)),
        ("n_captions_kept", J::int(r.n_captions_kept as u64)),
    ];
    match &r.prediction {
        Some(p) => {
            fields.push(("n_captions_used", J::int(p.n_captions_used as u64)));
            fields.push(("encoder_passes", J::int(p.cost.encoder_passes as u64)));
            fields.push(("encoder_token_pairs", J::int(p.cost.encoder_token_pairs)));
            fields.push(("decoder_cross_pairs", J::int(p.cost.decoder_cross_pairs)));
        }
        None => {
            fields.push(("n_captions_used", J::Null));
            fields.push(("encoder_passes", J::Null));
            fields.push(("encoder_token_pairs", J::Null));
            fields.push(("decoder_cross_pairs", J::Null));
        }
    }
    fields.push(("captions", J::Arr(r.captions.iter().map(J::str).collect())));
    J::Obj(fields)
}

pub fn render_report(
    run: &RunConfig,
    arch: &ArchConfig,
    paths: &ReportPaths,
    results: &[QuestionResult],
) -> String {
    let agg = aggregate(results);
    let aggregates = J::Obj(vec![
        ("n_questions", J::int(agg.n_questions as u64)),
        ("n_failed", J::int(agg.n_failed as u64)),
        ("soft_accuracy", J::opt_float(agg.soft_accuracy)),
        ("exact_match", J::opt_float(agg.exact_match)),
        ("ahr", J::opt_float(agg.ahr)),
        ("ahr_excluded", J::int(agg.ahr_excluded as u64)),
        ("mean_captions_kept", J::opt_float(agg.mean_captions_kept)),
    ]);
    let report = J::Obj(vec![
        ("config", config_json(run, arch, paths)),
        ("aggregates", aggregates),
        ("per_question", J::Arr(results.iter().map(question_json).collect())),
    ]);
    render_json(&report)
}
