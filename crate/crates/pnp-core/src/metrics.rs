//! Answer scoring: the soft-accuracy and exact-match measures over
//! multi-annotator ground truth, and the caption hit test behind the
//! answer hit rate.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::text::normalize_text;

/// Canonical answer form: normalized text with leading articles removed.
/// Articles are stripped repeatedly, so "the a dog" reduces to "dog".
pub fn normalize_answer(s: &str) -> String {
    let norm = normalize_text(s);
    let mut rest = norm.as_str();
    while let Some(first) = rest.split(' ').next() {
        if !matches!(first, "a" | "an" | "the") {
            break;
        }
        rest = rest[first.len()..].trim_start();
    }
    rest.into()
}

/// min(1, m/3) where m counts ground-truth answers (with multiplicity)
/// whose normalization equals the normalized prediction.
pub fn soft_accuracy(prediction: &str, answers: &[String]) -> f64 {
    let p = normalize_answer(prediction);
    let m = answers.iter().filter(|a| normalize_answer(a) == p).count();
    (m as f64 / 3.0).min(1.0)
}

/// 1.0 iff the normalized prediction equals any normalized answer.
pub fn exact_match(prediction: &str, answers: &[String]) -> f64 {
    let p = normalize_answer(prediction);
    if answers.iter().any(|a| normalize_answer(a) == p) {
        1.0
    } else {
        0.0
    }
}

/// Hit-rate exclusion rule: a question leaves the denominator as soon as
/// any of its ground-truth answers normalizes to "yes" or "no".
pub fn is_yes_no(answers: &[String]) -> bool {
    answers.iter().any(|a| {
        let n = normalize_answer(a);
        n == "yes" || n == "no"
    })
}

fn contains_answer(caption_norm: &str, answer_norm: &str, word_boundary: bool) -> bool {
    if word_boundary {
        // Normalized text is single-space separated, so padding both sides
        // with one space turns word-boundary matching into plain substring.
        let padded_c = format!(" {caption_norm} ");
        let padded_a = format!(" {answer_norm} ");
        padded_c.contains(&padded_a)
    } else {
        caption_norm.contains(answer_norm)
    }
}

/// Whether any caption contains any ground-truth answer. None marks the
/// question excluded (yes/no answers). Answers normalizing to the empty
/// string cannot produce hits.
pub fn question_hit(
    captions: &[String],
    answers: &[String],
    word_boundary: bool,
) -> Option<bool> {
    if is_yes_no(answers) {
        return None;
    }
    let norm_answers: Vec<String> = answers
        .iter()
        .map(|a| normalize_answer(a))
        .filter(|a| !a.is_empty())
        .collect();
    let hit = captions.iter().any(|c| {
        let cn = normalize_text(c);
        norm_answers.iter().any(|a| contains_answer(&cn, a, word_boundary))
    });
    Some(hit)
}

/// (hit rate, excluded count) over per-question flags; None when every
/// question was excluded, rather than a made-up 0.
pub fn answer_hit_rate(hits: &[Option<bool>]) -> (Option<f64>, usize) {
    let excluded = hits.iter().filter(|h| h.is_none()).count();
    let applicable = hits.len() - excluded;
    if applicable == 0 {
        return (None, excluded);
    }
    let hit_count = hits.iter().filter(|h| **h == Some(true)).count();
    (Some(hit_count as f64 / applicable as f64), excluded)
}
