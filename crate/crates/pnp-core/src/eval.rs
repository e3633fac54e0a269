//! Evaluation records and aggregation: per-question results, dataset-level
//! aggregates over their applicable denominators, and the hit-rate versus
//! accuracy bucket table.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fusion::AnswerPrediction;
use crate::metrics::answer_hit_rate;
use crate::relevance::RelevanceMap;

/// One dataset row. `answers` carries annotator multiplicity; ten entries
/// from ten annotators are ten entries here.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionRecord {
    pub id: String,
    pub image_ref: String,
    pub question: String,
    pub answers: Vec<String>,
    pub human_captions: Option<Vec<String>>,
}

impl QuestionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.answers.is_empty() {
            return Err(Error::InvalidParam {
                name: "answers",
                detail: alloc::format!("question '{}' has no ground-truth answers", self.id),
            });
        }
        Ok(())
    }
}

/// Outcome for one question. A failed question carries the error text and
/// None for everything downstream of the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionResult {
    pub id: String,
    pub prediction: Option<AnswerPrediction>,
    pub soft_accuracy: Option<f64>,
    pub exact_match: Option<f64>,
    pub n_captions_kept: usize,
    /// None when the question is yes/no-excluded or failed.
    pub ahr_hit: Option<bool>,
    pub captions: Vec<String>,
    pub relevance: Option<RelevanceMap>,
    pub error: Option<String>,
}

impl QuestionResult {
    pub fn failed(id: String, err: &Error) -> Self {
        QuestionResult {
            id,
            prediction: None,
            soft_accuracy: None,
            exact_match: None,
            n_captions_kept: 0,
            ahr_hit: None,
            captions: Vec::new(),
            relevance: None,
            error: Some(alloc::format!("{err}")),
        }
    }
}

/// Dataset-level means. Each metric averages over the questions it applies
/// to: scored questions for the accuracy metrics, non-excluded scored
/// questions for the hit rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalAggregates {
    pub n_questions: usize,
    pub n_failed: usize,
    pub soft_accuracy: Option<f64>,
    pub exact_match: Option<f64>,
    pub ahr: Option<f64>,
    pub ahr_excluded: usize,
    pub mean_captions_kept: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate(results: &[QuestionResult]) -> EvalAggregates {
    let n_failed = results.iter().filter(|r| r.error.is_some()).count();
    let ok: Vec<&QuestionResult> = results.iter().filter(|r| r.error.is_none()).collect();
    let hits: Vec<Option<bool>> = ok.iter().map(|r| r.ahr_hit).collect();
    let (ahr, ahr_excluded) = answer_hit_rate(&hits);
    EvalAggregates {
        n_questions: results.len(),
        n_failed,
        soft_accuracy: mean_of(ok.iter().filter_map(|r| r.soft_accuracy)),
        exact_match: mean_of(ok.iter().filter_map(|r| r.exact_match)),
        ahr,
        ahr_excluded,
        mean_captions_kept: mean_of(ok.iter().map(|r| r.n_captions_kept as f64)),
    }
}

/// One row of the hit-rate versus accuracy table.
#[derive(Debug, Clone, PartialEq)]
pub struct AhrBucket {
    pub n: usize,
    pub mean_captions_kept: f64,
    pub ahr: f64,
    pub mean_soft_accuracy: f64,
}

/// Buckets the hit-applicable questions by kept-caption count (ascending,
/// id-tiebroken) into up to `n_buckets` contiguous slices and reports each
/// slice's hit rate and mean soft accuracy. With one bucket this
/// reproduces the aggregate hit rate exactly.
pub fn ahr_accuracy_buckets(results: &[QuestionResult], n_buckets: usize) -> Vec<AhrBucket> {
    if n_buckets == 0 {
        return Vec::new();
    }
    let mut rows: Vec<&QuestionResult> = results
        .iter()
        .filter(|r| r.ahr_hit.is_some() && r.soft_accuracy.is_some())
        .collect();
    rows.sort_by(|a, b| a.n_captions_kept.cmp(&b.n_captions_kept).then(a.id.cmp(&b.id)));
    let n = rows.len();
    let mut buckets = Vec::new();
    for b in 0..n_buckets {
        let start = b * n / n_buckets;
        let end = (b + 1) * n / n_buckets;
        if start == end {
            continue;
        }
        let slice = &rows[start..end];
        let len = slice.len() as f64;
        let hits = slice.iter().filter(|r| r.ahr_hit == Some(true)).count();
        buckets.push(AhrBucket {
            n: slice.len(),
            mean_captions_kept: slice.iter().map(|r| r.n_captions_kept as f64).sum::<f64>()
                / len,
            ahr: hits as f64 / len,
            mean_soft_accuracy: slice.iter().filter_map(|r| r.soft_accuracy).sum::<f64>() / len,
        });
    }
    buckets
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(
        id: &str,
        soft: Option<f64>,
        hit: Option<bool>,
        kept: usize,
        error: Option<&str>,
    ) -> QuestionResult {
        QuestionResult {
            id: id.into(),
            prediction: None,
            soft_accuracy: soft,
            exact_match: soft.map(|s| if s >= 1.0 { 1.0 } else { 0.0 }),
            n_captions_kept: kept,
            ahr_hit: hit,
            captions: Vec::new(),
            relevance: None,
            error: error.map(|e| e.into()),
        }
    }

    #[test]
    fn aggregates_are_pointwise_means_over_applicable_rows() {
        let rows = [
            result("a", Some(1.0), Some(true), 4, None),
            result("b", Some(0.0), Some(false), 2, None),
            result("c", Some(1.0), None, 6, None), // yes/no excluded
            result("d", None, None, 0, Some("boom")),
        ];
        let agg = aggregate(&rows);
        assert_eq!(agg.n_questions, 4);
        assert_eq!(agg.n_failed, 1);
        assert_eq!(agg.soft_accuracy, Some(2.0 / 3.0));
        assert_eq!(agg.ahr, Some(0.5));
        assert_eq!(agg.ahr_excluded, 1);
        assert_eq!(agg.mean_captions_kept, Some(4.0));
    }

    #[test]
    fn empty_and_all_failed_sets_have_absent_means() {
        assert_eq!(aggregate(&[]).soft_accuracy, None);
        let rows = [result("a", None, None, 0, Some("x"))];
        let agg = aggregate(&rows);
        assert_eq!(agg.soft_accuracy, None);
        assert_eq!(agg.ahr, None);
        assert_eq!(agg.n_failed, 1);
    }

    #[test]
    fn exclusion_plus_applicable_covers_all_scored_rows() {
        let rows = [
            result("a", Some(0.5), Some(true), 1, None),
            result("b", Some(0.5), None, 1, None),
            result("c", Some(0.5), Some(false), 1, None),
        ];
        let agg = aggregate(&rows);
        let applicable = (agg.n_questions - agg.n_failed - agg.ahr_excluded) as f64;
        assert_eq!(applicable, 2.0);
        assert_eq!(agg.ahr, Some(0.5));
    }

    #[test]
    fn single_bucket_reproduces_the_global_hit_rate() {
        let rows = [
            result("a", Some(1.0), Some(true), 4, None),
            result("b", Some(0.5), Some(false), 2, None),
            result("c", Some(0.0), Some(true), 8, None),
            result("d", Some(1.0), None, 3, None),
        ];
        let buckets = ahr_accuracy_buckets(&rows, 1);
        assert_eq!(buckets.len(), 1);
        let agg = aggregate(&rows);
        assert_eq!(Some(buckets[0].ahr), agg.ahr);
        assert_eq!(buckets[0].n, 3);
        assert!((buckets[0].mean_soft_accuracy - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn buckets_slice_by_caption_count_in_order() {
        let rows: Vec<QuestionResult> = (0..6)
            .map(|i| result(&alloc::format!("q{i}"), Some(0.0), Some(i % 2 == 0), i, None))
            .collect();
        let buckets = ahr_accuracy_buckets(&rows, 3);
        assert_eq!(buckets.len(), 3);
        assert_eq!(buckets.iter().map(|b| b.n).sum::<usize>(), 6);
        for w in buckets.windows(2) {
            assert!(w[0].mean_captions_kept < w[1].mean_captions_kept);
        }
        let all_hit: Vec<QuestionResult> =
            (0..4).map(|i| result(&alloc::format!("h{i}"), Some(1.0), Some(true), i, None)).collect();
        for b in ahr_accuracy_buckets(&all_hit, 2) {
            assert_eq!(b.ahr, 1.0);
        }
    }

    #[test]
    fn more_buckets_than_rows_skips_empty_slices() {
        let rows = [result("a", Some(1.0), Some(true), 1, None)];
        let buckets = ahr_accuracy_buckets(&rows, 5);
        assert_eq!(buckets.len(), 1);
        assert_eq!(buckets[0].n, 1);
        assert!(ahr_accuracy_buckets(&rows, 0).is_empty());
    }

    #[test]
    fn record_validation_requires_answers() {
        let rec = QuestionRecord {
            id: "q1".into(),
            image_ref: "img.ppm".into(),
            question: "what".into(),
            answers: Vec::new(),
            human_captions: None,
        };
        assert!(rec.validate().is_err());
    }
}
