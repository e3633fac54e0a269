//! CSV rendering for sweeps and the hit-rate versus accuracy table.
//! Same float discipline as the JSON report; absent values are empty
//! fields.

use pnp_core::eval::{AhrBucket, EvalAggregates};

use crate::report::format_float;

/// One sweep row: a parameter value and what evaluating it produced.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub aggregates: Option<EvalAggregates>,
    pub error: Option<String>,
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn render_sweep_csv(param: &str, rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "param,value,n_questions,n_failed,soft_accuracy,exact_match,ahr,ahr_excluded,\
         mean_captions_kept,error\n",
    );
    for row in rows {
        let mut fields = vec![quote(param), quote(&row.value)];
        match &row.aggregates {
            Some(a) => {
                fields.push(a.n_questions.to_string());
                fields.push(a.n_failed.to_string());
                fields.push(opt_float(a.soft_accuracy));
                fields.push(opt_float(a.exact_match));
                fields.push(opt_float(a.ahr));
                fields.push(a.ahr_excluded.to_string());
                fields.push(opt_float(a.mean_captions_kept));
            }
            None => fields.extend(std::iter::repeat_n(String::new(), 7)),
        }
        fields.push(quote(row.error.as_deref().unwrap_or("")));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn render_buckets_csv(buckets: &[AhrBucket]) -> String {
    let mut out = String::from("bucket,n,mean_captions_kept,ahr,mean_soft_accuracy\n");
    for (i, b) in buckets.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i,
            b.n,
            format_float(b.mean_captions_kept),
            format_float(b.ahr),
            format_float(b.mean_soft_accuracy),
        ));
    }
    out
}
