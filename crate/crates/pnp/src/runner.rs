//! Threaded dataset evaluation. Images load on the calling thread; the
//! per-question compute fans out over a worker pool. Results keep dataset
//! order, and the path-addressed RNG makes every row independent of the
//! schedule, so any thread count produces identical output.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use pnp_core::eval::{QuestionRecord, QuestionResult};
use pnp_core::pipeline::{run_question, RunConfig};
use pnp_core::text::Vocab;
use pnp_core::vision::Image;
use pnp_core::weights::ModelBundle;

use crate::error::FileError;
use crate::ppm::load_image;

fn failed_row(id: &str, err: &FileError) -> QuestionResult {
    QuestionResult {
        id: id.to_string(),
        prediction: None,
        soft_accuracy: None,
        exact_match: None,
        n_captions_kept: 0,
        ahr_hit: None,
        captions: Vec::new(),
        relevance: None,
        error: Some(err.to_string()),
    }
}

/// Evaluates all records with `threads` workers (clamped to at least 1).
pub fn run_dataset(
    bundle: &ModelBundle,
    vocab: &Vocab,
    run: &RunConfig,
    records: &[QuestionRecord],
    threads: usize,
) -> Vec<QuestionResult> {
    let prepared: Vec<Result<Option<Image>, FileError>> = records
        .iter()
        .map(|rec| {
            if run.use_human_captions {
                Ok(None)
            } else {
                load_image(Path::new(&rec.image_ref), bundle.config.patch_grid).map(Some)
            }
        })
        .collect();

    let n = records.len();
    let workers = threads.max(1).min(n.max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<QuestionResult>>> = Mutex::new(vec![None; n]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let row = match &prepared[i] {
                    Err(e) => failed_row(&records[i].id, e),
                    Ok(img) => run_question(bundle, vocab, run, &records[i], img.as_ref()),
                };
                slots.lock().unwrap()[i] = Some(row);
            });
        }
    });
    slots.into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}
