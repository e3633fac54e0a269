//! Self-contained toy fixture: a seeded weight container, a small
//! vocabulary, eight questions with multi-annotator answers and
//! human-written captions, and deterministic 32x32 images. Everything a
//! full pipeline run needs, generated from one seed.

use std::fs;
use std::path::Path;

use pnp_core::config::ArchConfig;
use pnp_core::rng::{fnv1a64, RngStream};
use pnp_core::text::RESERVED_TOKENS;
use pnp_core::vision::Image;
use pnp_core::weights::ModelBundle;

use crate::container::write_bundle;
use crate::error::{FileError, Result};
use crate::ppm::write_ppm;
use crate::schema::{ArchFile, ConfigFile};

pub const N_QUESTIONS: usize = 8;

pub fn fixture_words() -> Vec<&'static str> {
    vec![
        // rendering and prompt plumbing
        "question", "context", "a", "an", "the", "of", "picture",
        // question vocabulary
        "what", "color", "is", "are", "there", "how", "many", "on", "in", "where", "does",
        "it", "left", "right", "side", "near", "animal",
        // objects
        "dog", "cat", "bird", "horse", "sheep", "cow", "boat", "car", "bus", "train",
        "bench", "chair", "table", "ball", "kite", "tree", "flower", "grass", "sky",
        "cloud", "sun", "moon", "water", "sand", "beach", "field", "road", "house",
        "window", "door", "fence", "hat", "man", "woman", "child", "person", "girl",
        "boy", "hydrant", "sign", "light", "box", "cup", "plate", "food", "apple",
        "banana", "pizza", "umbrella", "frisbee", "fire",
        // colors, sizes, counts, materials
        "red", "blue", "green", "yellow", "white", "black", "brown", "orange", "purple",
        "gray", "pink", "big", "small", "tall", "short", "old", "young", "one", "two",
        "three", "four", "five", "wooden", "metal", "plastic", "bright", "dark",
        // verbs and relations
        "sitting", "standing", "running", "playing", "flying", "eating", "holding",
        "riding", "next", "to", "under", "over", "with", "and", "at", "by", "behind",
        // closed answers
        "yes", "no",
    ]
}

pub fn fixture_arch() -> ArchConfig {
    ArchConfig {
        d_v: 16,
        d_t: 16,
        heads: 2,
        ite_layers: 2,
        cap_layers: 2,
        qa_enc_layers: 2,
        qa_dec_layers: 2,
        vocab_size: fixture_words().len() + RESERVED_TOKENS,
        max_enc_len: 256,
        patch_grid: (4, 4),
    }
}

#[derive(serde::Serialize)]
struct FixtureRecord {
    id: &'static str,
    image: String,
    question: &'static str,
    answers: Vec<&'static str>,
    human_captions: Vec<&'static str>,
}

fn repeat_answers(spec: &[(&'static str, usize)]) -> Vec<&'static str> {
    spec.iter().flat_map(|&(a, n)| std::iter::repeat_n(a, n)).collect()
}

fn fixture_questions() -> Vec<FixtureRecord> {
    let rows: Vec<(&'static str, &'static str, Vec<&'static str>, Vec<&'static str>)> = vec![
        (
            "q01",
            "what color is the sky",
            repeat_answers(&[("blue", 6), ("sky blue", 2), ("light blue", 2)]),
            vec![
                "a picture of a blue sky",
                "the sky is blue and bright",
                "a blue sky over the field",
                "the bright blue sky",
                "a blue sky with a cloud",
            ],
        ),
        (
            "q02",
            "is there a dog in the picture",
            repeat_answers(&[("yes", 8), ("no", 2)]),
            vec![
                "a dog on the grass",
                "a big brown dog",
                "a dog near the fence",
                "a dog playing with a ball",
                "the dog is on the grass",
            ],
        ),
        (
            "q03",
            "what animal is on the grass",
            repeat_answers(&[("dog", 5), ("cat", 3), ("sheep", 2)]),
            vec![
                "a dog on the green grass",
                "a cat sitting on the grass",
                "a dog and a cat on the grass",
                "a sheep in the field",
                "the grass is green",
            ],
        ),
        (
            "q04",
            "how many boats are in the water",
            repeat_answers(&[("two", 7), ("three", 3)]),
            vec![
                "two boats on the water",
                "a boat near the beach",
                "two boats by the sand",
                "a boat on the blue water",
                "boats on the water near the beach",
            ],
        ),
        (
            "q05",
            "what is the man holding",
            repeat_answers(&[("umbrella", 6), ("kite", 4)]),
            vec![
                "a man holding an umbrella",
                "the man is holding a kite",
                "a man with an umbrella on the road",
                "a tall man holding an umbrella",
                "a man standing with an umbrella",
            ],
        ),
        (
            "q06",
            "what color is the fire hydrant",
            repeat_answers(&[("red", 9), ("orange", 1)]),
            vec![
                "a red fire hydrant on the road",
                "the fire hydrant is red",
                "a red hydrant near the fence",
                "a bright red fire hydrant",
                "a red fire hydrant by the house",
            ],
        ),
        (
            "q07",
            "where is the cat sitting",
            repeat_answers(&[("chair", 4), ("table", 4), ("window", 2)]),
            vec![
                "a cat sitting on the chair",
                "the cat is on the table",
                "a cat near the window",
                "a black cat sitting on a chair",
                "the cat is sitting by the window",
            ],
        ),
        (
            "q08",
            "is the light on",
            repeat_answers(&[("no", 7), ("yes", 3)]),
            vec![
                "the light is dark",
                "a dark window of the house",
                "the house at dark",
                "a window with no light",
                "the light by the door",
            ],
        ),
    ];
    rows.into_iter()
        .enumerate()
        .map(|(i, (id, question, answers, human_captions))| FixtureRecord {
            id,
            image: format!("images/img{:02}.ppm", i + 1),
            question,
            answers,
            human_captions,
        })
        .collect()
}

/// 32x32 image: one base color per 8x8 cell plus a diagonal brightness
/// ramp. Pure arithmetic on stream draws, so bytes never vary.
fn fixture_image(seed: u64, name: &str) -> Image {
    let mut stream = RngStream::new(seed).child(fnv1a64(name));
    let (h, w) = (32usize, 32usize);
    let cells = 4usize;
    let base: Vec<f64> = (0..cells * cells * 3).map(|_| stream.next_f64()).collect();
    let mut data = Vec::with_capacity(h * w * 3);
    for r in 0..h {
        for c in 0..w {
            let cell = (r / 8) * cells + c / 8;
            let ramp = (r + c) as f64 / ((h + w - 2) as f64);
            for ch in 0..3 {
                let v = 0.7 * base[cell * 3 + ch] + 0.3 * ramp;
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Image::new(h, w, data).expect("fixture image construction")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| FileError::io(path, e))
}

/// Writes the complete fixture into `dir`: arch.json, vocab.json,
/// weights.pnpw, dataset.jsonl, images/, and a ready-to-run run.json.
pub fn generate(dir: &Path, seed: u64) -> Result<()> {
    let images_dir = dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| FileError::io(&images_dir, e))?;

    let arch = fixture_arch();
    let arch_json = serde_json::to_string_pretty(&ArchFile::from_arch(&arch))
        .expect("arch serialization");
    write_text(&dir.join("arch.json"), &(arch_json + "\n"))?;

    let words: Vec<String> = fixture_words().iter().map(|s| s.to_string()).collect();
    let vocab_json = serde_json::to_string_pretty(&words).expect("vocab serialization");
    write_text(&dir.join("vocab.json"), &(vocab_json + "\n"))?;

    let bundle = ModelBundle::seeded(&arch, seed)?;
    write_bundle(&dir.join("weights.pnpw"), &bundle)?;

    let mut dataset = String::new();
    for record in fixture_questions() {
        dataset.push_str(&serde_json::to_string(&record).expect("record serialization"));
        dataset.push('\n');
        let img = fixture_image(seed, &record.image);
        write_ppm(&dir.join(&record.image), &img)?;
    }
    write_text(&dir.join("dataset.jsonl"), &dataset)?;

    let run = ConfigFile {
        arch: "arch.json".into(),
        vocab: "vocab.json".into(),
        weights: "weights.pnpw".into(),
        dataset: "dataset.jsonl".into(),
        seed: Some(0),
        n_captions: Some(8),
        k_prime: Some(6),
        gradcam_layer: None,
        patch_strategy: None,
        decode: None,
        fusion: None,
        group_size: None,
        max_enc_len: None,
        ahr_word_boundary: None,
        use_human_captions: None,
    };
    let run_json = serde_json::to_string_pretty(&run).expect("run config serialization");
    write_text(&dir.join("run.json"), &(run_json + "\n"))?;
    Ok(())
}
