//! Command-line surface: `run` evaluates a dataset and writes a JSON
//! report, `sweep` re-runs it across values of one parameter and emits a
//! CSV table, `gen-fixture` writes the self-contained toy assets.
//!
//! Option precedence for `run` and `sweep`: command-line flags, then the
//! `PNP_SEED` environment variable (seed only), then the config file,
//! then built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use pnp_core::config::ArchConfig;
use pnp_core::eval::{aggregate, ahr_accuracy_buckets, QuestionRecord, QuestionResult};
use pnp_core::fusion::FusionMode;
use pnp_core::pipeline::{parse_decode_spec, RunConfig, SweepParam};
use pnp_core::sampler::PatchStrategy;
use pnp_core::text::Vocab;
use pnp_core::weights::ModelBundle;

use crate::container::read_bundle;
use crate::csv_out::{render_buckets_csv, render_sweep_csv, SweepRow};
use crate::dataset::load_dataset;
use crate::fixture;
use crate::pgm::write_heatmap;
use crate::report::{render_report, ReportPaths};
use crate::runner::run_dataset;
use crate::schema::{load_arch, load_config, load_vocab, resolve_from, ConfigFile};

#[derive(Parser)]
#[command(name = "pnp", version, about = "Question-guided captioning and answer generation")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Evaluate a dataset and write a JSON report.
    Run(RunArgs),
    /// Vary one parameter over a list of values and emit a CSV table.
    Sweep(SweepArgs),
    /// Generate the toy fixture (weights, vocab, dataset, images, config).
    GenFixture(GenFixtureArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Run configuration file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Base RNG seed (overrides PNP_SEED and the config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Captions to request per question.
    #[arg(long)]
    pub num_captions: Option<usize>,
    /// Patches sampled per caption.
    #[arg(long)]
    pub k_prime: Option<usize>,
    /// 1-based cross-attention layer for relevance gradients.
    #[arg(long)]
    pub gradcam_layer: Option<usize>,
    /// Decode spec: method with optional parameter, e.g. topk:50,
    /// nucleus:0.9, temp:0.5, beam:3.
    #[arg(long)]
    pub decode: Option<String>,
    /// Answer fusion: fie (single encoder pass) or fid (grouped passes).
    #[arg(long)]
    pub fusion: Option<String>,
    /// Captions per group under fid fusion.
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Patch selection: question_guided, uniform, or all.
    #[arg(long)]
    pub patch_strategy: Option<String>,
    /// Encoder length budget (defaults to the model limit).
    #[arg(long)]
    pub max_enc_len: Option<usize>,
    /// Answer from the dataset's human captions, skipping the visual stages.
    #[arg(long)]
    pub human_captions: bool,
    /// Count an answer hit only on whole-word matches.
    #[arg(long)]
    pub ahr_word_boundary: bool,
    /// Write one PGM relevance heatmap per question into this directory.
    #[arg(long)]
    pub export_heatmaps: Option<PathBuf>,
    /// Worker threads for question evaluation.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Report destination (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Slice hit agreement by caption count into this many buckets.
    #[arg(long)]
    pub ahr_buckets: Option<usize>,
    /// Bucket CSV destination (stdout when omitted).
    #[arg(long)]
    pub buckets_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Run configuration file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Parameter to vary: gradcam_layer, k_prime, n_captions,
    /// decode_method, fusion, group_size, or patch_strategy.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values for the swept parameter.
    #[arg(long)]
    pub values: String,
    /// Base RNG seed (overrides PNP_SEED and the config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for question evaluation.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// CSV destination (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenFixtureArgs {
    /// Output directory for the generated assets.
    #[arg(long)]
    pub dir: PathBuf,
    /// Seed for the generated weights and images.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> anyhow::Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("PNP_SEED") {
        Ok(raw) => raw
            .parse::<u64>()
            .with_context(|| format!("PNP_SEED must be an unsigned integer, got '{raw}'")),
        Err(std::env::VarError::NotPresent) => Ok(file.unwrap_or(0)),
        Err(std::env::VarError::NotUnicode(_)) => {
            anyhow::bail!("PNP_SEED is set but is not valid unicode")
        }
    }
}

/// Layers the config file over the defaults, then the flags over that.
fn build_run_config(file: &ConfigFile, args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut run = RunConfig::default();
    run.seed = resolve_seed(args.seed, file.seed)?;
    run.n_captions = args.num_captions.or(file.n_captions).unwrap_or(run.n_captions);
    run.k_prime = args.k_prime.or(file.k_prime).unwrap_or(run.k_prime);
    run.gradcam_layer = args.gradcam_layer.or(file.gradcam_layer);
    run.group_size = args.group_size.or(file.group_size).unwrap_or(run.group_size);
    run.max_enc_len = args.max_enc_len.or(file.max_enc_len);
    if let Some(s) = &file.patch_strategy {
        run.patch_strategy = PatchStrategy::parse(s)?;
    }
    if let Some(s) = &args.patch_strategy {
        run.patch_strategy = PatchStrategy::parse(s)?;
    }
    if let Some(spec) = &file.decode {
        run.decode = parse_decode_spec(spec, &run.decode)?;
    }
    if let Some(spec) = &args.decode {
        run.decode = parse_decode_spec(spec, &run.decode)?;
    }
    if let Some(s) = &file.fusion {
        run.fusion = FusionMode::parse(s)?;
    }
    if let Some(s) = &args.fusion {
        run.fusion = FusionMode::parse(s)?;
    }
    run.ahr_word_boundary = args.ahr_word_boundary || file.ahr_word_boundary.unwrap_or(false);
    run.use_human_captions = args.human_captions || file.use_human_captions.unwrap_or(false);
    Ok(run)
}

struct LoadedAssets {
    file: ConfigFile,
    arch: ArchConfig,
    vocab: Vocab,
    bundle: ModelBundle,
    records: Vec<QuestionRecord>,
}

fn load_assets(config_path: &Path) -> anyhow::Result<LoadedAssets> {
    let file = load_config(config_path)?;
    let arch = load_arch(&resolve_from(config_path, &file.arch))?;
    let vocab = load_vocab(&resolve_from(config_path, &file.vocab), &arch)?;
    let bundle = read_bundle(&resolve_from(config_path, &file.weights), &arch)?;
    let records = load_dataset(&resolve_from(config_path, &file.dataset))?;
    Ok(LoadedAssets { file, arch, vocab, bundle, records })
}

fn write_output(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)
                        .with_context(|| format!("creating {}", parent.display()))?;
                }
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn export_heatmaps(dir: &Path, results: &[QuestionResult]) -> anyhow::Result<usize> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = 0;
    for r in results {
        if let Some(map) = &r.relevance {
            write_heatmap(&dir.join(format!("{}.pgm", r.id)), map)?;
            written += 1;
        }
    }
    Ok(written)
}

/// Returns true when every question evaluated without error.
pub fn cmd_run(args: &RunArgs) -> anyhow::Result<bool> {
    let assets = load_assets(&args.config)?;
    let run = build_run_config(&assets.file, args)?;
    run.validate(&assets.arch)?;

    let results = run_dataset(&assets.bundle, &assets.vocab, &run, &assets.records, args.threads);

    let paths = ReportPaths {
        arch: assets.file.arch.clone(),
        vocab: assets.file.vocab.clone(),
        weights: assets.file.weights.clone(),
        dataset: assets.file.dataset.clone(),
    };
    let report = render_report(&run, &assets.arch, &paths, &results);
    write_output(args.out.as_deref(), &report)?;

    if let Some(dir) = &args.export_heatmaps {
        export_heatmaps(dir, &results)?;
    }
    if let Some(n_buckets) = args.ahr_buckets {
        let buckets = ahr_accuracy_buckets(&results, n_buckets);
        write_output(args.buckets_out.as_deref(), &render_buckets_csv(&buckets))?;
    }
    Ok(results.iter().all(|r| r.error.is_none()))
}

/// Returns true when the table was produced; row-level failures are data.
pub fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<bool> {
    let assets = load_assets(&args.config)?;
    let base_args = RunArgs {
        config: args.config.clone(),
        seed: args.seed,
        num_captions: None,
        k_prime: None,
        gradcam_layer: None,
        decode: None,
        fusion: None,
        group_size: None,
        patch_strategy: None,
        max_enc_len: None,
        human_captions: false,
        ahr_word_boundary: false,
        export_heatmaps: None,
        threads: args.threads,
        out: None,
        ahr_buckets: None,
        buckets_out: None,
    };
    let base = build_run_config(&assets.file, &base_args)?;
    let param = SweepParam::parse(&args.param)?;

    let mut rows = Vec::new();
    for raw in args.values.split(',') {
        let value = raw.trim();
        let configured = param
            .apply(&base, value)
            .and_then(|rc| rc.validate(&assets.arch).map(|()| rc));
        let row = match configured {
            Err(e) => SweepRow { value: value.into(), aggregates: None, error: Some(e.to_string()) },
            Ok(rc) => {
                let results =
                    run_dataset(&assets.bundle, &assets.vocab, &rc, &assets.records, args.threads);
                SweepRow {
                    value: value.into(),
                    aggregates: Some(aggregate(&results)),
                    error: None,
                }
            }
        };
        rows.push(row);
    }
    write_output(args.out.as_deref(), &render_sweep_csv(param.name(), &rows))?;
    Ok(true)
}

pub fn cmd_gen_fixture(args: &GenFixtureArgs) -> anyhow::Result<bool> {
    fixture::generate(&args.dir, args.seed)?;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fixture::generate(dir.path(), 0).unwrap();
        dir
    }

    fn plain_run_args(config: PathBuf) -> RunArgs {
        RunArgs {
            config,
            seed: None,
            num_captions: None,
            k_prime: None,
            gradcam_layer: None,
            decode: None,
            fusion: None,
            group_size: None,
            patch_strategy: None,
            max_enc_len: None,
            human_captions: false,
            ahr_word_boundary: false,
            export_heatmaps: None,
            threads: 1,
            out: None,
            ahr_buckets: None,
            buckets_out: None,
        }
    }

    #[test]
    fn flags_override_config_file() {
        let dir = fixture_dir();
        let file = load_config(&dir.path().join("run.json")).unwrap();
        let mut args = plain_run_args(dir.path().join("run.json"));
        args.seed = Some(7);
        args.num_captions = Some(3);
        args.decode = Some("nucleus:0.95".into());
        args.fusion = Some("fie".into());
        let run = build_run_config(&file, &args).unwrap();
        assert_eq!(run.seed, 7);
        assert_eq!(run.n_captions, 3);
        assert_eq!(run.decode.p, 0.95);
        assert_eq!(run.fusion, FusionMode::Encoder);
        assert_eq!(run.k_prime, 6, "config file value survives when no flag is set");
    }

    #[test]
    fn config_file_overrides_defaults() {
        let dir = fixture_dir();
        let file = load_config(&dir.path().join("run.json")).unwrap();
        let args = plain_run_args(dir.path().join("run.json"));
        let run = build_run_config(&file, &args).unwrap();
        assert_eq!(run.n_captions, 8);
        assert_eq!(run.k_prime, 6);
        assert_eq!(run.seed, 0);
        assert_eq!(run.group_size, 1);
    }

    #[test]
    fn run_command_produces_report_and_heatmaps() {
        let dir = fixture_dir();
        let mut args = plain_run_args(dir.path().join("run.json"));
        args.num_captions = Some(2);
        args.out = Some(dir.path().join("report.json"));
        args.export_heatmaps = Some(dir.path().join("maps"));
        args.ahr_buckets = Some(2);
        args.buckets_out = Some(dir.path().join("buckets.csv"));
        let ok = cmd_run(&args).unwrap();
        assert!(ok);
        let report = fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert!(report.starts_with("{\n  \"config\""));
        assert!(report.contains("\"q01\""));
        for i in 1..=8 {
            let p = dir.path().join(format!("maps/q{i:02}.pgm"));
            assert!(p.exists(), "missing heatmap {}", p.display());
        }
        let buckets = fs::read_to_string(dir.path().join("buckets.csv")).unwrap();
        assert!(buckets.starts_with("bucket,n,"));
    }

    #[test]
    fn sweep_command_writes_row_per_value_and_records_bad_values() {
        let dir = fixture_dir();
        let args = SweepArgs {
            config: dir.path().join("run.json"),
            param: "gradcam_layer".into(),
            values: "1,2,9".into(),
            seed: None,
            threads: 2,
            out: Some(dir.path().join("sweep.csv")),
        };
        let ok = cmd_sweep(&args).unwrap();
        assert!(ok, "a table with row-level errors still counts as produced");
        let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4, "header plus one row per value");
        assert!(lines[1].starts_with("gradcam_layer,1,"));
        assert!(lines[3].contains("layer"), "out-of-range layer lands in the error column");
    }

    #[test]
    fn unknown_sweep_param_is_a_structural_error() {
        let dir = fixture_dir();
        let args = SweepArgs {
            config: dir.path().join("run.json"),
            param: "learning_rate".into(),
            values: "1".into(),
            seed: None,
            threads: 1,
            out: None,
        };
        assert!(cmd_sweep(&args).is_err());
    }

    #[test]
    fn human_caption_arm_runs_without_images() {
        let dir = fixture_dir();
        let mut args = plain_run_args(dir.path().join("run.json"));
        args.human_captions = true;
        // Images stay untouched in this arm; point the config at a copy
        // with the image files deleted to prove it.
        fs::remove_dir_all(dir.path().join("images")).unwrap();
        args.out = Some(dir.path().join("report.json"));
        let ok = cmd_run(&args).unwrap();
        assert!(ok);
        let report = fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert!(report.contains("\"use_human_captions\": true"));
    }
}
