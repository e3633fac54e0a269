//! On-disk JSON schemas: model architecture, vocabulary, and run config.
//! Paths inside a config file resolve relative to the file's directory but
//! are echoed in reports exactly as written.

use std::fs;
use std::path::{Path, PathBuf};

use pnp_core::config::ArchConfig;
use pnp_core::text::{Vocab, RESERVED_TOKENS};

use crate::error::{FileError, Result};

#[derive(serde::Serialize, serde::Deserialize, Debug, Clone)]
pub struct ArchFile {
    pub d_v: usize,
    pub d_t: usize,
    pub heads: usize,
    pub ite_layers: usize,
    pub cap_layers: usize,
    pub qa_enc_layers: usize,
    pub qa_dec_layers: usize,
    pub vocab_size: usize,
    pub max_enc_len: usize,
    pub patch_grid: [usize; 2],
}

impl ArchFile {
    pub fn to_arch(&self) -> ArchConfig {
        ArchConfig {
            d_v: self.d_v,
            d_t: self.d_t,
            heads: self.heads,
            ite_layers: self.ite_layers,
            cap_layers: self.cap_layers,
            qa_enc_layers: self.qa_enc_layers,
            qa_dec_layers: self.qa_dec_layers,
            vocab_size: self.vocab_size,
            max_enc_len: self.max_enc_len,
            patch_grid: (self.patch_grid[0], self.patch_grid[1]),
        }
    }

    pub fn from_arch(a: &ArchConfig) -> Self {
        ArchFile {
            d_v: a.d_v,
            d_t: a.d_t,
            heads: a.heads,
            ite_layers: a.ite_layers,
            cap_layers: a.cap_layers,
            qa_enc_layers: a.qa_enc_layers,
            qa_dec_layers: a.qa_dec_layers,
            vocab_size: a.vocab_size,
            max_enc_len: a.max_enc_len,
            patch_grid: [a.patch_grid.0, a.patch_grid.1],
        }
    }
}

pub fn load_arch(path: &Path) -> Result<ArchConfig> {
    let text = fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    let file: ArchFile =
        serde_json::from_str(&text).map_err(|e| FileError::format(path, e.to_string()))?;
    let arch = file.to_arch();
    arch.validate()?;
    Ok(arch)
}

/// Vocabulary file: a JSON array of words in id order.
pub fn load_vocab(path: &Path, arch: &ArchConfig) -> Result<Vocab> {
    let text = fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    let words: Vec<String> =
        serde_json::from_str(&text).map_err(|e| FileError::format(path, e.to_string()))?;
    if words.len() + RESERVED_TOKENS != arch.vocab_size {
        return Err(FileError::format(
            path,
            format!(
                "{} words plus {RESERVED_TOKENS} reserved tokens do not match the \
                 declared vocab size {}",
                words.len(),
                arch.vocab_size
            ),
        ));
    }
    Ok(Vocab::new(words)?)
}

/// Run config file. Paths are required; every knob is optional and falls
/// back to the pipeline default.
#[derive(serde::Serialize, serde::Deserialize, Debug, Clone)]
pub struct ConfigFile {
    pub arch: String,
    pub vocab: String,
    pub weights: String,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_captions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_prime: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradcam_layer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_strategy: Option<String>,
    /// Decoding spec, e.g. "topk:50", "nucleus:0.9", "temp:0.5", "beam".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_enc_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ahr_word_boundary: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_human_captions: Option<bool>,
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FileError::format(path, e.to_string()))
}

/// Resolves a path from a config file against the config's directory.
pub fn resolve_from(config_path: &Path, relative: &str) -> PathBuf {
    let p = Path::new(relative);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or_else(|| Path::new(".")).join(p)
    }
}
