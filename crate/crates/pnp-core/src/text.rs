//! Tokenizer: lowercase, strip ASCII punctuation, split on whitespace,
//! look words up in a fixed vocabulary.
//!
//! Token ids 0..=3 are reserved: BOS, EOS, PAD, UNK. Word ids start at 4.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const BOS: u32 = 0;
pub const EOS: u32 = 1;
pub const PAD: u32 = 2;
pub const UNK: u32 = 3;
pub const RESERVED_TOKENS: usize = 4;

/// Lowercase, remove ASCII punctuation, collapse whitespace to single
/// spaces. This is the normalization applied before tokenization and
/// before caption/answer string comparisons.
pub fn normalize_text(s: &str) -> String {
    let mut cleaned = String::with_capacity(s.len());
    for c in s.chars() {
        if c.is_ascii_punctuation() {
            continue;
        }
        for lc in c.to_lowercase() {
            cleaned.push(lc);
        }
    }
    let mut out = String::with_capacity(cleaned.len());
    for word in cleaned.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// A tokenized piece of text. `ids` are unframed (no BOS/EOS).
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct Vocab {
    words: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocab {
    /// Builds a vocabulary from word list. Words must already be in
    /// normalized form, nonempty, single tokens, and unique.
    pub fn new(words: Vec<String>) -> Result<Vocab> {
        let mut index = BTreeMap::new();
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || normalize_text(w) != *w || w.contains(' ') {
                return Err(Error::InvalidParam {
                    name: "vocab",
                    detail: format!("word '{w}' is not a single normalized token"),
                });
            }
            let id = (RESERVED_TOKENS + i) as u32;
            if index.insert(w.clone(), id).is_some() {
                return Err(Error::InvalidParam {
                    name: "vocab",
                    detail: format!("duplicate word '{w}'"),
                });
            }
        }
        Ok(Vocab { words, index })
    }

    /// Total id space including the four reserved tokens.
    pub fn size(&self) -> usize {
        RESERVED_TOKENS + self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn lookup(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    /// Normalize and map to ids; unknown words become UNK.
    pub fn tokenize(&self, text: &str) -> TokenSeq {
        let norm = normalize_text(text);
        let ids = norm
            .split_whitespace()
            .map(|w| self.index.get(w).copied().unwrap_or(UNK))
            .collect();
        TokenSeq { ids, text: text.to_string() }
    }

    /// BOS + ids + EOS.
    pub fn frame(&self, ids: &[u32]) -> Vec<u32> {
        let mut out = Vec::with_capacity(ids.len() + 2);
        out.push(BOS);
        out.extend_from_slice(ids);
        out.push(EOS);
        out
    }

    /// Words joined by spaces; BOS/EOS/PAD are dropped, UNK and
    /// out-of-range ids render as "<unk>".
    pub fn detokenize(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == BOS || id == EOS || id == PAD {
                continue;
            }
            let word = if (id as usize) >= RESERVED_TOKENS {
                self.words
                    .get(id as usize - RESERVED_TOKENS)
                    .map(|w| w.as_str())
                    .unwrap_or("<unk>")
            } else {
                "<unk>"
            };
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(word);
        }
        out
    }
}
