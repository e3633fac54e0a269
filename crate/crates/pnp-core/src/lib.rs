#![cfg_attr(not(test), no_std)]

//! Deterministic question-guided image captioning and answering pipeline.
//!
//! This crate holds the math and the models: tensors, cross-attention with
//! gradient traces, patch relevance, weighted patch sampling, stochastic
//! caption decoding, fused answer generation, and evaluation metrics. It is
//! `no_std` (with `alloc`) and does no IO; file formats, the CLI, and
//! threading live in the companion `pnp` crate.

extern crate alloc;

pub mod attention;
pub mod captioner;
pub mod config;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod ite;
pub mod metrics;
pub mod mha;
pub mod pipeline;
pub mod qa;
pub mod text;
pub mod vision;
pub mod relevance;
pub mod rng;
pub mod sampler;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
