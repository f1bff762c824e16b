//! Corpus preparation and evaluation toolkit for Arabic language-model
//! pre-training.
//!
//! The crate is organised as a pipeline of independent stages:
//!
//! * [`corpus`] reads and writes line-delimited documents and segments text.
//! * [`normalizer`] classifies characters and strips diacritics, tatweel,
//!   emoji and HTML.
//! * [`filter`] applies the document- and sentence-level quality heuristics
//!   and produces a retention report.
//! * [`dedup`] removes repeated sentences by first occurrence of a short key.
//! * [`bbpe`] trains and applies a byte-level BPE vocabulary.
//! * [`instances`] generates masked-LM/NSP and span-corruption examples.
//! * [`char_composer`] is the character-CNN word representation with exact
//!   gradients.
//! * [`metrics`] and [`harness`] implement the fine-tuning evaluation
//!   protocol.

pub mod bbpe;
pub mod char_composer;
pub mod corpus;
pub mod dedup;
pub mod error;
pub mod filter;
pub mod harness;
pub mod instances;
pub mod metrics;
pub mod normalizer;

pub use error::{Error, Result};
