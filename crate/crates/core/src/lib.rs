//! Two-stage table-to-text generation for low-resource settings.
//!
//! Stage one tags which linearized table tokens are key facts; stage two
//! realizes the selected facts as text. The crate also builds
//! pseudo-parallel data from unlabeled text, applies denoising noise to
//! stage-two inputs, scores output with BLEU, NIST and ROUGE, and runs
//! desk-scale experiments on a synthetic biography corpus.

pub mod checkpoint;
pub mod corpus;
pub mod denoise;
pub mod error;
pub mod experiment;
pub mod keyfact;
pub mod metrics;
pub mod pipeline;
pub mod pseudo;
pub mod realizer;
pub mod synth;
pub mod tagger;
pub mod training;

pub use error::{Error, Result};
