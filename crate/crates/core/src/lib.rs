//! Span-ranking coreference resolution with multi-task mention supervision.
//!
//! The model scores every candidate span with two unary scorers (a
//! coreference-markable score and a mention-candidate score), prunes, ranks
//! antecedents coarse-to-fine, and is trained jointly with auxiliary heads for
//! mention detection, entity type and information status under a weighted
//! loss. Around it sit CoNLL/JSONL/sidecar I/O, cluster decoding that emits
//! typed singletons, the MUC/B³/CEAF-φ4 metric suite and a two-system error
//! analyzer.

pub mod assignment;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod error_analysis;
pub mod evaluation;
pub mod inference;
pub mod model;
pub mod mtl_loss;
pub mod optim;
pub mod params;
pub mod scoring;
pub mod spans;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use corpus::{Document, EntityType, InfoStatus, Mention, Span};
pub use error::{CorefError, Result};
