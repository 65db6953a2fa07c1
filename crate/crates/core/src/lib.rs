//! Robust mention detection with letter-trigram word hashing and stacked
//! bidirectional LSTMs.
//!
//! The crate covers the whole pipeline:
//!
//! * [`corpus`]: documents, sentences, tokens, BIO2 projection and the
//!   column / standoff readers.
//! * [`encoder`]: DICT, EMB and TRI word encoders plus surface-form flags.
//! * [`network`]: dense, LSTM and bidirectional LSTM stacks with exact
//!   backpropagation through time and finite-difference verification.
//! * [`tagger`]: training, prediction, span decoding and model files.
//! * [`eval`]: weak-match micro scores and macro BIO2 scores.
//! * [`experiment`]: the encoder × network comparison grid.
//! * [`synth`]: a seeded synthetic corpus generator for tests and demos.

pub mod corpus;
pub mod encoder;
mod error;
pub mod eval;
pub mod experiment;
pub mod network;
pub mod synth;
pub mod tagger;

pub use corpus::{Corpus, Document, Label, MentionSpan, Sentence, Token};
pub use encoder::{EncodedToken, Encoder, EncoderMethod, SurfaceFlags};
pub use error::{Error, Result};
pub use eval::{BioReport, EvalMode, EvalReport, NerReport, SpanCounts};
pub use network::{NetworkConfig, NetworkVariant, Parameters};
pub use tagger::{ModelSpec, PredictionResult, TaggerModel, TrainingConfig};
