//! Second-pass keyword rescoring toolkit: audio frontend, bidirectional
//! LSTM acoustic models trained with CTC, keyword scoring, multi-task
//! training, augmentation, synthetic corpora, and DET evaluation.

pub mod augment;
pub mod cli;
pub mod ctc;
pub mod data;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod nnet;
pub mod scalar;
pub mod scorer;
pub mod trainer;

pub use error::{Error, Result};
