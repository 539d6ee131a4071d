//! Adversarially-trained semi-supervised sequence tagging for disfluency
//! correction.
//!
//! [`synth`] builds labeled disfluent corpora from fluent text; [`textnorm`]
//! and [`corpus`] handle preprocessing and storage. [`seqgan`] defines the
//! encoder, generator and discriminator on top of the [`tensor`] autodiff
//! engine, [`trainer`] runs the adversarial training loop and [`evaluate`]
//! scores token-level predictions.

pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod seed;
pub mod seqgan;
pub mod synth;
pub mod tensor;
pub mod textnorm;
pub mod trainer;

pub use error::{Error, Result};
