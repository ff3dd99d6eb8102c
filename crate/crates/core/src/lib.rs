//! Method-of-moments learning for overcomplete hidden Markov models.
//!
//! The crate builds window moment tensors of an HMM, decomposes them by
//! simultaneous diagonalization, recovers transition and observation
//! matrices, and measures the structural quantities that govern whether
//! that recovery is stable: conditioning of the likelihood matrix, ℓ1 gain
//! of the transition matrix, cycle structure, degree and output support.

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod hmm;
pub mod linalg;
pub mod lowerbound;
pub mod moments;
pub mod recovery;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use hmm::{Hmm, LikelihoodFactors, ObservationWindow};
pub use tensor::{DecompositionOptions, DecompositionResult, Tensor3};
