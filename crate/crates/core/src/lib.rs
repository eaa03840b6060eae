#![no_std]
extern crate alloc;

pub mod error;
pub mod gauss;
pub mod linalg;

pub use error::{Error, Result};
pub use gauss::{gaussian_convolve, gaussian_logpdf, gaussian_product, log_add, log_sum_exp, Gaussian, Gmm, LogProb};
pub use linalg::{Covariance, Matrix};
pub mod hmm;
pub use hmm::{EmissionScorer, FrameEvidence, Hmm};
pub mod obs;
pub use obs::{apply_model, sample_utterance, ObservationModelSpec};
pub mod compensation;
pub mod oracles;
