//! Workbench for probing the adversarial robustness of undersampled
//! multi-coil MR image reconstruction.

pub mod attack;
pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod mri;
pub mod recon;

pub use error::{Error, ErrorClass, Result};
