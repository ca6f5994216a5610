//! Identifiability analysis for binary latent feature models X ≈ ZW.
//!
//! The crate finds the integer transforms U that keep ZU binary, enumerates or
//! samples the resulting class of equivalent factorizations (ZU, U⁻¹W), and
//! moves an estimate through that class toward higher prior probability at an
//! unchanged likelihood.

pub mod baseline;
pub mod binarity;
pub mod error;
pub mod experiment;
pub mod hopper;
pub mod instrument;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod pdc;
pub mod rng;
pub mod sampler;
pub mod synth;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use matrix::{BinaryMatrix, FeatureMatrix, IntMatrix, TransformMatrix};
pub use model::{LfmInstance, SolutionPair};
