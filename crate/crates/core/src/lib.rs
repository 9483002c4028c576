//! Foot motion refinement at desk scale: rotation utilities, a reduced
//! lower-body skeleton, synthetic training data, the refinement
//! transformer, its losses and training loop, and evaluation metrics.

pub mod ablation;
pub mod camera;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod footmr;
pub mod io;
pub mod kinematics;
pub mod losses;
pub mod metrics;
pub mod rotmath;
pub mod scalar;
pub mod synth;
pub mod train;

pub use error::{FootError, Result};
