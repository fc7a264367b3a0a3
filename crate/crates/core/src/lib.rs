pub mod analysis;
pub mod diagnostics;
pub mod error;
pub mod gibbs;
pub mod linalg;
pub mod model;
pub mod panel;
pub mod rng;
pub mod samplers;
pub mod synth;

pub use error::{Error, Result};
