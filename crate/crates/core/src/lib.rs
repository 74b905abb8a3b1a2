pub mod build;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod model;
pub mod optim;
pub mod rng;
pub mod spectral;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
