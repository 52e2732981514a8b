pub mod corpus;
pub mod discriminator;
pub mod error;
pub mod eval;
pub mod generator;
pub mod mocap;
pub mod net;
pub mod synth;
pub mod text;
pub mod training;

pub use error::{Error, Result};
