pub mod bandwidth;
pub mod cli;
pub mod error;
pub mod inference;
pub mod kernels;
pub(crate) mod linalg;
pub mod rng;
pub mod sample;
pub mod screening;
pub mod sdr;

pub use error::{Error, Result};
pub use sample::TrainingSample;
pub mod simlab;
pub mod twostep;
