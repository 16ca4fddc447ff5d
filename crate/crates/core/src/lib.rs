pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dag;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod optim;
pub mod reward;
pub mod seed;
pub mod space;
pub mod training;

pub use error::{Error, Result};
