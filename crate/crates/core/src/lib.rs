pub mod aggregate;
pub mod cohort;
pub mod config;
pub mod error;
pub mod imaging;
pub mod interpret;
pub mod metrics;
pub mod nnet;
pub mod pipeline;
pub mod rng;
pub mod slide;
pub mod tiler;
pub mod tissue;
pub mod train;

pub use error::{Error, Result};
