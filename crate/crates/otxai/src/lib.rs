//! File formats, datasets, experiments and the command line for
//! [`otxai_core`].

pub mod cli;
pub mod config;
pub mod datasets;
pub mod error;
pub mod experiments;
pub mod idx;
pub mod model_io;
pub mod render;
pub mod train;

pub use error::{Error, Result};
