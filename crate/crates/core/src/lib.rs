pub mod config;
pub mod error;
pub mod grid;
pub mod halo;
pub mod kernel;
pub mod perfmodel;
pub mod pipeline;
pub mod transport;

pub use error::{Error, Result};
