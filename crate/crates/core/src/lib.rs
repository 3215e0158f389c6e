pub mod cli;
pub mod error;
pub mod gsm;
pub mod hbt;
pub mod metrics;
pub mod modal;
pub mod quadrature;
pub mod speckle;
pub mod stats;

pub use error::{Error, Result};
