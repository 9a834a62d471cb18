pub mod boltzmann;
pub mod chain;
pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod fracdiff;
pub mod quad;
pub mod rng;
pub mod spectral;
pub mod stable;
pub mod stats;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
