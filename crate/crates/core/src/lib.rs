//! Numerical two-space scattering on asymptotically conic surfaces and cones.

pub mod assembly;
pub mod blocktri;
pub mod bounds;
pub mod coefficients;
pub mod cross_section;
pub mod cutoff;
pub mod error;
pub mod evolution;
pub mod fit;
pub mod fourier;
pub mod grid;
pub mod hankel;
pub mod lap;
pub mod metric;
pub mod modal;
pub mod problem;
pub mod resolvent;
pub mod spectral;
pub mod stationary;
pub mod stencil;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
