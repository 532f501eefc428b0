//! Post-processing of records and parameter sweeps.

mod phase;
mod regression;
mod switching;
mod sweep;

pub use phase::*;
pub use regression::*;
pub use switching::*;
pub use sweep::*;
