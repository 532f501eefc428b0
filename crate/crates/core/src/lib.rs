//! Simulation engine for a Kerr-nonlinear optical cavity with dispersive
//! bistability, alone and under coherent feedback from a second Kerr cavity.
//!
//! The crate is organised bottom-up:
//!
//! * [`ops`]: Fock-space operators, states and density matrices.
//! * [`models`]: open-loop, static-feedback and closed-loop Lindblad models.
//! * [`dynamics`]: master-equation integration, Liouvillians and steady states.
//! * [`trajectories`]: quantum-jump unravelings and seeded ensembles.
//! * [`analysis`]: phases, switching statistics, regression fits, φ sweeps.
//! * [`config`] and [`io`]: experiment configuration and output formats.

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod models;
pub mod ops;
pub mod trajectories;

pub use error::{Error, Result};
pub use models::{CavityParams, LindbladModel, PaperDefaults};
pub use ops::{DensityMatrix, HilbertSpec, Operator, StateVector};

pub use num_complex::Complex64;
