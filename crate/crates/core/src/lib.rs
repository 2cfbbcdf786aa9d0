//! Numerical laboratory for the rotating compressible Navier-Stokes system
//! near a constant state: spectral analysis of the linear propagator,
//! stationary-phase decay and space-time estimates, scale-aware norms, and a
//! small pseudospectral solver on the periodic box.

pub mod dispersion;
pub mod dyadic;
pub mod error;
pub mod grid;
pub mod propagator;
pub mod smallmat;
pub mod snapshot;
pub mod solver;
pub mod symbol;

pub use error::{CoreError, Result};
