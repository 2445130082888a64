//! Numerical laboratory for self-consistent transfer operators of mean-field
//! coupled expanding circle maps.
//!
//! * [`torus`]: grids, quadrature, derivatives and distances on the circle.
//! * [`cones`]: log-Lipschitz cones and their Hilbert projective metric.
//! * [`operators`]: transfer operators, the mean-field drive, the
//!   self-consistent operator, its differential and the noise operator.
//! * [`solver`]: fixed-point iteration and the explicit stability conditions.
//! * [`ensemble`]: finite-N deterministic and noisy particle simulations.
//! * [`rng`]: seeded ChaCha8 substreams.

pub mod cones;
pub mod ensemble;
pub mod error;
pub mod operators;
pub mod rng;
pub mod solver;
pub mod torus;

pub use error::{Result, StoError};

/// Library version, echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
