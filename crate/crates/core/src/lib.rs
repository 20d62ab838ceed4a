//! Stochastic advection-diffusion-reaction equations on moving closed planar curves.
//!
//! The curve is given as a parametrization `u(t, x)` over the reference circle
//! `[0, 2π)`. The field is approximated with periodic piecewise-linear finite
//! elements on a uniform reference mesh, the length element `|u_x|` is taken
//! from the interpolated polygon, and time is advanced with a semi-implicit
//! Euler-Maruyama step driven by a truncated Q-Wiener process.
//!
//! Module map:
//!
//! * [`geometry`]: reference mesh, curve parametrizations, polygon edge lengths, norms
//! * [`assembly`]: weighted mass / stiffness matrices and explicit load vectors
//! * [`linalg`]: O(n) direct solver for SPD cyclic tridiagonal systems
//! * [`noise`]: eigenbasis, spectrum, noise intensity maps and the keyed Brownian lattice
//! * [`stepper`]: the fully discrete time loop
//! * [`ritz`]: geometric Ritz projection and its convergence report
//! * [`experiments`]: strong-convergence studies, extinction probability, a-priori monitor
//! * [`config`] / [`cli`]: JSON run configuration and the command implementations

pub mod assembly;
pub mod cli;
pub mod config;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod noise;
pub mod quadrature;
pub mod ritz;
pub mod stepper;

mod error;

pub use error::{Error, Result};

pub use assembly::CyclicTridiagonal;
pub use geometry::{CurvePath, DiscreteCurve, FieldCoeffs, Mesh};
pub use noise::{BrownianLattice, NoiseSpectrum, SigmaSpec};
pub use stepper::StepperConfig;
