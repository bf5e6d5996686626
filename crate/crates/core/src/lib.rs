//! Numerical toolkit for backward SDEs and parabolic PDEs driven by
//! space-time signals through nonlinear Young integrals.
//!
//! The crate covers path seminorms ([`paths`]), space-time drivers and their
//! time mollification ([`drivers`]), fractional Brownian sheet sampling
//! ([`fractional_sheet`]), nonlinear Young integrals and matrix Young flows
//! ([`young_calculus`]), forward diffusions with first-exit localization
//! ([`diffusion`]), linear and localized nonlinear BSDE solvers
//! ([`bsde_solver`]) and Feynman–Kac PDE solvers ([`pde_fk`]).
//!
//! Monte Carlo loops run on rayon when the default `parallel` feature is
//! enabled. Every sample draws from its own reproducible stream, so results
//! are bit-identical for any worker count.

pub mod bsde_solver;
pub mod csvfmt;
pub mod diffusion;
pub mod drivers;
pub mod error;
pub mod fractional_sheet;
pub mod par;
pub mod paths;
pub mod pde_fk;
pub mod regression;
pub mod rng;
pub mod stats;
pub mod young_calculus;

pub use error::{Error, Result};
