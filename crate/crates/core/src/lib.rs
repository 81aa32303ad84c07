//! Numerical toolkit for the information-geometric ergodic hierarchy of the
//! 2D correlated Gaussian model of 2×2 Hamiltonian matrix elements.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: Gauss–Hermite/Gauss–Legendre rules, Gaussian expectations,
//!   central differences, RK4 and a grid + golden-section maximizer.
//! - [`model`]: the MaxEnt density over `(H11, H22, H12, H21)` with
//!   macrovariables `(mu, sigma)` and external parameters `Sigma`, `r`.
//! - [`geometry`]: Fisher–Rao metric, Christoffel symbols and Ricci curvature.
//! - [`dynamics`]: geodesic motion of `(mu, sigma)` and `r(tau)` schedules.
//! - [`correlation`]: the IG correlation and the IG ergodic / mixing /
//!   Bernoulli classifier.
//! - [`distinguishability`]: the sup-norm measure `F(p)`, its closed form and
//!   the upper-bound check on the IG correlation.
//! - [`io`]: JSON and CSV formats shared with the command-line front end.

pub mod correlation;
pub mod distinguishability;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
pub use model::{Block, MacroPoint, MicroPoint, ModelConfig, Variable};
