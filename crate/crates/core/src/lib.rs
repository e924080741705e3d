//! Two-point correlators of a massless scalar field in 1+1 dimensions.
//!
//! The field lives in a Dirichlet box `[0, L]` and is subjected to an external
//! potential `V(x, t)` entering the equation of motion as `[∂² − 2V] φ = 0`.
//! Instead of evolving operators, the crate evolves the Wightman function
//! `W(x, t; x', t')` in both of its time arguments with a second-order explicit
//! finite-difference scheme, and extracts renormalized energy densities,
//! quality factors and single-mode covariance matrices from the result.
//!
//! Module map:
//!
//! * [`lattice`]: grids, the CFL bound and the von Neumann amplification analysis.
//! * [`potential`]: the ramped erf-Gaussian double wall and simpler variants.
//! * [`states`]: mode basis, smeared vacuum and one-particle initial data.
//! * [`evolution`]: bootstrap stencils, the diagonal-band marcher and the
//!   two-pass reference engine.
//! * [`observables`]: energy density, region energies, quadratures and purity.
//! * [`analysis`]: coarse/medium/fine convergence harness.
//! * [`setup`]: a resolution-independent description of a run that can be
//!   rebuilt on refined grids.
//! * [`snapshot`]: binary dump format for diagonal records.

pub mod analysis;
pub mod error;
pub mod evolution;
pub mod lattice;
pub mod observables;
pub mod potential;
pub mod setup;
pub mod snapshot;
pub mod states;

mod matrix;

pub use error::{Error, Result};

pub use num_complex::Complex64 as C64;
