//! Discontinuous Galerkin solvers for the dimensionless two-species
//! Vlasov–Ampère system in one space and one velocity dimension.
//!
//! The crate provides an explicit two-stage scheme and an operator-split
//! implicit midpoint scheme, both of which conserve particle number and
//! total energy exactly at the discrete level (for polynomial degree
//! `k >= 2`), together with the diagnostics and ensemble statistics used to
//! study current-driven ion-acoustic turbulence.

pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod ensemble;
pub mod error;
pub mod explicit;
pub mod field;
pub mod fluxops;
pub mod implicit;
pub mod io;
pub mod physics;
pub mod quadmesh;
pub mod state;

pub use error::{Error, Result};
