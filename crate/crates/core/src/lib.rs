//! Meshless element-free Galerkin solver for 3D finite-deformation elasticity.
//!
//! The library builds interpolating modified moving least squares (IMMLS)
//! shape functions over scattered node clouds, integrates internal forces on a
//! tetrahedral background grid with a 4-point Gauss rule, and advances the
//! equations of motion with total Lagrangian explicit dynamics (central
//! difference stepping or dynamic relaxation). Because the shape functions are
//! interpolating, essential boundary conditions are imposed directly on nodal
//! values, as in the finite element method.
//!
//! Modules:
//! - [`cloud`]: node clouds, background grids, Gauss points, support queries.
//! - [`mls`]: MLS / MMLS / IMMLS shape functions and derivatives.
//! - [`material`]: neo-Hookean constitutive law.
//! - [`solver`]: precomputed shape tables, mass lumping, explicit stepping.
//! - [`verify`]: analytical oracles, error norms, boundary-condition audits.
//! - [`config`]: run configuration files and benchmark presets.

pub mod cloud;
pub mod config;
mod error;
pub mod material;
pub mod mls;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
