use std::path::PathBuf;
use thiserror::Error;

/// Error type shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    /// A line of an input file could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Structurally valid input with invalid content (non-finite coordinate,
    /// degenerate cell, ...).
    #[error("invalid data: {0}")]
    Data(String),

    /// Invalid or inconsistent geometry.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A support query could not gather enough nodes inside twice the domain
    /// diameter (pathological cloud).
    #[error(
        "support query at ({x:.6e}, {y:.6e}, {z:.6e}) reached radius {radius:.6e} m \
         with only {found} of {needed} nodes"
    )]
    SupportExhausted {
        x: f64,
        y: f64,
        z: f64,
        radius: f64,
        found: usize,
        needed: usize,
    },

    /// The (regularized) moment matrix is singular at an evaluation point.
    /// Only reachable with zero stabilization penalties and a degenerate
    /// node configuration.
    #[error("singular moment matrix at evaluation point ({x:.6e}, {y:.6e}, {z:.6e})")]
    SingularMoment { x: f64, y: f64, z: f64 },

    /// Deformation gradient with non-positive determinant.
    #[error("non-positive volume ratio (J = {j:.6e})")]
    NonPositiveJacobian { j: f64 },

    /// Inverted configuration detected during integration.
    #[error("inverted configuration (J <= 0) at gauss point {gauss_point}, step {step}")]
    Inverted { gauss_point: usize, step: u64 },

    /// Row-sum mass lumping produced a non-positive nodal mass.
    #[error("non-positive lumped mass at node {node}; use a larger support or denser nodes")]
    NonPositiveMass { node: usize },

    /// Non-finite displacement during time stepping.
    #[error("displacement diverged at step {step}")]
    Diverged { step: u64 },

    /// Invalid run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
