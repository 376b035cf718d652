//! A numerical laboratory for shortcut learning under the max-margin
//! inductive bias.
//!
//! The synthetic task: inputs `x = [B·z, y, δ]` where the label `y` is a
//! perfect feature carried verbatim in the second coordinate, the first
//! coordinate is a scaled shortcut `z` that agrees with `y` on a `rho`
//! fraction of samples, and the rest is isotropic Gaussian noise. Training
//! and test distributions differ only in `rho`, which makes the split
//! between the shortcut group (`y = z`) and the leftover group (`y ≠ z`)
//! the interesting axis of evaluation.
//!
//! The crate provides:
//!
//! - [`dgp`]: seeded sampling of the task and group bookkeeping;
//! - [`losses`]: log-loss plus four margin-control losses with exact
//!   derivatives;
//! - [`model`]: linear and two-layer ReLU predictors with hand-written
//!   backward passes;
//! - [`trainer`]: deterministic full-batch gradient descent with
//!   group-resolved metrics;
//! - [`maxmargin`]: the norm-minimization QPs behind max-margin
//!   classification, solved through their dual with KKT certificates,
//!   plus closed-form bound candidates that bracket the side-constrained
//!   optima;
//! - [`theory`]: Monte Carlo concentration checks, the leftover-group
//!   accuracy formula, a gradient-flow ODE integrator, and related
//!   verification utilities;
//! - [`config`] / [`run`]: a strict JSON experiment runner with sweeps,
//!   CSV/JSON artifacts, and content-hash manifests.

pub mod config;
pub mod dgp;
pub mod linalg;
pub mod losses;
pub mod maxmargin;
pub mod model;
pub mod report;
pub mod rng;
pub mod run;
pub mod special;
pub mod theory;
pub mod trainer;

/// Crate-wide error type. The CLI maps `Config`/`Domain`/`Shape`/`Json` to
/// exit code 2 (validation) and `Divergence`/`Convergence`/`Degenerate` to
/// exit code 3 (numerical failure).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("divergence at epoch {epoch}: loss = {loss:e}")]
    Divergence { epoch: usize, loss: f64 },
    #[error(
        "solver hit the iteration cap ({iterations}): duality gap {gap:.3e}, margin violation {violation:.3e}"
    )]
    Convergence {
        iterations: usize,
        gap: f64,
        violation: f64,
    },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for validation problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Shape(_) | Error::Json(_) | Error::Io(_) => 2,
            Error::Divergence { .. } | Error::Convergence { .. } | Error::Degenerate(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
