//! Fat-tailed self-similar profiles of the coagulation equation.
//!
//! The crate constructs self-similar profiles f of Smoluchowski's
//! coagulation equation by damped fixed-point iteration on the
//! regularized profile equation
//!
//! ```text
//! x^2 f(x) = (1 - rho) ∫_0^x y f(y) dy + ∫_0^x ∫_{x-y}^∞ y K(y,z) f(y) f(z) dz dy
//! ```
//!
//! and verifies the quantitative structure of such profiles: averaged
//! tail bounds, the moment-estimate suite, the integrated Laplace
//! identity, pointwise decay of the gain term, and the tail asymptotics
//! f(x) ~ (1 - rho) x^{-1-rho}. A conservative sectional scheme for the
//! time-dependent equation tests the scaling hypothesis against the
//! constructed profiles.
//!
//! Modules map one-to-one onto the subsystems: [`kernel`] (admissible
//! rate kernels), [`profile`] (tabulated profiles and quadrature),
//! [`gain`] (the integral operator and equation residual), [`solver`]
//! (fixed-point construction and normalization), [`moments`] (inequality
//! suite), [`laplace`] (desingularized transform and the exact
//! constant-kernel oracle), [`dynamics`] (time-dependent solver),
//! [`verify`] (asymptotics extraction and the consolidated report).

pub mod dynamics;
pub mod error;
pub mod gain;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod laplace;
pub mod moments;
pub mod profile;
pub mod quad;
pub mod selftest;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use gain::{gain_at_nodes, gain_operator, residual, GainContext, ResidualReport};
pub use grid::Grid;
pub use kernel::{KernelSpec, SeparableTerm};
pub use profile::{
    incomplete_power_integral, GridConfig, Profile, ProfileProblem, QuadConfig, SolverConfig,
};
pub use solver::{initial_guess, iterate, normalize, powerlaw_amplitude, solve, SolveReport};

/// Run `f` inside a rayon pool with the requested number of worker
/// threads. Every reduction in the crate has a fixed order, so results
/// are byte-identical for any worker count.
pub fn with_worker_count<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("building rayon pool");
    pool.install(f)
}
