//! Convergent approximations to the probability density of the solution of
//! the heat equation on (0,1) with homogeneous Dirichlet boundary conditions,
//! a random diffusion coefficient and a stochastic-process initial condition.
//!
//! Two deterministic quadrature routes tabulate the density of the truncated
//! series solution — one through the joint law of the random sine
//! coefficients, one through the initial condition's orthogonal expansion —
//! with a seeded Monte Carlo oracle and convergence/hypothesis diagnostics
//! for cross-validation.

pub mod config;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod law;
pub mod mc;
pub mod models;
pub mod quad;
pub mod series;

pub use error::{Error, Result};
pub use law::{ScalarDensity, Support, TailClass};
pub use series::EvalPoint;
