//! Numerical laboratory for the nonlinear fractional diffusion equation
//! `∂t u + A F(u) = 0` on intervals and rectangles with homogeneous Dirichlet
//! conditions.
//!
//! The crate is organised bottom-up:
//!
//! * [`nonlinearity`]: the constitutive function `F`, its Legendre transform
//!   and the envelope calculus that follows from the band condition on `F/F'`.
//! * [`operators`]: dense realisations of the Dirichlet Laplacian, spectral and
//!   restricted fractional Laplacians, their Green matrices, and kernel-bound
//!   certification.
//! * [`stepper`]: the implicit Euler (Crandall–Liggett) scheme with a Newton
//!   inner solver.
//! * [`estimates`]: constants and executable checks for the a priori
//!   estimates satisfied by nonnegative solutions.
//! * [`experiments`]: config-driven runs, sweeps, artifacts and plots.

pub mod error;
pub mod estimates;
pub mod experiments;
pub mod nonlinearity;
pub mod operators;
pub mod report;
pub mod stepper;

pub use error::{Error, Result};
pub use nonlinearity::{Nonlinearity, NonlinearityKind};
pub use operators::{BoundaryWeight, DiscreteOperator, Domain, DomainSpec, OperatorFamily};
pub use report::{CheckReport, Location};
pub use stepper::{StepperConfig, Trajectory};
