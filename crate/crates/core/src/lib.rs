//! Finite-element semi-discretization and exponential Rosenbrock-Euler time
//! stepping for semilinear parabolic problems `u' = A u + F(u)`.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`]: structured interval / rectangle meshes and uniform refinement,
//! * [`sparse`]: CSR storage and a conjugate-gradient solver,
//! * [`fem`]: P1 mass/stiffness assembly, L2 projection and the discrete operator `A_h`,
//! * [`matfunc`]: dense Padé exponentials and Krylov actions of `exp` and `phi_1`,
//! * [`integrator`]: the Rosenbrock-Euler step and an exponential-Euler baseline,
//! * [`problems`]: the registry of test problems,
//! * [`convergence`]: temporal and spatial refinement studies,
//! * [`config`] and [`runner`]: the configuration file and study driver used by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod convergence;
mod error;
pub mod fem;
pub mod integrator;
pub mod matfunc;
pub mod mesh;
pub mod problems;
pub mod runner;
pub mod sparse;

pub use error::{Error, Result};
