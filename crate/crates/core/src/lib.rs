//! Numerical toolkit for the defocusing Ablowitz–Ladik lattice
//!
//! ```text
//! i dq_n/dt = q_{n+1} - 2 q_n + q_{n-1} - |q_n|^2 (q_{n+1} + q_{n-1}),   sup |q_n| < 1
//! ```
//!
//! Four independent routes to the same solution are provided so that they can be
//! checked against one another:
//!
//! * [`lattice`] integrates the lattice ODE directly on a finite window.
//! * [`scattering`] maps a field to its reflection coefficient on the unit circle
//!   and evolves it in time.
//! * [`rh`] solves the reconstruction Riemann–Hilbert problem on the circle with a
//!   Beals–Coifman integral equation and recovers `q_n(t)`.
//! * [`asymptotics`] evaluates the explicit Zakharov–Manakov leading-order term for
//!   `|n/2t| < 1` and the fast-decay envelope outside that sector.
//!
//! [`harness`] ties the pipelines together, fits decay exponents and writes
//! CSV/JSON reports.
//!
//! Data-parallel loops (grid nodes, rays, lattice sites of independent solves) run
//! on rayon when the `parallel` feature is enabled, which it is by default. Every
//! such entry point also accepts an [`Execution`] so both paths can be compared.

pub mod asymptotics;
pub mod cauchy;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod linalg;
pub mod par;
pub mod rh;
pub mod scattering;
pub mod special;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use par::Execution;
