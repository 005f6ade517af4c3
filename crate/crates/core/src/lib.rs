//! Numerical laboratory for the linearized motion of a compressible liquid
//! with a free surface boundary, posed on the unit disk in Lagrangian
//! coordinates.
//!
//! The crate builds, from a background flow and an equation of state, the
//! discrete operators of the linearized problem (the second-order enthalpy
//! operator, the boundary-form operator on divergence-free fields, and the
//! lower-order convection terms), two constituent integrators (an interior
//! wave equation and a divergence-free evolution), and a fixed-point solver
//! that couples them. Everything is backed by a summation-by-parts polar
//! grid whose divergence is the exact negative adjoint of its gradient, so
//! the structural identities of the continuous problem (symmetry,
//! projections, energy conservation) hold at solver precision rather than
//! truncation level.

pub mod background;
pub mod calculus;
pub mod elliptic;
pub mod eos;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod operators;
pub mod testfields;
pub mod wave;

pub use background::{BackgroundFlow, Frame};
pub use eos::EquationOfState;
pub use error::{Error, Result};
pub use grid::{Grid, ScalarField, VectorField};
