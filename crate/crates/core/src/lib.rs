//! High-order self-starting implicit time integration for second-order
//! structural dynamics.
//!
//! The step map is a rational approximation `P(A)/Q(A)` of the matrix
//! exponential of the dimensionless state-space operator. Two families are
//! provided: mixed Padé approximants split into partial fractions over distinct
//! roots, and schemes whose denominator has a single root of multiplicity `M`.
//! Both reduce one time step to `M` solves with effective stiffness
//! `r²M + rΔtC + Δt²K` and recover the acceleration without a mass solve.

pub mod polytools;
pub mod schemes;
pub mod linalg;
pub mod model;
pub mod stepper;
pub mod problems;
pub mod analysis;
