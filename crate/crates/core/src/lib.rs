//! Constrained critical points without Lagrange multipliers.
//!
//! A constrained problem `min/max f` subject to `G = 0` is reduced, chart by
//! chart, to an unconstrained one: pick `m` dependent variables where the
//! constraint Jacobian minor is invertible, let the implicit function theorem
//! supply `h`, and study `J(u) = f(u, h(u))`. Derivatives of `J` of any order
//! come from derivatives of `f` and `G` alone.
//!
//! Modules, bottom-up:
//!
//! * [`expr`]: exact polynomials, parsing, differentiation, Taylor components.
//! * [`charts`]: chart enumeration, implicit jets and reduced derivatives.
//! * [`solver`]: multi-start Newton on the critical system, with family detection.
//! * [`classify`]: second derivative test, then the higher derivative test on
//!   spheres and their algebraic subsets.
//! * [`lagrange`]: multiplier recovery and a bordered-Hessian cross-check.

pub mod classify;
pub mod expr;
pub mod lagrange;
pub mod linalg;
pub mod scalar;
pub mod charts;
pub mod series;
pub mod solver;
