//! Harmonic analysis for the Bessel operator Δ_λ on (0, ∞) with dm(x) = x^{2λ}dx
//! and on its product: kernels, semigroups, Littlewood–Paley functionals,
//! maximal functions, conjugate systems, atoms, and an experiment harness.

pub mod atoms;
pub mod conjugate_system;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod lp_analysis;
pub mod maximal;
pub mod operators;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};
