//! Matrix-pencil distortion analysis for time-domain integration of
//! linearized differential-algebraic models.
//!
//! A linearized model `E·Δx′ = A·Δx` is a pencil `sE − A`. Applying an
//! integration method with step `h` yields a discrete pencil `z̃Ẽ − Ã`;
//! mapping its eigenvalues back with `s̃ = ln(z̃)/h` and comparing with the
//! original eigenvalues measures the distortion the method introduces.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod methods;
pub mod models;
pub mod pencil;
pub mod tdi;
pub mod textfmt;
pub mod validate;

pub use error::{Error, Result};
pub use exec::Execution;
pub use methods::{build_pencil, growth_roots, MethodSpec, Moebius};
pub use pencil::{finite_eigenvalues, LinearPencil, Spectrum};
