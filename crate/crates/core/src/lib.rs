//! Normalized solutions of `−Δu = λu + μ|u|^{2*−2}u` on a ball with
//! `‖u‖₂ = 1` and Dirichlet data, in the radial setting.
//!
//! A cell-centered radial grid carries the energy, its gradients and the
//! Pohozaev identity. On top of it sit the threshold constants, truncated
//! Aubin–Talenti bubbles, the local minimizer (projected gradient flow plus
//! bordered Newton), a climbing-image mountain-pass solver and certification
//! of computed solutions.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bubbles;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod exec;
pub mod grid;
pub mod minimizer;
pub mod mountainpass;
pub mod quadrature;
pub mod snapshot;
pub mod thresholds;
pub mod tridiag;
