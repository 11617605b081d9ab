//! Numerical weak KAM toolkit for contact Hamilton-Jacobi equations
//! `u_t + H(x, u, u_x) = 0` on the flat circle and the flat 2-torus.

// `!(x > 0.0)` is deliberate: NaN must fail the validation checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod expr;
pub mod grid;
pub mod io;
pub mod model;
pub mod oracle;
pub mod semigroup;
pub mod weakkam;
