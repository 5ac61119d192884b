//! Numerical laboratory for mean-ergodic theory of bi-continuous semigroups
//! on bounded continuous functions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expr;
pub mod fields;
pub mod invariant;
pub mod means;
pub mod models;
pub mod periodic;
pub mod quadrature;
pub mod report;
pub mod suite;
pub mod wiener;

pub use error::{Error, Result};
pub use expr::Expr;
pub use fields::{Axis, CompactWindow, Extension, Grid, Interpolation, SampledField};
pub use models::{Elliptic1D, SemigroupModel};
pub use quadrature::{QuadratureSpec, Rule};
