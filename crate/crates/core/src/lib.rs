// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod calculus;
pub mod campaign;
pub mod error;
pub mod fit;
pub mod kernel;
pub mod lattice;
pub mod linalg;
pub mod operator;
pub mod quadrature;
pub mod resolvent;
pub mod semigroup;
pub mod sparse;
pub mod spectral;
pub mod squarefn;
pub mod spaces;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
