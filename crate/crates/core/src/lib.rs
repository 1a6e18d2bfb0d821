// Negated comparisons such as `!(x > 0.0)` deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod carreau;
pub mod config;
pub mod cell;
pub mod cli;
pub mod error;
pub mod flux;
pub mod gap;
pub mod geometry;
pub mod linalg;
pub mod macroscale;
pub mod quadrature;
pub mod validation;
pub mod vec2;

pub use carreau::CarreauParams;
pub use error::{Error, Result};
pub use vec2::Vec2;
