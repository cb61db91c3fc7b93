//! Numerical laboratory for radial weights on the unit disc.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bergman;
pub mod classes;
pub mod error;
pub mod grid;
pub mod harness;
pub mod muckenhoupt;
mod num_serde;
pub mod operators;
pub mod quad;
pub mod special;
pub mod weight;

pub use error::{Error, Result};
pub use grid::{Grid, GridMeta, Profile};
pub use quad::QuadratureSpec;
pub use weight::{parse_weight, sigma_weight, ExponentPair, RadialWeight, WeightKind};
