#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::excessive_precision,
    clippy::large_enum_variant
)]

pub mod cli;
pub mod data;
pub mod distributions;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod linalg;
pub mod losses;
pub mod nn;
pub mod special;
pub mod uncertainty;

pub use error::{Error, Result};
