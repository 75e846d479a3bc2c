// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod integrators;
pub mod jets;
pub mod systems;
mod fit;
pub mod modified_field;
pub mod neural;
pub mod training;
pub mod bench;
