#![allow(
    clippy::excessive_precision,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::redundant_guards,
    clippy::wrong_self_convention
)]

pub mod bounds;
pub mod certify;
pub mod kernels;
pub mod operator;
pub mod quadrature;
pub mod sweep;
pub mod weights;
