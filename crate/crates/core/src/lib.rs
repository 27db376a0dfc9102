#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod constants;
pub mod error;
pub mod field;
pub mod operators;
pub mod dpp;
pub mod game;
pub mod expansion;
