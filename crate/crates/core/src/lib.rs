// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brownian;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod generators;
pub mod grid;
pub mod harness;
pub mod infconv;
pub mod rng;
pub mod stats;
pub mod regression;
pub mod solver;
