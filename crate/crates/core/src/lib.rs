//! Closed-loop AGC simulation with conventional generation and battery
//! storage, three RegD controllers (PJM-style filter split, LQR, and a PI
//! controller with a data-driven SoC recharge gain), best-hindsight training
//! of that gain, and a comparison harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod controllers;
pub mod engine;
pub mod error;
pub mod exec;
pub mod hindsight;
pub mod plant;
pub mod signals;

pub use error::{Error, Result};
