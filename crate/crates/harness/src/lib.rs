//! Experiment runner for the transfer-learning model-selection library:
//! configs, seeded replication, and the report generators behind the
//! `model-transfer` binary.

pub mod calibrate;
pub mod check;
pub mod config;
pub mod gap;
pub mod output;
pub mod run;
pub mod seeds;
pub mod verify;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/harness.md")]
mod book_harness {}
