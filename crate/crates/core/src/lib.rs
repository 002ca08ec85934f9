//! Differentially private stochastic gradient Langevin dynamics for convex GLM losses.
//!
//! The crate covers the sampler ([`engine`]), its step-size and noise
//! schedules ([`schedules`]), a privacy accountant ([`privacy`]), synthetic
//! data ([`datagen`]) and an experiment harness ([`harness`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod data;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod fmtnum;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod oracles;
pub mod privacy;
pub mod rng;
pub mod schedules;
pub mod selftest;

pub use data::{Dataset, Example};
pub use engine::{run_multi_pass, run_single_pass, RunOptions, RunRecord, SgldState};
pub use error::{Error, Result};
pub use linalg::Vector;
pub use losses::{GlmLoss, LossBounds};
pub use privacy::{DpBudget, RdpBudget};
pub use rng::RngStream;
pub use schedules::{MultiPassSchedule, SinglePassSchedule, StepParams, StepSchedule};
