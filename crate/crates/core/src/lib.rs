//! Collision-risk-driven scenario generation and TD3 training for dynamic
//! obstacle avoidance.
//!
//! The crate is organised bottom-up: [`dynamics`] integrates the vehicle and
//! obstacle motion, [`risk`] scores a situation by the share of constant
//! maneuvers that end in a collision, [`scenario`] builds pools of labelled
//! encounters and samples them to a target risk histogram, [`env`] turns them
//! into episodes, [`td3`] learns a policy, and [`harness`] runs studies.

// Range checks are written as `!(lo <= x && x <= hi)` on purpose so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod env;
pub mod error;
pub mod harness;
pub mod risk;
pub mod scenario;
pub mod td3;

pub use error::{Error, Result};

/// Random generator used for every seeded stream in the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;
