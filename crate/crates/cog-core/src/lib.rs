//! Core library for a desk-scale study of skill stitching with offline RL.
//!
//! Everything here is `no_std` + `alloc`: dense f64 tensors with reverse-mode
//! autodiff, small MLPs with a squashed-Gaussian policy head, two 2D
//! manipulation environments plus a tabular gridworld analogue, scripted
//! data-collection policies, conservative Q-learning (offline and online),
//! and exact tabular oracles used to validate the learned values.
//!
//! File formats, CLI, and experiment orchestration live in the companion
//! `cog-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod algo;
pub mod data;
pub mod env;
pub mod error;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod rollout;
pub mod scripted;
pub mod tensor;

pub use error::CoreError;

/// Convenience alias used across the crate.
pub type Result<T> = core::result::Result<T, CoreError>;
