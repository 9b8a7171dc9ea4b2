//! DDPG with hindsight experience replay on sparse-reward goal environments,
//! plus a binary-chromosome genetic algorithm that tunes the six learning
//! parameters (discount, polyak coefficient, two learning rates, random-action
//! probability and exploration noise) to minimize epochs-to-success.
//!
//! Module map:
//! - [`nn`]: dense MLP with reverse-mode gradients and Adam.
//! - [`envs`]: point-reach, planar-push and planar-slide goal environments.
//! - [`replay`]: ring replay buffer with store-time goal relabeling.
//! - [`agent`]: the DDPG learner, its training epoch and evaluation.
//! - [`ga`]: 66-bit chromosome codec, genetic operators, fitness and evolution.
//! - [`harness`]: configuration, run persistence, CSV metrics and plot data.

pub mod agent;
pub mod envs;
pub mod error;
pub mod ga;
pub mod harness;
pub mod nn;
pub mod replay;
pub mod seeding;

pub use error::{Error, Result};
