//! Offline-to-online reinforcement learning with advantage-weighted actors
//! and CEM-maximized critics.
//!
//! The crate contains a small dense-network substrate ([`nn`]), mixed
//! continuous/discrete actions ([`action`]), sparse-reward toy environments
//! ([`env`]), a success-partitioned replay buffer ([`replay`]), a
//! cross-entropy action optimizer ([`cem`]), the learners ([`agent`]) and the
//! pretrain/finetune loop with its metrics ([`experiment`]).

pub mod action;
pub mod agent;
pub mod cem;
pub mod env;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod replay;

pub use action::{ActionSpec, ActorDistribution, MixedAction};
pub use error::{Error, Result};
