//! Decentralized multi-agent navigation built around pairwise winding numbers.
//!
//! Each agent runs a sampling-based MPC that trades off goal progress,
//! collision clearance, and deviation from per-neighbor winding-number
//! targets. Targets and their weights come from a plan source: constants for
//! the baselines, or a small PPO-trained network for the learned planner.
//!
//! The runnable programs under `examples/` are the intended entry points for
//! exploring the library; the `winding-nav` binary exposes the batch
//! `train | eval | sweep | replay` workflows.

pub mod controller;
pub mod dynamics;
pub mod environment;
pub mod error;
pub mod experiments;
pub mod geom;
pub mod learning;
pub mod planner;
pub mod seeds;
pub mod topology;

pub use error::{Error, Result};
pub use geom::Vec2;
