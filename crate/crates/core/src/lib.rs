//! Goal-driven stochastic character motion synthesis.
//!
//! A conditional VAE with a mixture-of-experts decoder predicts the next
//! character state autoregressively; a second conditional VAE samples
//! interaction goals on objects; an A* planner breaks long approaches into
//! walkable sub-goals.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod goal_net;
pub mod kinematics;
pub mod metrics;
pub mod motion_net;
pub mod nn;
pub mod pipeline;
pub mod planner;
pub mod runtime;
pub mod server;
pub mod state;
pub mod voxel;

pub use error::{Error, Result};
