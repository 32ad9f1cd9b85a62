//! Manifold-packing self-supervised learning.
//!
//! Augmented views of each input form a sub-manifold in embedding space,
//! summarized as an ellipsoid. Training pushes overlapping ellipsoids apart
//! with a short-range repulsive energy, the same dynamics that drive
//! particle packings and random organization toward absorbing states.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod nn;
pub mod packing;
pub mod randorg;
pub mod rng;
pub mod trainer;

pub use config::Config;
pub use error::{ClampError, Result};
pub use linalg::Matrix;
