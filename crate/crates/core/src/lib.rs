//! Simulation, curriculum, reward shaping and PPO training for a quadruped
//! that climbs steel walls on electro-permanent magnet feet.

pub mod adhesion;
pub mod config;
pub mod curriculum;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod learning;
pub mod log;
pub mod model;
pub mod observation;
pub mod reward;

pub use config::ExperimentConfig;
pub use error::{Error, Result};

/// Joint targets for 12 joints followed by one magnet command per foot.
pub const ACTION_DIM: usize = 16;
