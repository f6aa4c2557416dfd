//! Actor, critic and state-estimator networks, PPO, and the curriculum
//! training loop.

mod agent;
pub mod nn;
mod ppo;
pub mod toy;
mod train;

pub use agent::{gaussian_entropy, gaussian_log_prob, Agent, NetworkSpec, PolicyDistribution, CONTACT_HEAD};
pub use ppo::{
    compute_gae, estimator_loss, estimator_loss_and_grad, fit_estimator, normalize_advantages, ppo_update,
    surrogate_loss_and_grad, value_loss_and_grad, PpoConfig, PpoOptimizer, Surrogate, TrainingBatch, UpdateStats,
};
pub use train::{env_seed, IterationStats, PolicyController, TrainConfig, Trainer, CURRICULUM_END, CURVE_COLUMNS};
