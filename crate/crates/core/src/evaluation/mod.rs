//! Episode runner, metrics over episode logs, ablation variants and a
//! scripted crawl reference controller.

mod ablation;
mod metrics;
mod scripted;

pub use ablation::Ablation;
pub use metrics::{
    average_walking_time, early_termination_rate, recovery_failures, recovery_rate, retention, retention_counts,
    velocity_rmse, velocity_rmse_channels, MetricsReport, MetricSummary, RECOVERY_WINDOWS,
};
pub use scripted::ScriptedCrawl;

use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curriculum::CurriculumState;
use crate::env::{Action, ClimbEnv};
use crate::error::{Error, Result};
use crate::log::EpisodeLog;
use crate::model::NUM_LEGS;

/// Produces an action and per-foot contact confidences from the current
/// environment state.
pub trait Controller {
    fn reset(&mut self, _env: &mut ClimbEnv) {}
    fn act(&mut self, env: &ClimbEnv) -> (Action, [f64; NUM_LEGS]);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalProtocol {
    pub horizon: f64,
    pub episodes: usize,
    pub prob_attach: f64,
    /// Wall tilt during evaluation.
    pub theta: f64,
    pub base_seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            episodes: 100,
            prob_attach: 1.0,
            theta: FRAC_PI_2,
            base_seed: 0,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::invalid("eval.horizon", "must be > 0"));
        }
        if self.episodes == 0 {
            return Err(Error::invalid("eval.episodes", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.prob_attach) {
            return Err(Error::invalid("eval.prob_attach", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.episodes as u64).map(|k| self.base_seed.wrapping_add(k)).collect()
    }

    pub fn schedule(&self) -> CurriculumState {
        CurriculumState::fixed(self.theta, self.prob_attach, Vector3::new(0.0, 0.0, -9.81))
    }
}

/// Runs one episode to its horizon or first termination.
pub fn run_episode<C: Controller + ?Sized>(
    controller: &mut C,
    env: &mut ClimbEnv,
    protocol: &EvalProtocol,
    seed: u64,
) -> EpisodeLog {
    env.cfg.episode_length = protocol.horizon;
    env.reseed(seed);
    env.reset(&protocol.schedule());
    controller.reset(env);
    let mut log = EpisodeLog::new(seed, protocol.horizon, env.cfg.control_dt());
    loop {
        let (action, confidence) = controller.act(env);
        let out = env.step(&action, &confidence);
        log.steps.push(out.record.clone());
        if out.done() {
            log.termination = out.termination;
            log.duration = env.time().min(protocol.horizon);
            break;
        }
    }
    log
}

/// Runs every protocol episode in parallel. `make` builds a fresh controller
/// and environment per episode.
pub fn run_protocol<C, F>(protocol: &EvalProtocol, make: F) -> Result<Vec<EpisodeLog>>
where
    C: Controller,
    F: Fn() -> Result<(C, ClimbEnv)> + Sync,
{
    protocol.validate()?;
    protocol
        .seeds()
        .into_par_iter()
        .map(|seed| {
            let (mut controller, mut env) = make()?;
            Ok(run_episode(&mut controller, &mut env, protocol, seed))
        })
        .collect()
}
