use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::agent::Agent;
use super::ppo::{compute_gae, ppo_update, PpoConfig, PpoOptimizer, TrainingBatch, UpdateStats};
use crate::adhesion::AttachReason;
use crate::config::ExperimentConfig;
use crate::curriculum::{Curriculum, CurriculumState};
use crate::env::{Action, ClimbEnv, StepOutcome};
use crate::error::{Error, Result};
use crate::evaluation::{Ablation, Controller};
use crate::model::NUM_LEGS;
use crate::observation::{Estimate, ProprioFrame, ESTIMATE_DIM, ESTIMATOR_INPUT_DIM, OBS_DIM};
use crate::ACTION_DIM;

/// Iteration at which the uncompressed curriculum reaches its final value.
pub const CURRICULUM_END: u64 = 35_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Defaults to the end of the (scaled) curriculum.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    pub num_envs: usize,
    /// Write a checkpoint every this many iterations; 0 keeps only the last.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: None,
            num_envs: 16,
            checkpoint_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_envs == 0 {
            return Err(Error::invalid("train.num_envs", "must be >= 1"));
        }
        if self.iterations == Some(0) {
            return Err(Error::invalid("train.iterations", "must be >= 1"));
        }
        Ok(())
    }

    pub fn resolved_iterations(&self, scale: f64) -> u64 {
        self.iterations
            .unwrap_or_else(|| ((CURRICULUM_END as f64 * scale).round() as u64).max(1))
    }
}

/// One row of the training curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationStats {
    pub iter: u64,
    /// Mean unscaled total reward per control step.
    pub mean_reward: f64,
    /// Share of episodes ending this iteration that reached the horizon;
    /// NaN when none ended.
    pub success_rate: f64,
    pub episodes: usize,
    pub early_terminations: usize,
    pub theta: f64,
    pub prob_attach: f64,
    pub kappa: f64,
    pub phase: u8,
    /// Foot-steps whose gate reported a stochastic failure.
    pub stochastic_failures: usize,
    pub update: UpdateStats,
}

pub const CURVE_COLUMNS: [&str; 16] = [
    "iter",
    "mean_reward",
    "success_rate",
    "episodes",
    "early_terminations",
    "theta",
    "prob_attach",
    "kappa",
    "phase",
    "stochastic_failures",
    "policy_loss",
    "value_loss",
    "entropy",
    "estimator_loss",
    "approx_kl",
    "clip_fraction",
];

impl IterationStats {
    pub fn tsv_header() -> String {
        CURVE_COLUMNS.join("\t")
    }

    pub fn tsv_row(&self) -> String {
        let u = &self.update;
        format!(
            "{}\t{:.9}\t{:.6}\t{}\t{}\t{:.12}\t{:.12}\t{:.12}\t{}\t{}\t{:.9}\t{:.9}\t{:.9}\t{:.9}\t{:.9}\t{:.6}",
            self.iter,
            self.mean_reward,
            self.success_rate,
            self.episodes,
            self.early_terminations,
            self.theta,
            self.prob_attach,
            self.kappa,
            self.phase,
            self.stochastic_failures,
            u.policy_loss,
            u.value_loss,
            u.entropy,
            u.estimator_loss,
            u.approx_kl,
            u.clip_fraction,
        )
    }
}

/// Derives independent per-environment seeds from a run seed.
pub fn env_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Slot {
    env: ClimbEnv,
    frame: ProprioFrame,
}

/// PPO over a pool of climbing environments following the curriculum.
pub struct Trainer {
    curriculum: Curriculum,
    ppo: PpoConfig,
    agent: Agent,
    opt: PpoOptimizer,
    slots: Vec<Slot>,
    rng: ChaCha8Rng,
    iter: u64,
}

fn estimator_rows(frames: &[&ProprioFrame]) -> Array2<f64> {
    let mut x = Array2::zeros((frames.len(), ESTIMATOR_INPUT_DIM));
    for (i, f) in frames.iter().enumerate() {
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&f.estimator_input()[..]));
    }
    x
}

/// Runs the estimator and builds full observations for a set of frames.
fn observe(agent: &Agent, frames: &[&ProprioFrame]) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let est_in = estimator_rows(frames);
    let est = agent.estimate(est_in.view());
    let mut obs = Array2::zeros((frames.len(), OBS_DIM));
    for (i, f) in frames.iter().enumerate() {
        let e = Estimate::from_slice(est.row(i).as_slice().unwrap());
        obs.row_mut(i).assign(&ndarray::ArrayView1::from(&f.assemble(&e)[..]));
    }
    (est_in, est, obs)
}

impl Trainer {
    pub fn new(cfg: &ExperimentConfig, ablation: Ablation, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let curriculum = Curriculum::new(cfg.curriculum.clone())?.with_overrides(ablation.overrides());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let agent = Agent::for_climbing(&cfg.network, &mut rng);
        let opt = PpoOptimizer::new(&agent, cfg.ppo.learning_rate);
        let sched = curriculum.state(0);
        let slots = (0..cfg.train.num_envs)
            .map(|i| {
                let mut env = ClimbEnv::new(
                    cfg.env.clone(),
                    cfg.model.clone(),
                    cfg.adhesion.clone(),
                    ablation.ideal_adhesion(),
                    env_seed(seed, i),
                )?;
                let frame = env.reset(&sched);
                Ok(Slot { env, frame })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            curriculum,
            ppo: cfg.ppo.clone(),
            agent,
            opt,
            slots,
            rng,
            iter: 0,
        })
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn iteration_index(&self) -> u64 {
        self.iter
    }

    pub fn schedule(&self) -> CurriculumState {
        self.curriculum.state(self.iter)
    }

    /// Collects one rollout under the current schedule and applies one PPO
    /// update.
    pub fn step(&mut self) -> Result<IterationStats> {
        let sched = self.curriculum.state(self.iter);
        for slot in &mut self.slots {
            slot.env.set_schedule(&sched);
        }
        let ne = self.slots.len();
        let tl = self.ppo.rollout_steps;
        let n = ne * tl;
        let mut batch = TrainingBatch {
            obs: Array2::zeros((n, OBS_DIM)),
            actions: Array2::zeros((n, ACTION_DIM)),
            log_probs: vec![0.0; n],
            values: vec![0.0; n],
            returns: vec![0.0; n],
            advantages: vec![0.0; n],
            estimator_inputs: Array2::zeros((n, ESTIMATOR_INPUT_DIM)),
            privileged: Array2::zeros((n, ESTIMATE_DIM)),
        };
        let mut rewards = vec![0.0; n];
        let mut dones = vec![false; n];
        let (mut total, mut episodes, mut early, mut stoch) = (0.0, 0usize, 0usize, 0usize);

        for t in 0..tl {
            let frames: Vec<&ProprioFrame> = self.slots.iter().map(|s| &s.frame).collect();
            let (est_in, est, obs) = observe(&self.agent, &frames);
            let mean = self.agent.mean(obs.view());
            let (actions, logp) = self.agent.sample(&mean, &mut self.rng);
            let values = self.agent.value(obs.view());
            for i in 0..ne {
                let k = t * ne + i;
                batch.obs.row_mut(k).assign(&obs.row(i));
                batch.actions.row_mut(k).assign(&actions.row(i));
                batch.estimator_inputs.row_mut(k).assign(&est_in.row(i));
                batch
                    .privileged
                    .row_mut(k)
                    .assign(&ndarray::ArrayView1::from(&self.slots[i].env.privileged()[..]));
                batch.log_probs[k] = logp[i];
                batch.values[k] = values[i];
            }
            let outcomes: Vec<StepOutcome> = self
                .slots
                .par_iter_mut()
                .enumerate()
                .map(|(i, slot)| {
                    let action: Action = std::array::from_fn(|j| actions[[i, j]]);
                    let conf: [f64; NUM_LEGS] = std::array::from_fn(|f| est[[i, ESTIMATE_DIM - NUM_LEGS + f]]);
                    slot.env.step(&action, &conf)
                })
                .collect();

            let truncated: Vec<usize> = (0..ne).filter(|&i| outcomes[i].truncated).collect();
            let bootstrap = if truncated.is_empty() {
                Vec::new()
            } else {
                let fr: Vec<&ProprioFrame> = truncated.iter().map(|&i| &outcomes[i].frame).collect();
                let (_, _, o) = observe(&self.agent, &fr);
                self.agent.value(o.view()).to_vec()
            };
            let mut boot = bootstrap.into_iter();
            for (i, out) in outcomes.into_iter().enumerate() {
                let k = t * ne + i;
                let r = out.reward.total;
                total += if r.is_finite() { r } else { 0.0 };
                rewards[k] = if r.is_finite() { r * self.ppo.reward_scale } else { 0.0 };
                stoch += out
                    .record
                    .feet
                    .iter()
                    .filter(|f| f.reason == AttachReason::StochasticFail)
                    .count();
                if out.truncated {
                    rewards[k] += self.ppo.gamma * boot.next().unwrap();
                }
                let slot = &mut self.slots[i];
                if out.done() {
                    dones[k] = true;
                    episodes += 1;
                    if out.termination.is_early() {
                        early += 1;
                    }
                    slot.frame = slot.env.reset(&sched);
                } else {
                    slot.frame = out.frame;
                }
            }
        }

        let frames: Vec<&ProprioFrame> = self.slots.iter().map(|s| &s.frame).collect();
        let (_, _, obs) = observe(&self.agent, &frames);
        let last = self.agent.value(obs.view());
        for i in 0..ne {
            let idx: Vec<usize> = (0..tl).map(|t| t * ne + i).collect();
            let r: Vec<f64> = idx.iter().map(|&k| rewards[k]).collect();
            let v: Vec<f64> = idx.iter().map(|&k| batch.values[k]).collect();
            let d: Vec<bool> = idx.iter().map(|&k| dones[k]).collect();
            let (adv, ret) = compute_gae(&r, &v, &d, last[i], self.ppo.gamma, self.ppo.lambda);
            for (j, &k) in idx.iter().enumerate() {
                batch.advantages[k] = adv[j];
                batch.returns[k] = ret[j];
            }
        }
        let update = ppo_update(&mut self.agent, &mut self.opt, &batch, &self.ppo, &mut self.rng)?;
        let stats = IterationStats {
            iter: self.iter,
            mean_reward: total / n as f64,
            success_rate: if episodes > 0 {
                (episodes - early) as f64 / episodes as f64
            } else {
                f64::NAN
            },
            episodes,
            early_terminations: early,
            theta: sched.theta,
            prob_attach: sched.prob_attach,
            kappa: sched.kappa,
            phase: sched.phase.number(),
            stochastic_failures: stoch,
            update,
        };
        self.iter += 1;
        Ok(stats)
    }
}

/// Runs a trained agent deterministically (mean action), feeding its
/// estimator's contact probabilities to the adhesion gate.
#[derive(Clone, Debug)]
pub struct PolicyController {
    pub agent: Agent,
}

impl Controller for PolicyController {
    fn act(&mut self, env: &ClimbEnv) -> (Action, [f64; NUM_LEGS]) {
        let frame = env.frame();
        let (_, est, obs) = observe(&self.agent, &[frame]);
        let mean = self.agent.mean(obs.view());
        let action = std::array::from_fn(|j| mean[[0, j]]);
        let conf = std::array::from_fn(|f| est[[0, ESTIMATE_DIM - NUM_LEGS + f]]);
        (action, conf)
    }
}
