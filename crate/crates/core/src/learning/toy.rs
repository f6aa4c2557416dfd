//! A one-dimensional regulation task for exercising PPO without the robot.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::{Agent, NetworkSpec};
use super::ppo::{compute_gae, ppo_update, PpoConfig, PpoOptimizer, TrainingBatch};
use crate::error::Result;

/// `x' = x + dt * u`, reward `-(x^2 + 0.01 u^2)`, `x0 ~ U[-2, 2]`.
#[derive(Clone, Debug)]
pub struct LqrToy {
    pub x: f64,
    pub t: usize,
    pub horizon: usize,
    rng: ChaCha8Rng,
}

impl LqrToy {
    pub const DT: f64 = 0.1;
    pub const U_MAX: f64 = 3.0;

    pub fn new(seed: u64, horizon: usize) -> Self {
        let mut env = Self {
            x: 0.0,
            t: 0,
            horizon,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        env.reset();
        env
    }

    pub fn reset(&mut self) -> f64 {
        self.x = self.rng.random_range(-2.0..=2.0);
        self.t = 0;
        self.x
    }

    /// Returns `(next_obs, reward, truncated)`.
    pub fn step(&mut self, action: f64) -> (f64, f64, bool) {
        let u = action.clamp(-Self::U_MAX, Self::U_MAX);
        let reward = -(self.x * self.x + 0.01 * u * u);
        self.x += Self::DT * u;
        self.t += 1;
        (self.x, reward, self.t >= self.horizon)
    }
}

/// Trains a small agent on [`LqrToy`] and returns the mean per-step reward of
/// each iteration's rollout.
pub fn train_lqr(seed: u64, iterations: usize, num_envs: usize, cfg: &PpoConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = NetworkSpec {
        actor_hidden: vec![32, 32],
        critic_hidden: vec![32, 32],
        init_log_std: 0.0,
        ..Default::default()
    };
    let mut agent = Agent::new(&spec, 1, 1, None, &mut rng);
    let mut opt = PpoOptimizer::new(&agent, cfg.learning_rate);
    let mut envs: Vec<LqrToy> = (0..num_envs)
        .map(|i| LqrToy::new(seed.wrapping_mul(1000).wrapping_add(i as u64), 50))
        .collect();
    let mut obs: Vec<f64> = envs.iter().map(|e| e.x).collect();
    let t_len = cfg.rollout_steps;
    let mut curve = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let n = t_len * num_envs;
        let mut batch = TrainingBatch {
            obs: Array2::zeros((n, 1)),
            actions: Array2::zeros((n, 1)),
            log_probs: vec![0.0; n],
            values: vec![0.0; n],
            ..Default::default()
        };
        let mut rewards = vec![0.0; n];
        let mut dones = vec![false; n];
        let mut total = 0.0;
        for t in 0..t_len {
            let x = Array2::from_shape_vec((num_envs, 1), obs.clone()).unwrap();
            let mean = agent.mean(x.view());
            let (act, logp) = agent.sample(&mean, &mut rng);
            let values = agent.value(x.view());
            for (i, env) in envs.iter_mut().enumerate() {
                let k = t * num_envs + i;
                batch.obs[[k, 0]] = obs[i];
                batch.actions[[k, 0]] = act[[i, 0]];
                batch.log_probs[k] = logp[i];
                batch.values[k] = values[i];
                let (next, r, truncated) = env.step(act[[i, 0]]);
                total += r;
                rewards[k] = r * cfg.reward_scale;
                if truncated {
                    let v = agent.value(Array2::from_elem((1, 1), next).view())[0];
                    rewards[k] += cfg.gamma * v;
                    dones[k] = true;
                    obs[i] = env.reset();
                } else {
                    obs[i] = next;
                }
            }
        }
        let last = agent.value(Array2::from_shape_vec((num_envs, 1), obs.clone()).unwrap().view());
        batch.advantages = vec![0.0; n];
        batch.returns = vec![0.0; n];
        for i in 0..num_envs {
            let idx: Vec<usize> = (0..t_len).map(|t| t * num_envs + i).collect();
            let r: Vec<f64> = idx.iter().map(|&k| rewards[k]).collect();
            let v: Vec<f64> = idx.iter().map(|&k| batch.values[k]).collect();
            let d: Vec<bool> = idx.iter().map(|&k| dones[k]).collect();
            let (adv, ret) = compute_gae(&r, &v, &d, last[i], cfg.gamma, cfg.lambda);
            for (j, &k) in idx.iter().enumerate() {
                batch.advantages[k] = adv[j];
                batch.returns[k] = ret[j];
            }
        }
        ppo_update(&mut agent, &mut opt, &batch, cfg, &mut rng)?;
        curve.push(total / n as f64);
    }
    Ok(curve)
}
