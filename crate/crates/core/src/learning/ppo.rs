use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::agent::{gaussian_entropy, gaussian_log_prob, squash_contacts, Agent, CONTACT_HEAD};
use super::nn::{Adam, Mlp};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    /// Control steps collected per environment per iteration.
    pub rollout_steps: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub estimator_weight: f64,
    /// Gradient norm cap, applied per network.
    pub max_grad_norm: f64,
    /// Multiplier on environment rewards before advantage estimation.
    pub reward_scale: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            learning_rate: 3e-4,
            rollout_steps: 100,
            epochs: 4,
            minibatches: 4,
            entropy_coef: 0.005,
            value_coef: 1.0,
            estimator_weight: 1.0,
            max_grad_norm: 1.0,
            reward_scale: 0.1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::invalid("ppo.clip", "must lie in (0, 1)"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid("ppo.gamma", "must lie in (0, 1]"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::invalid("ppo.lambda", "must lie in (0, 1]"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("ppo.learning_rate", "must be > 0"));
        }
        for (name, n) in [
            ("ppo.rollout_steps", self.rollout_steps),
            ("ppo.epochs", self.epochs),
            ("ppo.minibatches", self.minibatches),
        ] {
            if n == 0 {
                return Err(Error::invalid(name, "must be >= 1"));
            }
        }
        for (name, v) in [
            ("ppo.entropy_coef", self.entropy_coef),
            ("ppo.value_coef", self.value_coef),
            ("ppo.estimator_weight", self.estimator_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::invalid("ppo.max_grad_norm", "must be > 0"));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return Err(Error::invalid("ppo.reward_scale", "must be > 0"));
        }
        Ok(())
    }
}

/// One rollout flattened sample-major. Estimator rows may be empty when the
/// agent has no estimator.
#[derive(Clone, Debug, Default)]
pub struct TrainingBatch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
    pub estimator_inputs: Array2<f64>,
    pub privileged: Array2<f64>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for (len, name) in [
            (self.actions.nrows(), "actions"),
            (self.log_probs.len(), "log_probs"),
            (self.values.len(), "values"),
            (self.returns.len(), "returns"),
            (self.advantages.len(), "advantages"),
        ] {
            if len != n {
                return Err(Error::invalid(format!("batch.{name}"), format!("expected {n} rows, got {len}")));
            }
        }
        if self.estimator_inputs.nrows() != self.privileged.nrows() {
            return Err(Error::invalid("batch.privileged", "row count differs from estimator inputs"));
        }
        if n == 0 {
            return Err(Error::invalid("batch", "empty"));
        }
        Ok(())
    }
}

/// Generalized advantage estimates for one environment's time series.
/// `dones[t]` means the episode ended after step `t` and nothing is
/// bootstrapped across it; time-limit truncations should fold the bootstrap
/// value into the reward before calling this.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        gae = delta + gamma * lambda * live * gae;
        adv[t] = gae;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Zero mean, unit variance.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    for a in adv.iter_mut() {
        *a = (*a - mean) * scale;
    }
}

/// Clipped-surrogate objective and its gradient for one minibatch.
#[derive(Clone, Debug)]
pub struct Surrogate {
    /// `-mean(min(r A, clip(r) A)) - entropy_coef * entropy`.
    pub loss: f64,
    pub grad_actor: Vec<f64>,
    pub grad_log_std: Vec<f64>,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub max_ratio_deviation: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn surrogate_loss_and_grad(
    actor: &Mlp,
    log_std: &[f64],
    obs: ArrayView2<'_, f64>,
    actions: ArrayView2<'_, f64>,
    old_log_probs: &[f64],
    advantages: &[f64],
    clip: f64,
    entropy_coef: f64,
) -> Surrogate {
    let n = obs.nrows();
    let inv_n = 1.0 / n as f64;
    let cache = actor.forward_cached(obs);
    let mean = cache.output();
    let inv_var: Vec<f64> = log_std.iter().map(|s| (-2.0 * s).exp()).collect();
    let mut d_mean = Array2::zeros(mean.raw_dim());
    let mut grad_log_std = vec![0.0; log_std.len()];
    let (mut obj, mut clipped, mut kl, mut dev) = (0.0, 0usize, 0.0, 0.0f64);
    for j in 0..n {
        let m = mean.row(j);
        let a = actions.row(j);
        let lp = gaussian_log_prob(m.as_slice().unwrap(), log_std, a.as_slice().unwrap());
        let log_ratio = lp - old_log_probs[j];
        let r = log_ratio.exp();
        let adv = advantages[j];
        let rc = r.clamp(1.0 - clip, 1.0 + clip);
        let (s1, s2) = (r * adv, rc * adv);
        obj += s1.min(s2);
        dev = dev.max((r - 1.0).abs());
        kl += (r - 1.0) - log_ratio;
        let in_range = r == rc;
        if !in_range {
            clipped += 1;
        }
        let d_r = if s1 <= s2 || in_range { -adv * inv_n } else { 0.0 };
        if d_r != 0.0 {
            for k in 0..log_std.len() {
                let diff = a[k] - m[k];
                d_mean[[j, k]] = d_r * r * diff * inv_var[k];
                grad_log_std[k] += d_r * r * (diff * diff * inv_var[k] - 1.0);
            }
        }
    }
    let entropy = gaussian_entropy(log_std);
    for g in grad_log_std.iter_mut() {
        *g -= entropy_coef;
    }
    let mut grad_actor = vec![0.0; actor.num_params()];
    actor.backward(&cache, d_mean.view(), &mut grad_actor);
    Surrogate {
        loss: -obj * inv_n - entropy_coef * entropy,
        grad_actor,
        grad_log_std,
        entropy,
        clip_fraction: clipped as f64 * inv_n,
        approx_kl: kl * inv_n,
        max_ratio_deviation: dev,
    }
}

/// `value_coef * mean((V - R)^2)` and its gradient.
pub fn value_loss_and_grad(critic: &Mlp, obs: ArrayView2<'_, f64>, returns: &[f64], value_coef: f64) -> (f64, Vec<f64>) {
    let n = obs.nrows() as f64;
    let cache = critic.forward_cached(obs);
    let v = cache.output();
    let mut d = Array2::zeros(v.raw_dim());
    let mut loss = 0.0;
    for j in 0..v.nrows() {
        let e = v[[j, 0]] - returns[j];
        loss += e * e;
        d[[j, 0]] = 2.0 * value_coef * e / n;
    }
    let mut grad = vec![0.0; critic.num_params()];
    critic.backward(&cache, d.view(), &mut grad);
    (value_coef * loss / n, grad)
}

/// Mean squared error of the estimator against privileged labels, with the
/// contact head compared after the sigmoid. Returns the unweighted loss and
/// the gradient scaled by `weight`.
pub fn estimator_loss_and_grad(
    estimator: &Mlp,
    inputs: ArrayView2<'_, f64>,
    labels: ArrayView2<'_, f64>,
    weight: f64,
) -> (f64, Vec<f64>) {
    let cache = estimator.forward_cached(inputs);
    let mut y = cache.output().clone();
    squash_contacts(&mut y);
    let count = (y.nrows() * y.ncols()) as f64;
    let ncols = y.ncols();
    let mut d = Array2::zeros(y.raw_dim());
    let mut loss = 0.0;
    for ((j, k), &yk) in y.indexed_iter() {
        let e = yk - labels[[j, k]];
        loss += e * e;
        let mut g = 2.0 * weight * e / count;
        if k + CONTACT_HEAD >= ncols {
            g *= yk * (1.0 - yk);
        }
        d[[j, k]] = g;
    }
    let mut grad = vec![0.0; estimator.num_params()];
    estimator.backward(&cache, d.view(), &mut grad);
    (loss / count, grad)
}

/// Estimator loss over a whole dataset.
pub fn estimator_loss(estimator: &Mlp, inputs: ArrayView2<'_, f64>, labels: ArrayView2<'_, f64>) -> f64 {
    let mut y = estimator.forward(inputs);
    squash_contacts(&mut y);
    let count = (y.nrows() * y.ncols()) as f64;
    y.iter().zip(labels.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / count
}

/// Supervised estimator fitting with minibatches taken in fixed order.
/// Returns the full-dataset loss after each epoch.
pub fn fit_estimator(
    estimator: &mut Mlp,
    adam: &mut Adam,
    inputs: ArrayView2<'_, f64>,
    labels: ArrayView2<'_, f64>,
    epochs: usize,
    minibatch: usize,
) -> Vec<f64> {
    let n = inputs.nrows();
    let minibatch = minibatch.clamp(1, n.max(1));
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut start = 0;
        while start < n {
            let end = (start + minibatch).min(n);
            let (_, grad) = estimator_loss_and_grad(
                estimator,
                inputs.slice(ndarray::s![start..end, ..]),
                labels.slice(ndarray::s![start..end, ..]),
                1.0,
            );
            adam.step(estimator.params_mut(), &grad);
            start = end;
        }
        losses.push(estimator_loss(estimator, inputs, labels));
    }
    losses
}

/// Adam state for every trainable part of an [`Agent`].
#[derive(Clone, Debug)]
pub struct PpoOptimizer {
    actor: Adam,
    log_std: Adam,
    critic: Adam,
    estimator: Option<Adam>,
}

impl PpoOptimizer {
    pub fn new(agent: &Agent, lr: f64) -> Self {
        Self {
            actor: Adam::new(agent.actor.num_params(), lr),
            log_std: Adam::new(agent.log_std.len(), lr),
            critic: Adam::new(agent.critic.num_params(), lr),
            estimator: agent.estimator.as_ref().map(|e| Adam::new(e.num_params(), lr)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub estimator_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Largest `|ratio - 1|` over the batch before any gradient step.
    pub initial_ratio_deviation: f64,
}

fn clip_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

fn rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

/// One PPO update: `epochs` passes over shuffled minibatches, each step
/// descending the clipped surrogate, the value loss and the estimator
/// regression loss.
pub fn ppo_update<R: Rng + ?Sized>(
    agent: &mut Agent,
    opt: &mut PpoOptimizer,
    batch: &TrainingBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    batch.validate()?;
    let n = batch.len();
    let mut adv = batch.advantages.clone();
    normalize_advantages(&mut adv);

    let initial = {
        let mean = agent.mean(batch.obs.view());
        (0..n)
            .map(|j| {
                let lp = gaussian_log_prob(
                    mean.row(j).as_slice().unwrap(),
                    &agent.log_std,
                    batch.actions.row(j).as_slice().unwrap(),
                );
                ((lp - batch.log_probs[j]).exp() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    };

    let with_estimator = agent.estimator.is_some() && batch.estimator_inputs.nrows() == n;
    let mb = n.div_ceil(cfg.minibatches.min(n));
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats {
        initial_ratio_deviation: initial,
        ..Default::default()
    };
    let mut steps = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for idx in order.chunks(mb) {
            let obs = rows(&batch.obs, idx);
            let act = rows(&batch.actions, idx);
            let old: Vec<f64> = idx.iter().map(|&j| batch.log_probs[j]).collect();
            let a: Vec<f64> = idx.iter().map(|&j| adv[j]).collect();
            let ret: Vec<f64> = idx.iter().map(|&j| batch.returns[j]).collect();

            let mut s = surrogate_loss_and_grad(
                &agent.actor,
                &agent.log_std,
                obs.view(),
                act.view(),
                &old,
                &a,
                cfg.clip,
                cfg.entropy_coef,
            );
            if !s.loss.is_finite() {
                return Err(Error::NonFiniteLoss("policy"));
            }
            let (vloss, mut vgrad) = value_loss_and_grad(&agent.critic, obs.view(), &ret, cfg.value_coef);
            if !vloss.is_finite() {
                return Err(Error::NonFiniteLoss("value"));
            }
            let est = if with_estimator {
                let e = agent.estimator.as_ref().unwrap();
                let (l, g) = estimator_loss_and_grad(
                    e,
                    rows(&batch.estimator_inputs, idx).view(),
                    rows(&batch.privileged, idx).view(),
                    cfg.estimator_weight,
                );
                if !l.is_finite() {
                    return Err(Error::NonFiniteLoss("estimator"));
                }
                Some((l, g))
            } else {
                None
            };

            let mut policy_grad = std::mem::take(&mut s.grad_actor);
            policy_grad.extend_from_slice(&s.grad_log_std);
            let pn = clip_norm(&mut policy_grad, cfg.max_grad_norm);
            let vn = clip_norm(&mut vgrad, cfg.max_grad_norm);
            if !(pn.is_finite() && vn.is_finite()) {
                return Err(Error::NonFiniteLoss("gradient"));
            }
            let na = agent.actor.num_params();
            opt.actor.step(agent.actor.params_mut(), &policy_grad[..na]);
            opt.log_std.step(&mut agent.log_std, &policy_grad[na..]);
            opt.critic.step(agent.critic.params_mut(), &vgrad);
            if let (Some((l, mut g)), Some(e), Some(eo)) = (est, agent.estimator.as_mut(), opt.estimator.as_mut()) {
                if !clip_norm(&mut g, cfg.max_grad_norm).is_finite() {
                    return Err(Error::NonFiniteLoss("estimator gradient"));
                }
                eo.step(e.params_mut(), &g);
                stats.estimator_loss += l;
            }

            stats.policy_loss += s.loss;
            stats.value_loss += vloss;
            stats.entropy += s.entropy;
            stats.approx_kl += s.approx_kl;
            stats.clip_fraction += s.clip_fraction;
            steps += 1;
        }
    }
    let k = 1.0 / steps.max(1) as f64;
    stats.policy_loss *= k;
    stats.value_loss *= k;
    stats.entropy *= k;
    stats.estimator_loss *= k;
    stats.approx_kl *= k;
    stats.clip_fraction *= k;
    Ok(stats)
}
