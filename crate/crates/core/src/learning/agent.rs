use std::f64::consts::PI;
use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::nn::{sigmoid, Activation, Mlp};
use crate::error::{Error, Result};
use crate::observation::{ESTIMATE_DIM, ESTIMATOR_INPUT_DIM, OBS_DIM};
use crate::ACTION_DIM;

/// Contact probabilities occupy the tail of the estimator output.
pub const CONTACT_HEAD: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub estimator_hidden: Vec<usize>,
    pub activation: Activation,
    pub init_log_std: f64,
    pub hidden_gain: f64,
    pub actor_output_gain: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            actor_hidden: vec![256, 128, 64],
            critic_hidden: vec![256, 128, 64],
            estimator_hidden: vec![256, 128],
            activation: Activation::Tanh,
            init_log_std: 0.1f64.ln(),
            hidden_gain: 2f64.sqrt(),
            actor_output_gain: 0.01,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, h) in [
            ("network.actor_hidden", &self.actor_hidden),
            ("network.critic_hidden", &self.critic_hidden),
            ("network.estimator_hidden", &self.estimator_hidden),
        ] {
            if h.iter().any(|&n| n == 0) {
                return Err(Error::invalid(name, "layer sizes must be >= 1"));
            }
        }
        if !self.init_log_std.is_finite() {
            return Err(Error::invalid("network.init_log_std", "must be finite"));
        }
        Ok(())
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Diagonal Gaussian over actions with a state-independent deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyDistribution {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut lp = 0.0;
    for k in 0..mean.len() {
        let z = (action[k] - mean[k]) * (-log_std[k]).exp();
        lp += -0.5 * z * z - log_std[k] - 0.5 * (2.0 * PI).ln();
    }
    lp
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
}

/// Actor, critic and (optionally) the concurrent state estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub actor: Mlp,
    pub log_std: Vec<f64>,
    pub critic: Mlp,
    pub estimator: Option<Mlp>,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        spec: &NetworkSpec,
        obs_dim: usize,
        act_dim: usize,
        estimator_dims: Option<(usize, usize)>,
        rng: &mut R,
    ) -> Self {
        let g = spec.hidden_gain;
        let actor = Mlp::orthogonal(
            &layer_sizes(obs_dim, &spec.actor_hidden, act_dim),
            spec.activation,
            g,
            spec.actor_output_gain,
            rng,
        );
        let critic = Mlp::orthogonal(&layer_sizes(obs_dim, &spec.critic_hidden, 1), spec.activation, g, 1.0, rng);
        let estimator = estimator_dims.map(|(i, o)| {
            Mlp::orthogonal(&layer_sizes(i, &spec.estimator_hidden, o), spec.activation, g, 1.0, rng)
        });
        Self {
            actor,
            log_std: vec![spec.init_log_std; act_dim],
            critic,
            estimator,
        }
    }

    pub fn for_climbing<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        Self::new(spec, OBS_DIM, ACTION_DIM, Some((ESTIMATOR_INPUT_DIM, ESTIMATE_DIM)), rng)
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.actor.num_params()
            + self.log_std.len()
            + self.critic.num_params()
            + self.estimator.as_ref().map_or(0, Mlp::num_params)
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|s| s.exp()).collect()
    }

    /// Distribution for a single observation.
    pub fn actor_forward(&self, obs: &[f64]) -> Result<PolicyDistribution> {
        check_input(obs, self.obs_dim(), "actor_forward")?;
        let x = ArrayView2::from_shape((1, obs.len()), obs).unwrap();
        Ok(PolicyDistribution {
            mean: self.actor.forward(x).into_raw_vec_and_offset().0,
            std: self.std(),
        })
    }

    /// Velocity, foot heights and contact probabilities for one estimator
    /// input.
    pub fn estimator_forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let est = self
            .estimator
            .as_ref()
            .ok_or(Error::NonFiniteInput("estimator_forward: no estimator"))?;
        check_input(input, est.input_dim(), "estimator_forward")?;
        let x = ArrayView2::from_shape((1, input.len()), input).unwrap();
        Ok(self.estimate(x).into_raw_vec_and_offset().0)
    }

    pub fn mean(&self, obs: ArrayView2<'_, f64>) -> Array2<f64> {
        self.actor.forward(obs)
    }

    pub fn value(&self, obs: ArrayView2<'_, f64>) -> Array1<f64> {
        self.critic.forward(obs).column(0).to_owned()
    }

    /// Batched estimator output with the contact head squashed to `[0, 1]`.
    pub fn estimate(&self, input: ArrayView2<'_, f64>) -> Array2<f64> {
        let est = self.estimator.as_ref().expect("agent has no estimator");
        let mut out = est.forward(input);
        squash_contacts(&mut out);
        out
    }

    /// Samples one action per row of `mean` and returns their log-densities.
    pub fn sample<R: Rng + ?Sized>(&self, mean: &Array2<f64>, rng: &mut R) -> (Array2<f64>, Vec<f64>) {
        let std = self.std();
        let mut actions = mean.clone();
        for mut row in actions.rows_mut() {
            for (k, a) in row.iter_mut().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                *a += std[k] * e;
            }
        }
        let logp = actions
            .rows()
            .into_iter()
            .zip(mean.rows())
            .map(|(a, m)| gaussian_log_prob(m.as_slice().unwrap(), &self.log_std, a.as_slice().unwrap()))
            .collect();
        (actions, logp)
    }

    fn layout(&self) -> String {
        let est = self
            .estimator
            .as_ref()
            .map_or("none".to_string(), |e| format!("{:?}", e.sizes()));
        format!(
            "actor={:?};critic={:?};estimator={est};act={:?};contact_head={CONTACT_HEAD}",
            self.actor.sizes(),
            self.critic.sizes(),
            self.actor.activation()
        )
    }

    /// Digest of the network layout, embedded in checkpoints.
    pub fn layout_hash(&self) -> [u8; 32] {
        Sha256::digest(self.layout().as_bytes()).into()
    }

    pub fn write_checkpoint<W: Write>(&self, w: &mut W, iteration: u64) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&self.layout_hash())?;
        w.write_all(&iteration.to_le_bytes())?;
        w.write_all(&[self.actor.activation().code()])?;
        let nets: Vec<&Mlp> = [Some(&self.actor), Some(&self.critic), self.estimator.as_ref()]
            .into_iter()
            .flatten()
            .collect();
        w.write_all(&[nets.len() as u8])?;
        for net in nets {
            write_u32(w, net.sizes().len() as u32)?;
            for &s in net.sizes() {
                write_u32(w, s as u32)?;
            }
            write_f64s(w, net.params())?;
        }
        write_f64s(w, &self.log_std)?;
        Ok(())
    }

    /// Reads a checkpoint written by [`Agent::write_checkpoint`], returning the
    /// agent and the iteration it was saved at.
    pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(Self, u64)> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash).map_err(|_| bad("truncated header"))?;
        let mut it = [0u8; 8];
        r.read_exact(&mut it).map_err(|_| bad("truncated header"))?;
        let iteration = u64::from_le_bytes(it);
        let mut b = [0u8; 2];
        r.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
        let act = Activation::from_code(b[0]).ok_or_else(|| bad("unknown activation"))?;
        let count = b[1] as usize;
        if !(2..=3).contains(&count) {
            return Err(bad("unexpected network count"));
        }
        let mut nets = Vec::with_capacity(count);
        for _ in 0..count {
            let n = read_u32(r)? as usize;
            if !(2..=64).contains(&n) {
                return Err(bad("implausible layer count"));
            }
            let sizes = (0..n).map(|_| read_u32(r).map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
            let params = read_f64s(r)?;
            nets.push(Mlp::from_params(&sizes, act, params).map_err(|e| Error::Checkpoint(e.to_string()))?);
        }
        let log_std = read_f64s(r)?;
        let mut nets = nets.into_iter();
        let actor = nets.next().unwrap();
        let critic = nets.next().unwrap();
        let agent = Self {
            log_std,
            estimator: nets.next(),
            actor,
            critic,
        };
        if agent.log_std.len() != agent.act_dim() {
            return Err(bad("log_std length does not match the actor"));
        }
        if agent.layout_hash() != hash {
            return Err(bad("layout hash mismatch"));
        }
        Ok((agent, iteration))
    }
}

pub(crate) fn squash_contacts(out: &mut Array2<f64>) {
    let n = out.ncols();
    for mut row in out.rows_mut() {
        for k in n.saturating_sub(CONTACT_HEAD)..n {
            row[k] = sigmoid(row[k]);
        }
    }
}

fn check_input(x: &[f64], dim: usize, what: &'static str) -> Result<()> {
    if x.len() != dim {
        return Err(Error::LengthMismatch {
            expected: dim,
            actual: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(what));
    }
    Ok(())
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"EPMC";
const CHECKPOINT_VERSION: u32 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Checkpoint("truncated".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    w.write_all(&(xs.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Checkpoint("truncated".into()))?;
    let n = u64::from_le_bytes(b) as usize;
    if n > 1 << 28 {
        return Err(Error::Checkpoint("implausible parameter count".into()));
    }
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(|_| Error::Checkpoint("truncated parameters".into()))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
