//! Policy observations: noisy proprioception passed through a first-order
//! low-pass filter, estimator outputs, and an exact gait clock.
//!
//! Layout of the 85 entries:
//!
//! | range  | content                                   |
//! |--------|-------------------------------------------|
//! | 0..12  | joint positions                           |
//! | 12..24 | joint velocities                          |
//! | 24..48 | joint targets at t-1 then t-2             |
//! | 48..51 | gravity direction in the base frame       |
//! | 51..54 | base angular velocity, base frame         |
//! | 54..66 | foot positions relative to the base       |
//! | 66..69 | estimated base linear velocity            |
//! | 69..73 | estimated foot heights                    |
//! | 73..77 | estimated contact probabilities           |
//! | 77..85 | clock `(sin, cos)` per leg                 |

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{JointVec, RobotState, NUM_LEGS};

pub const GAIT_PERIOD: f64 = 1.2;
pub const LOW_PASS_ALPHA: f64 = 0.35;
pub const PROPRIO_DIM: usize = 66;
pub const ESTIMATE_DIM: usize = 11;
pub const CLOCK_DIM: usize = 2 * NUM_LEGS;
pub const OBS_DIM: usize = PROPRIO_DIM + ESTIMATE_DIM + CLOCK_DIM;
pub const ESTIMATOR_INPUT_DIM: usize = PROPRIO_DIM + CLOCK_DIM;
pub const ESTIMATE_OFFSET: usize = PROPRIO_DIM;
pub const CLOCK_OFFSET: usize = PROPRIO_DIM + ESTIMATE_DIM;

/// Leg phases at time `t`, wrapped to `[0, 2 pi)`.
pub fn leg_phases(t: f64, period: f64) -> [f64; NUM_LEGS] {
    std::array::from_fn(|i| (TAU * t / period + FRAC_PI_2 * (i + 1) as f64).rem_euclid(TAU))
}

pub fn clock_encode(t: f64, period: f64) -> [f64; CLOCK_DIM] {
    let phases = leg_phases(t, period);
    let mut out = [0.0; CLOCK_DIM];
    for (i, phi) in phases.iter().enumerate() {
        let (s, c) = phi.sin_cos();
        out[2 * i] = s;
        out[2 * i + 1] = c;
    }
    out
}

pub fn low_pass(old: &[f64], new: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if old.len() != new.len() {
        return Err(Error::LengthMismatch {
            expected: old.len(),
            actual: new.len(),
        });
    }
    Ok(old.iter().zip(new).map(|(o, n)| (1.0 - alpha) * o + alpha * n).collect())
}

/// Half-widths of the uniform noise on each raw channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub orientation: f64,
    pub orientation_bias: f64,
    pub joint_pos: f64,
    pub ang_vel: f64,
    pub joint_vel: f64,
    pub target_history: f64,
    pub joint_vel_history: f64,
    pub foot_pos: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            orientation: 0.05,
            orientation_bias: 0.05,
            joint_pos: 0.1,
            ang_vel: 0.1,
            joint_vel: 0.5,
            target_history: 0.1,
            joint_vel_history: 0.5,
            foot_pos: 0.015,
        }
    }
}

impl NoiseModel {
    pub fn zero() -> Self {
        Self {
            orientation: 0.0,
            orientation_bias: 0.0,
            joint_pos: 0.0,
            ang_vel: 0.0,
            joint_vel: 0.0,
            target_history: 0.0,
            joint_vel_history: 0.0,
            foot_pos: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.orientation,
            self.orientation_bias,
            self.joint_pos,
            self.ang_vel,
            self.joint_vel,
            self.target_history,
            self.joint_vel_history,
            self.foot_pos,
        ];
        if all.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::invalid("noise", "bounds must be finite and >= 0"));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> f64 {
    if bound > 0.0 {
        rng.random_range(-bound..=bound)
    } else {
        0.0
    }
}

/// Estimator predictions fed back into the observation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Estimate {
    pub lin_vel: [f64; 3],
    pub foot_heights: [f64; NUM_LEGS],
    pub contact_probs: [f64; NUM_LEGS],
}

impl Estimate {
    pub fn to_array(&self) -> [f64; ESTIMATE_DIM] {
        let mut out = [0.0; ESTIMATE_DIM];
        out[..3].copy_from_slice(&self.lin_vel);
        out[3..7].copy_from_slice(&self.foot_heights);
        out[7..].copy_from_slice(&self.contact_probs);
        out
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let mut e = Self::default();
        e.lin_vel.copy_from_slice(&v[..3]);
        e.foot_heights.copy_from_slice(&v[3..7]);
        for (p, &x) in e.contact_probs.iter_mut().zip(&v[7..11]) {
            *p = x.clamp(0.0, 1.0);
        }
        e
    }
}

/// Filtered proprioception and clock for one control step, before the
/// estimator has run.
#[derive(Clone, Debug, PartialEq)]
pub struct ProprioFrame {
    pub proprio: [f64; PROPRIO_DIM],
    pub clock: [f64; CLOCK_DIM],
}

impl ProprioFrame {
    pub fn estimator_input(&self) -> [f64; ESTIMATOR_INPUT_DIM] {
        let mut out = [0.0; ESTIMATOR_INPUT_DIM];
        out[..PROPRIO_DIM].copy_from_slice(&self.proprio);
        out[PROPRIO_DIM..].copy_from_slice(&self.clock);
        out
    }

    pub fn assemble(&self, estimate: &Estimate) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        out[..PROPRIO_DIM].copy_from_slice(&self.proprio);
        out[ESTIMATE_OFFSET..CLOCK_OFFSET].copy_from_slice(&estimate.to_array());
        out[CLOCK_OFFSET..].copy_from_slice(&self.clock);
        out
    }
}

/// Unfiltered, noise-free proprioceptive channels.
pub fn raw_proprio(
    state: &RobotState,
    gravity: &Vector3<f64>,
    target_history: &[JointVec; 2],
) -> [f64; PROPRIO_DIM] {
    proprio_with(state, &state.base_orientation, gravity, target_history)
}

fn proprio_with(
    state: &RobotState,
    orientation: &UnitQuaternion<f64>,
    gravity: &Vector3<f64>,
    target_history: &[JointVec; 2],
) -> [f64; PROPRIO_DIM] {
    let mut out = [0.0; PROPRIO_DIM];
    out[..12].copy_from_slice(state.joint_pos.as_slice());
    out[12..24].copy_from_slice(state.joint_vel.as_slice());
    out[24..36].copy_from_slice(target_history[0].as_slice());
    out[36..48].copy_from_slice(target_history[1].as_slice());
    let g = gravity.try_normalize(1e-12).unwrap_or_else(|| -Vector3::z());
    out[48..51].copy_from_slice(orientation.inverse_transform_vector(&g).as_slice());
    out[51..54].copy_from_slice(state.base_ang_vel_local().as_slice());
    for i in 0..NUM_LEGS {
        out[54 + 3 * i..57 + 3 * i].copy_from_slice(state.foot_pos_base[i].as_slice());
    }
    out
}

/// Per-environment noise bias and filter memory.
#[derive(Clone, Debug)]
pub struct ObservationPipeline {
    pub noise: NoiseModel,
    pub alpha: f64,
    pub period: f64,
    bias: [f64; 2],
    filtered: Option<[f64; PROPRIO_DIM]>,
}

impl ObservationPipeline {
    pub fn new(noise: NoiseModel) -> Self {
        Self {
            noise,
            alpha: LOW_PASS_ALPHA,
            period: GAIT_PERIOD,
            bias: [0.0; 2],
            filtered: None,
        }
    }

    /// Draws the episode's orientation bias and clears the filter.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let b = self.noise.orientation_bias;
        self.bias = [uniform(rng, b), uniform(rng, b)];
        self.filtered = None;
    }

    pub fn orientation_bias(&self) -> [f64; 2] {
        self.bias
    }

    /// Noisy raw channels, before filtering.
    pub fn noisy_proprio<R: Rng + ?Sized>(
        &self,
        state: &RobotState,
        gravity: &Vector3<f64>,
        target_history: &[JointVec; 2],
        rng: &mut R,
    ) -> [f64; PROPRIO_DIM] {
        let n = &self.noise;
        let roll = self.bias[0] + uniform(rng, n.orientation);
        let pitch = self.bias[1] + uniform(rng, n.orientation);
        let perturbed = state.base_orientation * UnitQuaternion::from_euler_angles(roll, pitch, 0.0);
        let mut out = proprio_with(state, &perturbed, gravity, target_history);
        let bounds = |k: usize| match k {
            0..12 => n.joint_pos,
            12..24 => n.joint_vel,
            24..48 => n.target_history,
            48..51 => 0.0,
            51..54 => n.ang_vel,
            _ => n.foot_pos,
        };
        for (k, v) in out.iter_mut().enumerate() {
            *v += uniform(rng, bounds(k));
        }
        out
    }

    pub fn proprio<R: Rng + ?Sized>(
        &mut self,
        state: &RobotState,
        gravity: &Vector3<f64>,
        target_history: &[JointVec; 2],
        t: f64,
        rng: &mut R,
    ) -> ProprioFrame {
        let raw = self.noisy_proprio(state, gravity, target_history, rng);
        let proprio = match self.filtered {
            None => raw,
            Some(old) => std::array::from_fn(|k| (1.0 - self.alpha) * old[k] + self.alpha * raw[k]),
        };
        self.filtered = Some(proprio);
        ProprioFrame {
            proprio,
            clock: clock_encode(t, self.period),
        }
    }

    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        state: &RobotState,
        gravity: &Vector3<f64>,
        target_history: &[JointVec; 2],
        estimate: &Estimate,
        t: f64,
        rng: &mut R,
    ) -> [f64; OBS_DIM] {
        self.proprio(state, gravity, target_history, t, rng).assemble(estimate)
    }
}
