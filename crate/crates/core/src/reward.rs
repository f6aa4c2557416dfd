//! Reward terms and their composition. Positive terms are summed and the sum
//! is multiplied by `exp(-0.2 * penalties)`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::curriculum::CurriculumState;
use crate::model::{NUM_JOINTS, NUM_LEGS};
use crate::ACTION_DIM;

pub const PENALTY_TEMPERATURE: f64 = 0.2;
pub const SWING_HEIGHT: f64 = 0.08;

/// True while leg phase `phi` is inside the swing window `(0, pi/2)`.
pub fn in_swing(phi: f64) -> bool {
    phi > 0.0 && phi < FRAC_PI_2
}

pub fn gait_indicator(phi: f64, contact: bool) -> f64 {
    if in_swing(phi) != contact {
        1.0
    } else {
        -1.0
    }
}

pub fn desired_foot_height(phi: f64) -> f64 {
    if in_swing(phi) {
        SWING_HEIGHT
    } else {
        0.0
    }
}

/// Everything one control step contributes to the reward. Velocities are in
/// the base frame; foot quantities are measured against the wall, with
/// `[x, y]` tangential and `z` along the wall normal.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardInputs {
    /// `(v_x, v_y, omega_z)`.
    pub command: [f64; 3],
    pub base_lin_vel: [f64; 3],
    pub base_ang_vel: [f64; 3],
    pub phases: [f64; NUM_LEGS],
    pub foot_heights: [f64; NUM_LEGS],
    pub foot_vel: [[f64; 3]; NUM_LEGS],
    pub contacts: [bool; NUM_LEGS],
    pub torques: [f64; NUM_JOINTS],
    pub joint_pos: [f64; NUM_JOINTS],
    pub joint_vel: [f64; NUM_JOINTS],
    pub joint_acc: [f64; NUM_JOINTS],
    pub nominal_joint_pos: [f64; NUM_JOINTS],
    pub action: [f64; ACTION_DIM],
    pub prev_action: [f64; ACTION_DIM],
    pub prev_prev_action: [f64; ACTION_DIM],
    pub magnet_actions: [f64; NUM_LEGS],
    pub body_z: [f64; 3],
    /// Posture reference: the wall normal.
    pub reference_z: [f64; 3],
}

impl RewardInputs {
    pub fn is_standing_command(&self) -> bool {
        self.command.iter().all(|&c| c == 0.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub lin_vel: f64,
    pub ang_vel: f64,
    pub standing: f64,
    pub gait: f64,
    pub foot_height: f64,
    pub foot_slip: f64,
    pub foot_clearance: f64,
    pub orientation: f64,
    pub torque: f64,
    pub joint_pos: f64,
    pub joint_speed: f64,
    pub joint_acc: f64,
    pub smoothness1: f64,
    pub smoothness2: f64,
    pub base_motion: f64,
    pub magnet: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub const NAMES: [&'static str; 17] = [
        "lv", "av", "sc", "g", "fh", "fs", "fc", "o", "tau", "jp", "js", "ja", "as1", "as2", "bm", "am",
        "total",
    ];

    pub fn positive_sum(&self) -> f64 {
        self.lin_vel + self.ang_vel + self.gait + self.foot_height + self.standing
    }

    pub fn penalty_sum(&self) -> f64 {
        self.foot_slip
            + self.foot_clearance
            + self.orientation
            + self.torque
            + self.joint_pos
            + self.joint_speed
            + self.joint_acc
            + self.smoothness1
            + self.smoothness2
            + self.base_motion
            + self.magnet
    }

    pub fn compose(&self) -> f64 {
        self.positive_sum() * (-PENALTY_TEMPERATURE * self.penalty_sum()).exp()
    }

    pub fn values(&self) -> [f64; 17] {
        [
            self.lin_vel,
            self.ang_vel,
            self.standing,
            self.gait,
            self.foot_height,
            self.foot_slip,
            self.foot_clearance,
            self.orientation,
            self.torque,
            self.joint_pos,
            self.joint_speed,
            self.joint_acc,
            self.smoothness1,
            self.smoothness2,
            self.base_motion,
            self.magnet,
            self.total,
        ]
    }

    pub fn from_values(v: &[f64; 17]) -> Self {
        Self {
            lin_vel: v[0],
            ang_vel: v[1],
            standing: v[2],
            gait: v[3],
            foot_height: v[4],
            foot_slip: v[5],
            foot_clearance: v[6],
            orientation: v[7],
            torque: v[8],
            joint_pos: v[9],
            joint_speed: v[10],
            joint_acc: v[11],
            smoothness1: v[12],
            smoothness2: v[13],
            base_motion: v[14],
            magnet: v[15],
            total: v[16],
        }
    }
}

fn sq(x: f64) -> f64 {
    x * x
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn angle_between(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    norm_sq(&cross).sqrt().atan2(dot)
}

pub fn compute_rewards(inp: &RewardInputs, sched: &CurriculumState) -> RewardBreakdown {
    let vel_scale = sched.velocity_scale();
    let pen_scale = sched.penalty_scale();
    let standing = inp.is_standing_command();

    let lin_err = sq(inp.command[0] - inp.base_lin_vel[0]) + sq(inp.command[1] - inp.base_lin_vel[1]);
    let yaw_err = sq(inp.command[2] - inp.base_ang_vel[2]);

    let mut standing_sum = 0.0;
    let mut gait_sum = 0.0;
    let mut height_err = 0.0;
    let mut slip = 0.0;
    let mut clearance = 0.0;
    let mut magnet = 0.0;
    for i in 0..NUM_LEGS {
        let c = inp.contacts[i];
        let phi = inp.phases[i];
        let cf = if c { 1.0 } else { 0.0 };
        standing_sum += if c && standing { 1.0 } else { -1.0 };
        gait_sum += gait_indicator(phi, c);
        let dz = sq(desired_foot_height(phi) - inp.foot_heights[i]);
        if in_swing(phi) {
            height_err += dz;
        }
        let [vx, vy, vz] = inp.foot_vel[i];
        slip += cf * (vx * vx + vy * vy);
        clearance += (1.0 - cf) * dz * vz.abs().sqrt();
        magnet += sq(cf - inp.magnet_actions[i]);
    }

    let (smoothness1, smoothness2) = if sched.smoothness_active {
        let first: Vec<f64> = (0..ACTION_DIM).map(|k| inp.action[k] - inp.prev_action[k]).collect();
        let second: Vec<f64> = (0..ACTION_DIM)
            .map(|k| inp.action[k] - 2.0 * inp.prev_action[k] + inp.prev_prev_action[k])
            .collect();
        (2.5 * norm_sq(&first), 1.2 * norm_sq(&second))
    } else {
        (0.0, 0.0)
    };

    let joint_dev: Vec<f64> = (0..NUM_JOINTS)
        .map(|j| inp.joint_pos[j] - inp.nominal_joint_pos[j])
        .collect();
    let alpha_jp = if standing { 3.0 } else { 0.75 };
    let tilt_rate = sq(inp.base_ang_vel[0]) + sq(inp.base_ang_vel[1]);

    let mut r = RewardBreakdown {
        lin_vel: vel_scale * 3.0 * (-5.0 * lin_err).exp(),
        ang_vel: vel_scale * 3.0 * (-5.0 * yaw_err).exp(),
        standing: 0.5 * standing_sum,
        gait: 0.5 * gait_sum,
        foot_height: 0.5 * (-height_err).exp(),
        foot_slip: pen_scale * 0.5 * slip,
        foot_clearance: 140.0 * clearance,
        orientation: 3.0 * angle_between(&inp.body_z, &inp.reference_z),
        torque: pen_scale * 0.003 * norm_sq(&inp.torques),
        joint_pos: alpha_jp * norm_sq(&joint_dev),
        joint_speed: 0.003 * norm_sq(&inp.joint_vel),
        joint_acc: 0.003 * norm_sq(&inp.joint_acc),
        smoothness1,
        smoothness2,
        base_motion: 3.0 * (-0.5 * tilt_rate + 0.2 * inp.base_lin_vel[2].abs()).exp(),
        magnet: 0.15 * magnet,
        total: 0.0,
    };
    r.total = r.compose();
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gait_indicator_cases() {
        assert_eq!(gait_indicator(PI / 4.0, false), 1.0);
        assert_eq!(gait_indicator(PI / 4.0, true), -1.0);
        assert_eq!(gait_indicator(PI, true), 1.0);
        assert_eq!(gait_indicator(PI, false), -1.0);
        assert_eq!(gait_indicator(0.0, true), 1.0);
    }
}
