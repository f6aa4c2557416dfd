use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Vector3;

use crate::env::{Action, ClimbEnv};
use crate::model::{Leg, LegKinematics, NUM_JOINTS, NUM_LEGS};
use crate::observation::leg_phases;

use super::Controller;

/// Open-loop crawl: each foot swings during its quarter of the clock with the
/// magnet released, and pushes back in stance with the magnet on. Foot
/// heights are placed relative to the wall using the true base pose, and
/// gating uses true contact flags.
#[derive(Clone, Debug)]
pub struct ScriptedCrawl {
    pub speed: f64,
    pub step_height: f64,
    /// Press depth below the surface commanded in stance.
    pub press: f64,
    /// Swing fraction after which the magnet is commanded on.
    pub magnet_on_at: f64,
    /// Swing fraction at which the lift starts.
    pub lift_start: f64,
    /// Swing fraction at which the foot is back on the surface.
    pub touchdown: f64,
}

impl Default for ScriptedCrawl {
    fn default() -> Self {
        Self {
            speed: 0.05,
            step_height: 0.04,
            press: 0.01,
            magnet_on_at: 0.6,
            lift_start: 0.1,
            touchdown: 0.75,
        }
    }
}

impl ScriptedCrawl {
    pub fn command(&self) -> [f64; 3] {
        [self.speed, 0.0, 0.0]
    }

    /// Foot offset from its nominal position, base frame, at leg phase `phi`.
    pub fn foot_offset(&self, phi: f64, period: f64) -> Vector3<f64> {
        let stance_time = 0.75 * period;
        let stride = self.speed * stance_time;
        if phi > 0.0 && phi < FRAC_PI_2 {
            let s = phi / FRAC_PI_2;
            if s < self.lift_start {
                Vector3::new(-0.5 * stride, 0.0, 0.0)
            } else if s < self.touchdown {
                let u = (s - self.lift_start) / (self.touchdown - self.lift_start);
                let x = -0.5 * stride + stride * (0.5 - 0.5 * (PI * u).cos());
                Vector3::new(x, 0.0, self.step_height * (PI * u).sin())
            } else {
                Vector3::new(0.5 * stride, 0.0, -self.press)
            }
        } else {
            let into = (phi - FRAC_PI_2).rem_euclid(TAU) / (TAU - FRAC_PI_2);
            Vector3::new(0.5 * stride - stride * into, 0.0, -self.press)
        }
    }

    pub fn magnet_on(&self, phi: f64) -> bool {
        !(phi > 0.0 && phi < FRAC_PI_2) || phi / FRAC_PI_2 >= self.magnet_on_at
    }
}

impl Controller for ScriptedCrawl {
    fn reset(&mut self, env: &mut ClimbEnv) {
        env.set_command(self.command());
    }

    fn act(&mut self, env: &ClimbEnv) -> (Action, [f64; NUM_LEGS]) {
        let model = &env.model;
        let kin = LegKinematics::new(model);
        let nominal = model.nominal_joint_config();
        let state = env.state();
        let wall = env.wall();
        let rot = state.base_orientation;
        let n = wall.wall_normal;
        let t = env.time() + env.cfg.control_dt();
        let phases = leg_phases(t, crate::observation::GAIT_PERIOD);
        let mut action = [0.0; crate::ACTION_DIM];
        for leg in Leg::ALL {
            let i = leg as usize;
            let hip = Vector3::from(model.hip_offsets[i]);
            let home = kin.foot_in_base(leg, &nominal) - hip;
            let offset = self.foot_offset(phases[i], crate::observation::GAIT_PERIOD);
            let planar = home + Vector3::new(offset.x, offset.y, 0.0);
            let world = state.base_position + rot * (hip + planar);
            let world = world + n * (offset.z - wall.height(&world));
            let target = rot.inverse_transform_vector(&(world - state.base_position)) - hip;
            let q = kin.inverse(leg, &target);
            for k in 0..3 {
                action[3 * i + k] = (q[k] - nominal[3 * i + k]) / env.cfg.action_scale;
            }
            action[NUM_JOINTS + i] = if self.magnet_on(phases[i]) { 1.0 } else { 0.0 };
        }
        let contact = state.contact.map(|c| if c { 1.0 } else { 0.0 });
        (action, contact)
    }
}
