//! Reduced-order quadruped: a rigid floating base with massless 3-DOF legs
//! ending in point-mass magnetic feet, compliant ball-joint ankles, PD joint
//! actuation, and penalty contact against a single planar wall.

mod delay;
mod dynamics;
mod kinematics;

pub use delay::{apply_action_delay, ActionDelayBuffer};
pub use dynamics::{contact_force, integrate_orientation, mechanical_energy, step, ContactResult};
pub use kinematics::{forward_kinematics, rpy_rotation, FootKinematics, LegKinematics};

use nalgebra::{SVector, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_LEGS: usize = 4;
pub const NUM_JOINTS: usize = 12;

pub type JointVec = SVector<f64, NUM_JOINTS>;

/// Leg order shared by kinematics, clocks and observations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Leg {
    RearRight = 0,
    FrontRight = 1,
    RearLeft = 2,
    FrontLeft = 3,
}

impl Leg {
    pub const ALL: [Leg; NUM_LEGS] = [Leg::RearRight, Leg::FrontRight, Leg::RearLeft, Leg::FrontLeft];

    pub fn label(self) -> &'static str {
        match self {
            Leg::RearRight => "RR",
            Leg::FrontRight => "FR",
            Leg::RearLeft => "RL",
            Leg::FrontLeft => "FL",
        }
    }

    /// +1 for left legs, -1 for right legs.
    pub fn side(self) -> f64 {
        match self {
            Leg::RearRight | Leg::FrontRight => -1.0,
            Leg::RearLeft | Leg::FrontLeft => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub min: f64,
    pub max: f64,
}

impl JointLimit {
    pub const fn symmetric(v: f64) -> Self {
        Self { min: -v, max: v }
    }

    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.min, self.max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotModel {
    pub body_mass: f64,
    /// Principal inertia of the base, kg m^2.
    pub body_inertia: [f64; 3],
    pub foot_mass: f64,
    /// Hip mount positions in the base frame, in [`Leg`] order.
    pub hip_offsets: [[f64; 3]; NUM_LEGS],
    /// Hip (lateral), thigh and calf segment lengths.
    pub link_lengths: [f64; 3],
    /// Limits for the hip-roll, thigh-pitch and calf-pitch joints.
    pub joint_limits: [JointLimit; 3],
    /// Per-leg nominal hip, thigh and calf angles, shared by all legs.
    pub nominal_leg_config: [f64; 3],
    pub nominal_ankle_rpy: [f64; 3],
    /// Torque limits for hip, thigh and calf, N m.
    pub actuation_limits: [f64; 3],
    /// Reflected rotor inertia per joint.
    pub joint_armature: f64,
    pub ankle_inertia: f64,
    /// Ankle deflection limit about the nominal orientation.
    pub ankle_range: f64,
    /// Gain pair scaled by the randomized PD factors.
    pub base_joint_kp: f64,
    pub base_joint_kd: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            body_mass: 8.0,
            body_inertia: [0.0333, 0.1133, 0.1333],
            foot_mass: 0.2,
            hip_offsets: [
                [-0.18, -0.06, 0.0],
                [0.18, -0.06, 0.0],
                [-0.18, 0.06, 0.0],
                [0.18, 0.06, 0.0],
            ],
            link_lengths: [0.08, 0.21, 0.21],
            joint_limits: [
                JointLimit::symmetric(0.8),
                JointLimit::symmetric(1.6),
                JointLimit::symmetric(2.4),
            ],
            nominal_leg_config: [0.0, 1.0, -1.523599],
            nominal_ankle_rpy: [0.0, 0.523599, 0.0],
            actuation_limits: [25.0, 25.0, 25.0],
            joint_armature: 0.05,
            ankle_inertia: 2e-5,
            ankle_range: 0.8,
            base_joint_kp: 200.0,
            base_joint_kd: 10.0,
        }
    }
}

impl RobotModel {
    pub fn validate(&self) -> Result<()> {
        let masses = [
            ("robot.body_mass", self.body_mass),
            ("robot.foot_mass", self.foot_mass),
            ("robot.joint_armature", self.joint_armature),
            ("robot.ankle_inertia", self.ankle_inertia),
        ];
        for (field, m) in masses {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::invalid(field, "must be finite and > 0"));
            }
        }
        if self.body_inertia.iter().any(|&i| !(i > 0.0)) {
            return Err(Error::invalid("robot.body_inertia", "must be > 0"));
        }
        if self.link_lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::invalid("robot.link_lengths", "must be > 0"));
        }
        for (j, lim) in self.joint_limits.iter().enumerate() {
            if !(lim.min < lim.max) {
                return Err(Error::invalid("robot.joint_limits", format!("joint {j}: min must be < max")));
            }
            let q = self.nominal_leg_config[j];
            if q < lim.min || q > lim.max {
                return Err(Error::invalid(
                    "robot.nominal_leg_config",
                    format!("joint {j} outside its limits"),
                ));
            }
        }
        if self.actuation_limits.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::invalid("robot.actuation_limits", "must be > 0"));
        }
        Ok(())
    }

    pub fn nominal_joint_config(&self) -> JointVec {
        JointVec::from_fn(|i, _| self.nominal_leg_config[i % 3])
    }

    pub fn nominal_ankle(&self) -> Vector3<f64> {
        Vector3::from(self.nominal_ankle_rpy)
    }

    pub fn joint_limit(&self, joint: usize) -> JointLimit {
        self.joint_limits[joint % 3]
    }

    pub fn torque_limit(&self, joint: usize) -> f64 {
        self.actuation_limits[joint % 3]
    }

    pub fn clamp_joints(&self, q: &JointVec) -> JointVec {
        JointVec::from_fn(|i, _| self.joint_limit(i).clamp(q[i]))
    }

    pub fn total_mass(&self) -> f64 {
        self.body_mass + NUM_LEGS as f64 * self.foot_mass
    }

    /// Base height above a flat wall at which every foot of the nominal
    /// stance touches the surface.
    pub fn nominal_height(&self) -> f64 {
        let kin = LegKinematics::new(self);
        let q = self.nominal_joint_config();
        Leg::ALL
            .iter()
            .map(|&leg| -kin.foot_in_base(leg, &q).z)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Axis-aligned region of the wall surface, in wall-plane coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePatch {
    pub u: [f64; 2],
    pub v: [f64; 2],
    pub ferromagnetic: bool,
}

impl SurfacePatch {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.u[0] && u <= self.u[1] && v >= self.v[0] && v <= self.v[1]
    }

    pub fn area(&self) -> f64 {
        (self.u[1] - self.u[0]) * (self.v[1] - self.v[0])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WallEnvironment {
    pub wall_point: Vector3<f64>,
    pub wall_normal: Vector3<f64>,
    pub gravity: Vector3<f64>,
    pub friction: f64,
    /// Friction coefficient of an attached magnet face.
    pub magnet_friction: f64,
    /// Later patches take precedence over earlier ones.
    pub surface_map: Vec<SurfacePatch>,
    pub contact: ContactConfig,
}

impl WallEnvironment {
    /// A single steel patch large enough for a 10 s climb, lying in z = 0.
    pub fn steel_wall(gravity: Vector3<f64>, friction: f64) -> Self {
        Self {
            wall_point: Vector3::zeros(),
            wall_normal: Vector3::z(),
            gravity,
            friction,
            magnet_friction: 0.5,
            surface_map: vec![SurfacePatch {
                u: [-1.0, 8.0],
                v: [-4.0, 4.0],
                ferromagnetic: true,
            }],
            contact: ContactConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.wall_normal.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("wall.normal", "must be unit length"));
        }
        if !(0.3..=0.5).contains(&self.friction) {
            return Err(Error::invalid("wall.friction", "must lie in [0.3, 0.5]"));
        }
        if self.surface_map.iter().any(|p| !(p.area() > 0.0)) {
            return Err(Error::invalid("wall.surface_map", "patches must have positive area"));
        }
        Ok(())
    }

    /// Orthonormal in-plane axes `(u, v)`.
    pub fn plane_axes(&self) -> (Vector3<f64>, Vector3<f64>) {
        let n = self.wall_normal;
        let seed = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let u = (seed - n * seed.dot(&n)).normalize();
        (u, n.cross(&u))
    }

    pub fn plane_coords(&self, p: &Vector3<f64>) -> (f64, f64) {
        let (u, v) = self.plane_axes();
        let d = p - self.wall_point;
        (d.dot(&u), d.dot(&v))
    }

    /// Signed distance above the wall surface.
    pub fn height(&self, p: &Vector3<f64>) -> f64 {
        (p - self.wall_point).dot(&self.wall_normal)
    }

    pub fn is_ferromagnetic(&self, p: &Vector3<f64>) -> bool {
        let (u, v) = self.plane_coords(p);
        self.surface_map
            .iter()
            .rev()
            .find(|patch| patch.contains(u, v))
            .is_some_and(|patch| patch.ferromagnetic)
    }

    /// Largest projection of any patch corner onto the gravity direction,
    /// i.e. the lowest point of the wall.
    pub fn bottom_along_gravity(&self) -> Option<f64> {
        let g = self.gravity.try_normalize(1e-12)?;
        let (u, v) = self.plane_axes();
        self.surface_map
            .iter()
            .flat_map(|p| {
                [
                    (p.u[0], p.v[0]),
                    (p.u[0], p.v[1]),
                    (p.u[1], p.v[0]),
                    (p.u[1], p.v[1]),
                ]
            })
            .map(|(a, b)| (self.wall_point + u * a + v * b).dot(&g))
            .reduce(f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    pub stiffness: f64,
    pub damping: f64,
    pub tangential_stiffness: f64,
    pub tangential_damping: f64,
    /// Radius of the sphere standing in for the base in contact.
    pub base_radius: f64,
    pub tolerance: f64,
    /// Ankle alignment stiffness per newton of normal load.
    pub ankle_alignment_lever: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            stiffness: 3.0e4,
            damping: 300.0,
            tangential_stiffness: 3.0e4,
            tangential_damping: 200.0,
            base_radius: 0.05,
            tolerance: 1e-6,
            ankle_alignment_lever: 0.02,
        }
    }
}

impl ContactConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("contact.stiffness", self.stiffness),
            ("contact.damping", self.damping),
            ("contact.tangential_stiffness", self.tangential_stiffness),
            ("contact.tangential_damping", self.tangential_damping),
            ("contact.base_radius", self.base_radius),
            ("contact.tolerance", self.tolerance),
            ("contact.ankle_alignment_lever", self.ankle_alignment_lever),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActuationConfig {
    pub joint_kp: f64,
    pub joint_kd: f64,
    pub ankle_kp: f64,
    pub ankle_kd: f64,
    pub action_delay: f64,
}

impl Default for ActuationConfig {
    fn default() -> Self {
        Self {
            joint_kp: 0.5,
            joint_kd: 0.15,
            ankle_kp: 0.05,
            ankle_kd: 0.001,
            action_delay: 0.0,
        }
    }
}

pub const MAX_ACTION_DELAY: f64 = 0.008;

impl ActuationConfig {
    /// Per-episode draw from the randomization ranges.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            joint_kp: rng.random_range(0.4..=0.6),
            joint_kd: rng.random_range(0.12..=0.18),
            ankle_kp: rng.random_range(0.04..=0.06),
            ankle_kd: rng.random_range(0.0005..=0.0015),
            action_delay: rng.random_range(0.0..=MAX_ACTION_DELAY),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("actuation.joint_kp", self.joint_kp),
            ("actuation.joint_kd", self.joint_kd),
            ("actuation.ankle_kp", self.ankle_kp),
            ("actuation.ankle_kd", self.ankle_kd),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid(field, "gains must be > 0"));
            }
        }
        if !(0.0..=MAX_ACTION_DELAY).contains(&self.action_delay) {
            return Err(Error::invalid("actuation.action_delay", "must lie in [0, 0.008]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotState {
    pub base_position: Vector3<f64>,
    pub base_orientation: UnitQuaternion<f64>,
    /// World frame.
    pub base_lin_vel: Vector3<f64>,
    /// World frame.
    pub base_ang_vel: Vector3<f64>,
    pub joint_pos: JointVec,
    pub joint_vel: JointVec,
    pub joint_acc: JointVec,
    pub joint_torque: JointVec,
    pub ankle_rpy: [Vector3<f64>; NUM_LEGS],
    pub ankle_rate: [Vector3<f64>; NUM_LEGS],
    pub foot_pos_base: [Vector3<f64>; NUM_LEGS],
    pub foot_pos: [Vector3<f64>; NUM_LEGS],
    pub foot_vel: [Vector3<f64>; NUM_LEGS],
    /// Outward normal of each magnet face, world frame.
    pub face_normal: [Vector3<f64>; NUM_LEGS],
    pub contact: [bool; NUM_LEGS],
    /// Wall reaction on each foot from the last step, excluding adhesion.
    pub contact_force: [Vector3<f64>; NUM_LEGS],
    /// Static-friction anchors of feet in contact.
    pub stick_anchor: [Option<Vector3<f64>>; NUM_LEGS],
    pub time: f64,
}

impl RobotState {
    /// Nominal stance with every foot resting on the wall, base parallel to it.
    pub fn standing(model: &RobotModel, env: &WallEnvironment) -> Self {
        let (u, v) = env.plane_axes();
        let n = env.wall_normal;
        let rot = nalgebra::Rotation3::from_basis_unchecked(&[u, v, n]);
        let orientation = UnitQuaternion::from_rotation_matrix(&rot);
        let position = env.wall_point + n * model.nominal_height();
        Self::at_pose(model, env, position, orientation)
    }

    pub fn at_pose(
        model: &RobotModel,
        env: &WallEnvironment,
        base_position: Vector3<f64>,
        base_orientation: UnitQuaternion<f64>,
    ) -> Self {
        let mut s = Self {
            base_position,
            base_orientation,
            base_lin_vel: Vector3::zeros(),
            base_ang_vel: Vector3::zeros(),
            joint_pos: model.nominal_joint_config(),
            joint_vel: JointVec::zeros(),
            joint_acc: JointVec::zeros(),
            joint_torque: JointVec::zeros(),
            ankle_rpy: [model.nominal_ankle(); NUM_LEGS],
            ankle_rate: [Vector3::zeros(); NUM_LEGS],
            foot_pos_base: [Vector3::zeros(); NUM_LEGS],
            foot_pos: [Vector3::zeros(); NUM_LEGS],
            foot_vel: [Vector3::zeros(); NUM_LEGS],
            face_normal: [Vector3::zeros(); NUM_LEGS],
            contact: [false; NUM_LEGS],
            contact_force: [Vector3::zeros(); NUM_LEGS],
            stick_anchor: [None; NUM_LEGS],
            time: 0.0,
        };
        s.refresh_kinematics(model, env);
        s
    }

    /// Recomputes foot positions, velocities, normals and contact flags from
    /// the generalized state.
    pub fn refresh_kinematics(&mut self, model: &RobotModel, env: &WallEnvironment) {
        let fk = forward_kinematics(
            model,
            &self.base_position,
            &self.base_orientation,
            &self.joint_pos,
            &self.ankle_rpy,
        );
        let kin = LegKinematics::new(model);
        let rot = self.base_orientation.to_rotation_matrix();
        let q = model.clamp_joints(&self.joint_pos);
        for leg in Leg::ALL {
            let i = leg as usize;
            let foot = &fk[i];
            let jac = kin.jacobian(leg, &q);
            let qd = self.joint_vel.fixed_rows::<3>(3 * i).into_owned();
            let r = rot * foot.position_base;
            self.foot_pos_base[i] = foot.position_base;
            self.foot_pos[i] = foot.position;
            self.face_normal[i] = foot.face_normal;
            self.foot_vel[i] = self.base_lin_vel + self.base_ang_vel.cross(&r) + rot * (jac * qd);
            self.contact[i] = env.height(&foot.position) <= env.contact.tolerance;
        }
    }

    pub fn is_finite(&self) -> bool {
        let v3 = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        v3(&self.base_position)
            && self.base_orientation.coords.iter().all(|x| x.is_finite())
            && v3(&self.base_lin_vel)
            && v3(&self.base_ang_vel)
            && self.joint_pos.iter().all(|x| x.is_finite())
            && self.joint_vel.iter().all(|x| x.is_finite())
            && self.joint_acc.iter().all(|x| x.is_finite())
            && self.ankle_rpy.iter().all(v3)
            && self.ankle_rate.iter().all(v3)
            && self.foot_pos.iter().all(v3)
    }

    /// Base linear velocity in the base frame.
    pub fn base_lin_vel_local(&self) -> Vector3<f64> {
        self.base_orientation.inverse_transform_vector(&self.base_lin_vel)
    }

    /// Base angular velocity in the base frame.
    pub fn base_ang_vel_local(&self) -> Vector3<f64> {
        self.base_orientation.inverse_transform_vector(&self.base_ang_vel)
    }

    pub fn body_z(&self) -> Vector3<f64> {
        self.base_orientation * Vector3::z()
    }
}
