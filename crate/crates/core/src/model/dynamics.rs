use nalgebra::{Matrix3, SMatrix, SVector, UnitQuaternion, Vector3};

use super::kinematics::{rpy_rotation, LegKinematics};
use super::{ActuationConfig, ContactConfig, JointVec, Leg, RobotModel, RobotState, WallEnvironment, NUM_LEGS};
use crate::error::{Error, Result};

type GenVec = SVector<f64, 18>;
type GenMat = SMatrix<f64, 18, 18>;
type FootJac = SMatrix<f64, 3, 18>;

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Penalty reaction of the wall on one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactResult {
    pub normal_force: f64,
    pub tangential: Vector3<f64>,
    pub anchor: Option<Vector3<f64>>,
    pub slipping: bool,
}

impl ContactResult {
    pub fn force(&self, normal: &Vector3<f64>) -> Vector3<f64> {
        normal * self.normal_force + self.tangential
    }
}

/// Spring-damper along the wall normal that never pulls, plus a stick
/// spring anchored at first touch whose force is capped at `mu * N`. When the
/// cap binds the anchor is dragged along so that the spring holds exactly
/// the capped force.
pub fn contact_force(
    p: &Vector3<f64>,
    v: &Vector3<f64>,
    anchor: Option<Vector3<f64>>,
    env: &WallEnvironment,
    cfg: &ContactConfig,
    mu: f64,
) -> ContactResult {
    let n = env.wall_normal;
    let depth = -env.height(p);
    if depth <= 0.0 {
        return ContactResult {
            normal_force: 0.0,
            tangential: Vector3::zeros(),
            anchor: None,
            slipping: false,
        };
    }
    let vn = v.dot(&n);
    let normal_force = (cfg.stiffness * depth - cfg.damping * vn).max(0.0);
    let on_plane = p + n * depth;
    let anchor = anchor.unwrap_or(on_plane);
    let offset = on_plane - anchor;
    let offset = offset - n * offset.dot(&n);
    let vt = v - n * vn;
    let demand = -offset * cfg.tangential_stiffness - vt * cfg.tangential_damping;
    let cap = mu * normal_force;
    let magnitude = demand.norm();
    if magnitude <= cap {
        return ContactResult {
            normal_force,
            tangential: demand,
            anchor: Some(anchor),
            slipping: false,
        };
    }
    let tangential = if magnitude > 0.0 { demand * (cap / magnitude) } else { demand };
    ContactResult {
        normal_force,
        tangential,
        anchor: Some(on_plane + tangential / cfg.tangential_stiffness),
        slipping: true,
    }
}

/// Applies a world-frame angular velocity over `dt` and renormalizes.
pub fn integrate_orientation(q: &UnitQuaternion<f64>, omega: &Vector3<f64>, dt: f64) -> UnitQuaternion<f64> {
    let dq = UnitQuaternion::from_scaled_axis(omega * dt);
    UnitQuaternion::new_normalize((dq * q).into_inner())
}

struct LegTerms {
    jac: FootJac,
    bias: Vector3<f64>,
    pos: Vector3<f64>,
    vel: Vector3<f64>,
}

fn leg_terms(kin: &LegKinematics, s: &RobotState, q: &JointVec, leg: Leg) -> LegTerms {
    let i = leg as usize;
    let rot = s.base_orientation.to_rotation_matrix();
    let r = rot * kin.foot_in_base(leg, q);
    let jl = rot.matrix() * kin.jacobian(leg, q);
    let mut jac = FootJac::zeros();
    jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    jac.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&r)));
    jac.fixed_view_mut::<3, 3>(0, 6 + 3 * i).copy_from(&jl);
    let w = s.base_ang_vel;
    let qd = s.joint_vel.fixed_rows::<3>(3 * i).into_owned();
    let rel = jl * qd;
    let bias = w.cross(&w.cross(&r))
        + 2.0 * w.cross(&rel)
        + rot * kin.jacobian_rate_times_qd(leg, q, &s.joint_vel);
    LegTerms {
        jac,
        bias,
        pos: s.base_position + r,
        vel: s.base_lin_vel + w.cross(&r) + rel,
    }
}

fn generalized_velocity(s: &RobotState) -> GenVec {
    let mut nu = GenVec::zeros();
    nu.fixed_rows_mut::<3>(0).copy_from(&s.base_lin_vel);
    nu.fixed_rows_mut::<3>(3).copy_from(&s.base_ang_vel);
    nu.fixed_rows_mut::<12>(6).copy_from(&s.joint_vel);
    nu
}

/// Advances the state by one semi-implicit Euler step of length `dt`.
#[allow(clippy::too_many_arguments)]
pub fn step(
    model: &RobotModel,
    state: &RobotState,
    env: &WallEnvironment,
    act: &ActuationConfig,
    joint_targets: &JointVec,
    adhesion_forces: &[Vector3<f64>; NUM_LEGS],
    dt: f64,
) -> Result<RobotState> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::invalid("dt", "must lie in (0, 0.01]"));
    }
    if adhesion_forces.iter().any(|f| f.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFiniteInput("adhesion_forces"));
    }
    if joint_targets.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput("joint_targets"));
    }
    let cfg = &env.contact;
    let n = env.wall_normal;
    let kin = LegKinematics::new(model);
    let q = model.clamp_joints(&state.joint_pos);
    let rot = state.base_orientation.to_rotation_matrix();

    let kp = act.joint_kp * model.base_joint_kp;
    let kd = act.joint_kd * model.base_joint_kd;
    let tau = JointVec::from_fn(|j, _| {
        let lim = model.torque_limit(j);
        (kp * (joint_targets[j] - q[j]) - kd * state.joint_vel[j]).clamp(-lim, lim)
    });

    let mut mass = GenMat::zeros();
    let mut rhs = GenVec::zeros();
    let inertia_world = rot.matrix() * Matrix3::from_diagonal(&Vector3::from(model.body_inertia)) * rot.matrix().transpose();
    mass.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * model.body_mass));
    mass.fixed_view_mut::<3, 3>(3, 3).copy_from(&inertia_world);
    for j in 0..12 {
        mass[(6 + j, 6 + j)] += model.joint_armature;
    }
    let w = state.base_ang_vel;
    let mut base_force = env.gravity * model.body_mass;

    let base_depth = cfg.base_radius - env.height(&state.base_position);
    if base_depth > 0.0 {
        let vn = state.base_lin_vel.dot(&n);
        let normal = (cfg.stiffness * base_depth - cfg.damping * vn).max(0.0);
        let vt = state.base_lin_vel - n * vn;
        let drag = -vt * cfg.tangential_damping;
        let cap = env.friction * normal;
        let drag = if drag.norm() > cap { drag * (cap / drag.norm()) } else { drag };
        base_force += n * normal + drag;
    }
    rhs.fixed_rows_mut::<3>(0).copy_from(&base_force);
    rhs.fixed_rows_mut::<3>(3).copy_from(&(-w.cross(&(inertia_world * w))));
    rhs.fixed_rows_mut::<12>(6).copy_from(&tau);

    let mut contacts = [ContactResult {
        normal_force: 0.0,
        tangential: Vector3::zeros(),
        anchor: None,
        slipping: false,
    }; NUM_LEGS];
    for leg in Leg::ALL {
        let i = leg as usize;
        let t = leg_terms(&kin, state, &q, leg);
        let mu = if adhesion_forces[i].norm() > 0.0 {
            env.magnet_friction
        } else {
            env.friction
        };
        contacts[i] = contact_force(&t.pos, &t.vel, state.stick_anchor[i], env, cfg, mu);
        let external = contacts[i].force(&n) + adhesion_forces[i] + env.gravity * model.foot_mass
            - t.bias * model.foot_mass;
        mass += t.jac.transpose() * t.jac * model.foot_mass;
        rhs += t.jac.transpose() * external;
    }

    let accel = mass
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or(Error::NonFiniteState { time: state.time })?;
    let nu = generalized_velocity(state) + accel * dt;

    let mut next = state.clone();
    next.base_lin_vel = nu.fixed_rows::<3>(0).into_owned();
    next.base_ang_vel = nu.fixed_rows::<3>(3).into_owned();
    next.base_position += next.base_lin_vel * dt;
    next.base_orientation = integrate_orientation(&state.base_orientation, &next.base_ang_vel, dt);
    let mut qd: JointVec = nu.fixed_rows::<12>(6).into_owned();
    let mut qn = q + qd * dt;
    for j in 0..12 {
        let lim = model.joint_limit(j);
        if qn[j] < lim.min {
            qn[j] = lim.min;
            qd[j] = qd[j].max(0.0);
        } else if qn[j] > lim.max {
            qn[j] = lim.max;
            qd[j] = qd[j].min(0.0);
        }
    }
    next.joint_acc = (qd - state.joint_vel) / dt;
    next.joint_pos = qn;
    next.joint_vel = qd;
    next.joint_torque = tau;

    for leg in Leg::ALL {
        let i = leg as usize;
        next.contact_force[i] = contacts[i].force(&n);
        next.stick_anchor[i] = contacts[i].anchor;
        let (rpy, rate) = ankle_update(model, state, env, act, &kin, &q, leg, contacts[i].normal_force, dt);
        next.ankle_rpy[i] = rpy;
        next.ankle_rate[i] = rate;
    }
    next.time = state.time + dt;
    next.refresh_kinematics(model, env);
    if !next.is_finite() {
        return Err(Error::NonFiniteState { time: next.time });
    }
    Ok(next)
}

/// Compliant ball joint driven towards the nominal orientation by the ankle
/// PD gains and, while loaded, towards flush contact with the wall. Both
/// springs are integrated implicitly.
#[allow(clippy::too_many_arguments)]
fn ankle_update(
    model: &RobotModel,
    state: &RobotState,
    env: &WallEnvironment,
    act: &ActuationConfig,
    kin: &LegKinematics,
    q: &JointVec,
    leg: Leg,
    normal_force: f64,
    dt: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let i = leg as usize;
    let rpy = state.ankle_rpy[i];
    let rate = state.ankle_rate[i];
    let nominal = model.nominal_ankle();
    let k_align = normal_force * env.contact.ankle_alignment_lever;
    let mut align = Vector3::zeros();
    if k_align > 0.0 {
        let foot_rot = state.base_orientation.to_rotation_matrix() * kin.calf_rotation(leg, q) * rpy_rotation(&rpy);
        let face = foot_rot * -Vector3::z();
        let axis = face.cross(&-env.wall_normal);
        let sin = axis.norm();
        if sin > 1e-12 {
            let angle = sin.atan2(face.dot(&-env.wall_normal));
            align = foot_rot.inverse() * (axis * (angle / sin));
        }
    }
    let inertia = model.ankle_inertia;
    let mut out_rpy = rpy;
    let mut out_rate = rate;
    for k in 0..3 {
        let ka = if k < 2 { k_align } else { 0.0 };
        let stiff = act.ankle_kp + ka;
        let damp = act.ankle_kd + ka * 0.02;
        let target = (act.ankle_kp * nominal[k] + ka * (rpy[k] + align[k])) / stiff;
        let v = (rate[k] - dt * stiff * (rpy[k] - target) / inertia)
            / (1.0 + dt * damp / inertia + dt * dt * stiff / inertia);
        let x = (rpy[k] + dt * v).clamp(nominal[k] - model.ankle_range, nominal[k] + model.ankle_range);
        out_rpy[k] = x;
        out_rate[k] = if x == rpy[k] + dt * v { v } else { 0.0 };
    }
    (out_rpy, out_rate)
}

/// Kinetic plus gravitational energy of the base and feet, plus armature
/// kinetic energy. Spring energies are excluded.
pub fn mechanical_energy(model: &RobotModel, state: &RobotState, gravity: &Vector3<f64>) -> f64 {
    let rot = state.base_orientation.to_rotation_matrix();
    let inertia_world = rot.matrix() * Matrix3::from_diagonal(&Vector3::from(model.body_inertia)) * rot.matrix().transpose();
    let w = state.base_ang_vel;
    let mut e = 0.5 * model.body_mass * state.base_lin_vel.norm_squared()
        + 0.5 * w.dot(&(inertia_world * w))
        + 0.5 * model.joint_armature * state.joint_vel.norm_squared()
        - model.body_mass * gravity.dot(&state.base_position);
    for i in 0..NUM_LEGS {
        e += 0.5 * model.foot_mass * state.foot_vel[i].norm_squared() - model.foot_mass * gravity.dot(&state.foot_pos[i]);
    }
    e
}
