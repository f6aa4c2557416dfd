//! One climbing episode: domain randomization, the control loop around the
//! physics and adhesion stack, rewards, and termination.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adhesion::{AdhesionConfig, AdhesionModel, AttachDecision, AttachReason, EpmFoot, FootAdhesionInput};
use crate::curriculum::CurriculumState;
use crate::error::{Error, Result};
use crate::log::{FootRecord, StepRecord, Termination};
use crate::model::{
    apply_action_delay, step, ActionDelayBuffer, ActuationConfig, ContactConfig, JointVec, RobotModel, RobotState, SurfacePatch,
    WallEnvironment, NUM_JOINTS, NUM_LEGS,
};
use crate::observation::{leg_phases, NoiseModel, ObservationPipeline, ProprioFrame, ESTIMATE_DIM};
use crate::reward::{compute_rewards, in_swing, RewardBreakdown, RewardInputs};
use crate::ACTION_DIM;

pub type Action = [f64; ACTION_DIM];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub physics_dt: f64,
    pub decimation: usize,
    pub episode_length: f64,
    /// Continuous all-feet attachment longer than this ends the episode.
    pub frozen_timeout: f64,
    /// Distance below the wall's lowest edge, along gravity, counted as a fall.
    pub fall_margin: f64,
    pub max_wall_distance: f64,
    /// Half-ranges of the sampled `(v_x, v_y, omega_z)` command.
    pub command_range: [f64; 3],
    pub action_scale: f64,
    pub action_clip: f64,
    pub randomize: bool,
    pub friction: f64,
    pub noise: NoiseModel,
    /// Zero the face-tilt contribution to the alignment gap.
    pub perfect_alignment: bool,
    /// Feed true contact flags to the gate instead of estimates.
    pub oracle_contact: bool,
    pub initial_joint_noise: f64,
    /// Wall patches; empty means one large steel patch.
    pub surface_map: Vec<SurfacePatch>,
    pub contact: ContactConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            physics_dt: 0.002,
            decimation: 5,
            episode_length: 10.0,
            frozen_timeout: 5.0,
            fall_margin: 0.5,
            max_wall_distance: 0.6,
            command_range: [0.5, 0.3, 0.5],
            action_scale: 0.25,
            action_clip: 4.0,
            randomize: true,
            friction: 0.4,
            noise: NoiseModel::default(),
            perfect_alignment: false,
            oracle_contact: false,
            initial_joint_noise: 0.05,
            surface_map: Vec::new(),
            contact: ContactConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn control_dt(&self) -> f64 {
        self.physics_dt * self.decimation as f64
    }

    pub fn max_steps(&self) -> usize {
        (self.episode_length / self.control_dt()).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.physics_dt > 0.0 && self.physics_dt <= 0.01) {
            return Err(Error::invalid("env.physics_dt", "must lie in (0, 0.01]"));
        }
        if self.decimation == 0 {
            return Err(Error::invalid("env.decimation", "must be >= 1"));
        }
        if !(self.episode_length > 0.0) {
            return Err(Error::invalid("env.episode_length", "must be > 0"));
        }
        if self.command_range.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::invalid("env.command_range", "must be finite and >= 0"));
        }
        if !(0.3..=0.5).contains(&self.friction) {
            return Err(Error::invalid("env.friction", "must lie in [0.3, 0.5]"));
        }
        self.contact.validate()?;
        self.noise.validate()
    }
}

/// Ground-truth targets for the estimator, in estimate order.
pub type Privileged = [f64; ESTIMATE_DIM];

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub frame: ProprioFrame,
    pub privileged: Privileged,
    pub reward: RewardBreakdown,
    pub record: StepRecord,
    pub termination: Termination,
    /// Episode reached its horizon without an early termination.
    pub truncated: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.truncated || self.termination.is_early()
    }
}

#[derive(Clone, Debug)]
pub struct ClimbEnv {
    pub cfg: EnvConfig,
    pub model: RobotModel,
    adhesion: AdhesionModel,
    wall: WallEnvironment,
    act: ActuationConfig,
    state: RobotState,
    feet: [EpmFoot; NUM_LEGS],
    decisions: [AttachDecision; NUM_LEGS],
    delay: ActionDelayBuffer,
    target_history: [JointVec; 2],
    action_history: [Action; 2],
    obs: ObservationPipeline,
    rng: ChaCha8Rng,
    sched: CurriculumState,
    command: [f64; 3],
    steps: usize,
    all_attached_since: Option<f64>,
    bottom: Option<f64>,
    frame: ProprioFrame,
}

fn wall_with(cfg: &EnvConfig, gravity: Vector3<f64>, friction: f64, magnet_friction: f64) -> WallEnvironment {
    let mut wall = WallEnvironment::steel_wall(gravity, friction);
    wall.magnet_friction = magnet_friction;
    wall.contact = cfg.contact.clone();
    if !cfg.surface_map.is_empty() {
        wall.surface_map = cfg.surface_map.clone();
    }
    wall
}

impl ClimbEnv {
    pub fn new(cfg: EnvConfig, model: RobotModel, adhesion: AdhesionConfig, ideal_adhesion: bool, seed: u64) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        adhesion.validate()?;
        let sched = CurriculumState::fixed(0.0, 1.0, Vector3::new(0.0, 0.0, -9.81));
        let wall = wall_with(&cfg, sched.gravity_vec(), cfg.friction, adhesion.magnet_friction);
        wall.validate()?;
        let state = RobotState::standing(&model, &wall);
        let obs = ObservationPipeline::new(cfg.noise.clone());
        let max_force = adhesion.max_force;
        let mut env = Self {
            adhesion: AdhesionModel::new(adhesion, ideal_adhesion),
            act: ActuationConfig::default(),
            feet: std::array::from_fn(|_| EpmFoot::new(max_force)),
            decisions: [AttachDecision {
                attach: false,
                reason: AttachReason::MagnetOff,
            }; NUM_LEGS],
            delay: ActionDelayBuffer::new(),
            target_history: [model.nominal_joint_config(); 2],
            action_history: [[0.0; ACTION_DIM]; 2],
            rng: ChaCha8Rng::seed_from_u64(seed),
            command: [0.0; 3],
            steps: 0,
            all_attached_since: None,
            bottom: None,
            frame: ProprioFrame {
                proprio: [0.0; crate::observation::PROPRIO_DIM],
                clock: [0.0; crate::observation::CLOCK_DIM],
            },
            cfg,
            model,
            wall,
            state,
            obs,
            sched,
        };
        env.reset(&CurriculumState::fixed(0.0, 1.0, Vector3::new(0.0, 0.0, -9.81)));
        Ok(env)
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn wall(&self) -> &WallEnvironment {
        &self.wall
    }

    pub fn actuation(&self) -> &ActuationConfig {
        &self.act
    }

    pub fn feet(&self) -> &[EpmFoot; NUM_LEGS] {
        &self.feet
    }

    pub fn decisions(&self) -> &[AttachDecision; NUM_LEGS] {
        &self.decisions
    }

    pub fn schedule(&self) -> &CurriculumState {
        &self.sched
    }

    pub fn command(&self) -> [f64; 3] {
        self.command
    }

    pub fn set_command(&mut self, command: [f64; 3]) {
        self.command = command;
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn frame(&self) -> &ProprioFrame {
        &self.frame
    }

    pub fn is_ideal_adhesion(&self) -> bool {
        self.adhesion.is_ideal()
    }

    pub fn sample_command(&mut self) -> [f64; 3] {
        let r = self.cfg.command_range;
        let rng = &mut self.rng;
        let c = std::array::from_fn(|k| if r[k] > 0.0 { rng.random_range(-r[k]..=r[k]) } else { 0.0 });
        self.command = c;
        c
    }

    /// Moves a running episode onto `sched`: gravity, attachment probability
    /// and reward gating change, the robot state does not.
    pub fn set_schedule(&mut self, sched: &CurriculumState) {
        if self.sched.gravity != sched.gravity {
            self.wall.gravity = sched.gravity_vec();
            self.bottom = self.wall.bottom_along_gravity();
        }
        self.sched = sched.clone();
    }

    /// Starts a new episode under `sched`: redraws randomized parameters and
    /// a command, and places the robot in its nominal stance.
    pub fn reset(&mut self, sched: &CurriculumState) -> ProprioFrame {
        self.sched = sched.clone();
        let (act, friction) = if self.cfg.randomize {
            (ActuationConfig::sample(&mut self.rng), self.rng.random_range(0.3..=0.5))
        } else {
            (ActuationConfig::default(), self.cfg.friction)
        };
        self.act = act;
        self.wall = wall_with(&self.cfg, sched.gravity_vec(), friction, self.adhesion.cfg.magnet_friction);
        self.bottom = self.wall.bottom_along_gravity();
        let mut state = RobotState::standing(&self.model, &self.wall);
        if self.cfg.initial_joint_noise > 0.0 {
            let b = self.cfg.initial_joint_noise;
            for q in state.joint_pos.iter_mut() {
                *q += self.rng.random_range(-b..=b);
            }
            state.joint_pos = self.model.clamp_joints(&state.joint_pos);
            state.refresh_kinematics(&self.model, &self.wall);
        }
        self.state = state;
        let max_force = self.adhesion.cfg.max_force;
        self.feet = std::array::from_fn(|_| EpmFoot::new(max_force));
        self.decisions = [AttachDecision {
            attach: false,
            reason: AttachReason::MagnetOff,
        }; NUM_LEGS];
        let nominal = self.model.nominal_joint_config();
        self.delay.reset(0.0, self.state.joint_pos);
        self.target_history = [nominal; 2];
        self.action_history = [[0.0; ACTION_DIM]; 2];
        self.steps = 0;
        self.all_attached_since = None;
        self.sample_command();
        self.obs.reset(&mut self.rng);
        self.frame = self
            .obs
            .proprio(&self.state, &self.wall.gravity, &self.target_history, 0.0, &mut self.rng);
        self.frame.clone()
    }

    /// Estimator regression targets for the current state: base-frame linear
    /// velocity, foot heights above the wall, contact flags.
    pub fn privileged(&self) -> Privileged {
        let mut out = [0.0; ESTIMATE_DIM];
        out[..3].copy_from_slice(self.state.base_lin_vel_local().as_slice());
        for i in 0..NUM_LEGS {
            out[3 + i] = self.wall.height(&self.state.foot_pos[i]);
            out[7 + i] = if self.state.contact[i] { 1.0 } else { 0.0 };
        }
        out
    }

    /// Clipped action and the joint targets it maps to.
    pub fn process_action(&self, action: &Action) -> (Action, JointVec) {
        let mut a = *action;
        for (k, v) in a.iter_mut().enumerate() {
            let v0 = if v.is_finite() { *v } else { 0.0 };
            *v = if k < NUM_JOINTS {
                v0.clamp(-self.cfg.action_clip, self.cfg.action_clip)
            } else {
                v0.clamp(0.0, 1.0)
            };
        }
        let nominal = self.model.nominal_joint_config();
        let targets = JointVec::from_fn(|j, _| nominal[j] + self.cfg.action_scale * a[j]);
        (a, self.model.clamp_joints(&targets))
    }

    fn alignment_gap(&self, i: usize) -> f64 {
        let height = self.wall.height(&self.state.foot_pos[i]).max(0.0);
        if self.cfg.perfect_alignment {
            return height;
        }
        let face = self.state.face_normal[i];
        let cos = face.dot(&-self.wall.wall_normal).clamp(-1.0, 1.0);
        let tilt_sin = if cos >= 0.0 { (1.0 - cos * cos).max(0.0).sqrt() } else { 1.0 };
        height + self.adhesion.cfg.pad_radius * tilt_sin
    }

    /// Advances one control step. `contact_confidence` is the estimator's
    /// contact probability per foot.
    pub fn step(&mut self, action: &Action, contact_confidence: &[f64; NUM_LEGS]) -> StepOutcome {
        let (action, targets) = self.process_action(action);
        let mut termination = Termination::None;
        let dt = self.cfg.physics_dt;
        let mut force_active = [false; NUM_LEGS];
        for _ in 0..self.cfg.decimation {
            let now = self.state.time;
            let effective = apply_action_delay(&mut self.delay, now, &targets, self.act.action_delay);
            let mut forces = [Vector3::zeros(); NUM_LEGS];
            for i in 0..NUM_LEGS {
                let c = if self.cfg.oracle_contact {
                    if self.state.contact[i] {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    contact_confidence[i]
                };
                let magnet = if self.sched.adhesion_enabled { action[NUM_JOINTS + i] } else { 0.0 };
                let input = FootAdhesionInput {
                    now,
                    contact_confidence: c,
                    magnet_action: magnet,
                    in_contact: self.state.contact[i],
                    alignment_gap: self.alignment_gap(i),
                    on_ferromagnetic: self.wall.is_ferromagnetic(&self.state.foot_pos[i]),
                    prob_attach: self.sched.prob_attach,
                };
                let out = self
                    .adhesion
                    .step_foot(&mut self.feet[i], &input, &self.wall.wall_normal, &mut self.rng);
                self.decisions[i] = out.decision;
                forces[i] = out.force;
                force_active[i] = out.attached;
            }
            match step(&self.model, &self.state, &self.wall, &self.act, &effective, &forces, dt) {
                Ok(next) => self.state = next,
                Err(_) => {
                    termination = Termination::NonFinite;
                    self.state.time = now + dt;
                    break;
                }
            }
        }
        self.steps += 1;
        let t = self.state.time;

        let reward = if termination == Termination::NonFinite {
            RewardBreakdown::default()
        } else {
            compute_rewards(&self.reward_inputs(&action), &self.sched)
        };

        if termination == Termination::None {
            termination = self.check_termination(&force_active);
        }
        let truncated = !termination.is_early() && self.steps >= self.cfg.max_steps();

        self.target_history = [targets, self.target_history[0]];
        self.action_history = [action, self.action_history[0]];
        let phases = leg_phases(t, self.obs.period);
        let measured = if termination == Termination::NonFinite {
            [f64::NAN; 3]
        } else {
            let v = self.state.base_lin_vel_local();
            let w = self.state.base_ang_vel_local();
            [v.x, v.y, w.z]
        };
        let record = StepRecord {
            time: t,
            command: self.command,
            measured,
            feet: std::array::from_fn(|i| FootRecord {
                stance: !in_swing(phases[i]),
                attached: self.feet[i].attached,
                force_active: force_active[i],
                reason: self.decisions[i].reason,
            }),
        };
        if termination != Termination::NonFinite {
            self.frame = self
                .obs
                .proprio(&self.state, &self.wall.gravity, &self.target_history, t, &mut self.rng);
        }
        StepOutcome {
            frame: self.frame.clone(),
            privileged: self.privileged(),
            reward,
            record,
            termination,
            truncated,
        }
    }

    fn check_termination(&mut self, force_active: &[bool; NUM_LEGS]) -> Termination {
        let t = self.state.time;
        let p = self.state.base_position;
        if let (Some(bottom), Some(g)) = (self.bottom, self.wall.gravity.try_normalize(1e-12)) {
            if p.dot(&g) > bottom + self.cfg.fall_margin {
                return Termination::Fell;
            }
        }
        if self.wall.height(&p).abs() > self.cfg.max_wall_distance {
            return Termination::Fell;
        }
        if force_active.iter().all(|&a| a) {
            let since = *self.all_attached_since.get_or_insert(t - self.cfg.control_dt());
            if t - since > self.cfg.frozen_timeout + 1e-9 {
                return Termination::Frozen;
            }
        } else {
            self.all_attached_since = None;
        }
        Termination::None
    }

    fn reward_inputs(&self, action: &Action) -> RewardInputs {
        let s = &self.state;
        let (u, v) = self.wall.plane_axes();
        let n = self.wall.wall_normal;
        let lin = s.base_lin_vel_local();
        let ang = s.base_ang_vel_local();
        let arr = |x: &JointVec| -> [f64; NUM_JOINTS] { std::array::from_fn(|j| x[j]) };
        RewardInputs {
            command: self.command,
            base_lin_vel: [lin.x, lin.y, lin.z],
            base_ang_vel: [ang.x, ang.y, ang.z],
            phases: leg_phases(s.time, self.obs.period),
            foot_heights: std::array::from_fn(|i| self.wall.height(&s.foot_pos[i])),
            foot_vel: std::array::from_fn(|i| {
                let fv = s.foot_vel[i];
                [fv.dot(&u), fv.dot(&v), fv.dot(&n)]
            }),
            contacts: s.contact,
            torques: arr(&s.joint_torque),
            joint_pos: arr(&s.joint_pos),
            joint_vel: arr(&s.joint_vel),
            joint_acc: arr(&s.joint_acc),
            nominal_joint_pos: arr(&self.model.nominal_joint_config()),
            action: *action,
            prev_action: self.action_history[0],
            prev_prev_action: self.action_history[1],
            magnet_actions: std::array::from_fn(|i| action[NUM_JOINTS + i]),
            body_z: s.body_z().into(),
            reference_z: n.into(),
        }
    }
}
