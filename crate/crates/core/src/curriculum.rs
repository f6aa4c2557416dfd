//! Three-phase training schedule.
//!
//! Phase 1 trains a crawl on flat ground, phase 2 tilts gravity about +y from
//! the ground to the wall, phase 3 lowers the attachment success probability.
//! All schedules are closed-form functions of the training iteration. A
//! `scale` factor compresses every breakpoint uniformly: the schedules are
//! evaluated at the stretched iteration `t / scale`, so `scale = 1` gives the
//! reference breakpoints and `scale = 0.01` runs the whole curriculum in 350
//! iterations.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PHASE1_END: f64 = 1200.0;
pub const TILT_SPAN: f64 = 20000.0;
pub const TILT_END: f64 = PHASE1_END + TILT_SPAN;
pub const PROB_RAMP_SPAN: f64 = 13800.0;
pub const PROB_FLOOR: f64 = 0.85;
pub const SMOOTHNESS_START: f64 = 1000.0;
pub const KAPPA_BASE: f64 = 0.99975;
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Wall tilt from the ground at iteration `t`, in radians.
pub fn theta_of(t: u64) -> f64 {
    theta_at(t as f64)
}

/// Adhesion success probability at iteration `t`.
pub fn prob_attach_of(t: u64) -> f64 {
    prob_attach_at(t as f64)
}

/// Reward scheduling factor at iteration `t`.
pub fn kappa_of(t: u64) -> f64 {
    kappa_at(t as f64)
}

/// `R_y(theta_of(t)) * g0`.
pub fn gravity_of(t: u64, g0: Vector3<f64>) -> Vector3<f64> {
    rotate_gravity(theta_of(t), g0)
}

pub fn phase_of(t: u64) -> (Phase, bool) {
    let t = t as f64;
    (phase_at(t), smoothness_at(t))
}

fn theta_at(t: f64) -> f64 {
    (FRAC_PI_2 * (t - PHASE1_END) / TILT_SPAN).max(0.0).min(FRAC_PI_2)
}

fn prob_attach_at(t: f64) -> f64 {
    1.0 - (1.0 - PROB_FLOOR) * (t - TILT_END).max(0.0).min(PROB_RAMP_SPAN) / PROB_RAMP_SPAN
}

fn kappa_at(t: f64) -> f64 {
    KAPPA_BASE.powf((t - PHASE1_END).max(0.0))
}

fn phase_at(t: f64) -> Phase {
    if t <= PHASE1_END {
        Phase::GaitAcquisition
    } else if t <= TILT_END {
        Phase::GravityRotation
    } else {
        Phase::AdhesionUncertainty
    }
}

fn smoothness_at(t: f64) -> bool {
    t >= SMOOTHNESS_START
}

pub fn rotate_gravity(theta: f64, g0: Vector3<f64>) -> Vector3<f64> {
    let (s, c) = theta.sin_cos();
    // R_y(theta) = [[c, 0, s], [0, 1, 0], [-s, 0, c]]
    Vector3::new(c * g0.x + s * g0.z, g0.y, -s * g0.x + c * g0.z)
}

/// Velocity-tracking reward scale `1.5 - 0.5 kappa`.
pub fn velocity_scale(kappa: f64) -> f64 {
    1.5 - 0.5 * kappa
}

/// Foot-slip and torque penalty scale `0.5 + 0.5 kappa`.
pub fn penalty_scale(kappa: f64) -> f64 {
    0.5 + 0.5 * kappa
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    GaitAcquisition = 1,
    GravityRotation = 2,
    AdhesionUncertainty = 3,
}

impl Phase {
    pub fn number(self) -> u8 {
        self as u8
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    /// Breakpoint compression factor in (0, 1].
    pub scale: f64,
    /// Whether adhesion forces act during the flat-ground phase.
    pub adhesion_in_phase1: bool,
    /// Upper bound on the tilt angle. `0` keeps training on flat ground.
    pub tilt_limit: f64,
    pub gravity0: [f64; 3],
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            scale: 1.0,
            adhesion_in_phase1: true,
            tilt_limit: FRAC_PI_2,
            gravity0: [0.0, 0.0, -STANDARD_GRAVITY],
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::invalid("curriculum.scale", "must lie in (0, 1]"));
        }
        if !(0.0..=FRAC_PI_2).contains(&self.tilt_limit) {
            return Err(Error::invalid("curriculum.tilt_limit", "must lie in [0, pi/2]"));
        }
        if self.gravity0.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("curriculum.gravity0", "must be finite"));
        }
        Ok(())
    }
}

/// Ablation-driven replacements for individual schedules.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScheduleOverrides {
    pub fixed_theta: Option<f64>,
    pub fixed_prob_attach: Option<f64>,
    /// Use the post-phase-1 reward formulation from iteration 0.
    pub smoothness_always: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub iter: u64,
    pub theta: f64,
    pub gravity: [f64; 3],
    pub prob_attach: f64,
    pub kappa: f64,
    pub phase: Phase,
    pub smoothness_active: bool,
    pub adhesion_enabled: bool,
}

impl CurriculumState {
    pub fn gravity_vec(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    pub fn velocity_scale(&self) -> f64 {
        velocity_scale(self.kappa)
    }

    pub fn penalty_scale(&self) -> f64 {
        penalty_scale(self.kappa)
    }

    /// A schedule pinned at a given tilt and attachment probability, used by
    /// evaluation where the environment does not follow training time.
    pub fn fixed(theta: f64, prob_attach: f64, gravity0: Vector3<f64>) -> Self {
        Self {
            iter: 0,
            theta,
            gravity: rotate_gravity(theta, gravity0).into(),
            prob_attach,
            kappa: 1.0,
            phase: if prob_attach < 1.0 {
                Phase::AdhesionUncertainty
            } else if theta > 0.0 {
                Phase::GravityRotation
            } else {
                Phase::GaitAcquisition
            },
            smoothness_active: true,
            adhesion_enabled: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Curriculum {
    cfg: CurriculumConfig,
    overrides: ScheduleOverrides,
}

impl Curriculum {
    pub fn new(cfg: CurriculumConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            overrides: ScheduleOverrides::default(),
        })
    }

    pub fn with_overrides(mut self, overrides: ScheduleOverrides) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn config(&self) -> &CurriculumConfig {
        &self.cfg
    }

    fn stretched(&self, t: u64) -> f64 {
        t as f64 / self.cfg.scale
    }

    pub fn state(&self, t: u64) -> CurriculumState {
        let tau = self.stretched(t);
        let theta = self
            .overrides
            .fixed_theta
            .unwrap_or_else(|| theta_at(tau).min(self.cfg.tilt_limit));
        let prob_attach = self
            .overrides
            .fixed_prob_attach
            .unwrap_or_else(|| prob_attach_at(tau));
        let phase = phase_at(tau);
        let g0 = Vector3::from(self.cfg.gravity0);
        CurriculumState {
            iter: t,
            theta,
            gravity: rotate_gravity(theta, g0).into(),
            prob_attach,
            kappa: kappa_at(tau),
            phase,
            smoothness_active: self.overrides.smoothness_always || smoothness_at(tau),
            adhesion_enabled: phase != Phase::GaitAcquisition || self.cfg.adhesion_in_phase1,
        }
    }
}

/// Rotation matrix `R_y(theta)`.
pub fn rotation_y(theta: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn theta_anchors() {
        assert_eq!(theta_of(0), 0.0);
        assert_eq!(theta_of(1200), 0.0);
        assert!((theta_of(11200) - PI / 4.0).abs() < 1e-12);
        assert!((theta_of(21200) - PI / 2.0).abs() < 1e-12);
        assert_eq!(theta_of(1_000_000), FRAC_PI_2);
    }

    #[test]
    fn prob_anchors() {
        assert_eq!(prob_attach_of(0), 1.0);
        assert_eq!(prob_attach_of(21200), 1.0);
        assert!((prob_attach_of(28100) - 0.925).abs() < 1e-12);
        assert!((prob_attach_of(35000) - 0.85).abs() < 1e-12);
        assert!((prob_attach_of(90000) - 0.85).abs() < 1e-12);
    }

    #[test]
    fn kappa_and_scales() {
        for t in [0, 600, 1200] {
            assert_eq!(kappa_of(t), 1.0);
            assert_eq!(velocity_scale(kappa_of(t)), 1.0);
            assert_eq!(penalty_scale(kappa_of(t)), 1.0);
        }
        assert!((kappa_of(1201) - 0.99975).abs() < 1e-15);
        let far = kappa_of(10_000_000);
        assert!((velocity_scale(far) - 1.5).abs() < 1e-12);
        assert!((penalty_scale(far) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn phases() {
        assert_eq!(phase_of(999), (Phase::GaitAcquisition, false));
        assert_eq!(phase_of(1000), (Phase::GaitAcquisition, true));
        assert_eq!(phase_of(1200), (Phase::GaitAcquisition, true));
        assert_eq!(phase_of(1201).0, Phase::GravityRotation);
        assert_eq!(phase_of(21200).0, Phase::GravityRotation);
        assert_eq!(phase_of(21201).0, Phase::AdhesionUncertainty);
    }

    #[test]
    fn gravity_matches_rotation_matrix() {
        let g0 = Vector3::new(0.0, 0.0, -9.81);
        assert_eq!(gravity_of(0, g0), g0);
        let wall = gravity_of(21200, g0);
        assert!((wall - Vector3::new(-9.81, 0.0, 0.0)).norm() < 1e-12);
        for t in [1500u64, 7000, 15000] {
            let expected = rotation_y(theta_of(t)) * g0;
            assert!((gravity_of(t, g0) - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn scale_compresses_breakpoints() {
        let c = Curriculum::new(CurriculumConfig {
            scale: 0.01,
            ..Default::default()
        })
        .unwrap();
        assert!((c.state(212).theta - FRAC_PI_2).abs() < 1e-12);
        assert!((c.state(350).prob_attach - 0.85).abs() < 1e-12);
        assert!(!c.state(9).smoothness_active);
        assert!(c.state(10).smoothness_active);
    }

    #[test]
    fn tilt_limit_keeps_ground_flat() {
        let c = Curriculum::new(CurriculumConfig {
            scale: 0.01,
            tilt_limit: 0.0,
            ..Default::default()
        })
        .unwrap();
        for t in 0..400 {
            assert_eq!(c.state(t).theta, 0.0);
        }
    }

    #[test]
    fn adhesion_switch_in_phase1() {
        let off = Curriculum::new(CurriculumConfig {
            adhesion_in_phase1: false,
            ..Default::default()
        })
        .unwrap();
        assert!(!off.state(100).adhesion_enabled);
        assert!(off.state(1201).adhesion_enabled);
        let on = Curriculum::new(CurriculumConfig::default()).unwrap();
        assert!(on.state(100).adhesion_enabled);
    }

    #[test]
    fn rejects_bad_scale() {
        for scale in [0.0, -1.0, 1.5, f64::NAN] {
            let cfg = CurriculumConfig {
                scale,
                ..Default::default()
            };
            assert!(Curriculum::new(cfg).is_err());
        }
    }
}
