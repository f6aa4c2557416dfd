//! Electropermanent-magnet foot adhesion.
//!
//! A foot attaches only when four conditions hold in order: the estimated
//! contact confidence and the magnet command both clear 0.5, a per-stance
//! uniform draw falls under the scheduled attachment probability, and the
//! magnet face sits flush on a ferromagnetic patch. Holding force decays
//! exponentially with the air gap, and every EPM state change lands a fixed
//! latency after it is commanded.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_HOLDING_FORCE: f64 = 697.0;
pub const SWITCH_LATENCY: f64 = 0.005;
pub const GATE_THRESHOLD: f64 = 0.5;
/// Air gap at which the force has dropped to [`REFERENCE_FORCE_RATIO`].
pub const REFERENCE_GAP: f64 = 0.001;
pub const REFERENCE_FORCE_RATIO: f64 = 0.07;

const TIME_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdhesionConfig {
    pub max_force: f64,
    /// Exponential air-gap decay rate, 1/m.
    pub decay_rate: f64,
    pub switch_latency: f64,
    /// Largest gap still counted as full alignment.
    pub gap_tol: f64,
    /// Friction coefficient of an attached magnet face against the wall.
    pub magnet_friction: f64,
    /// Radius of the magnet face; converts face tilt into an edge gap.
    pub pad_radius: f64,
    /// Apply the gap-degraded force to misaligned feet with the magnet on.
    pub partial_contact: bool,
}

impl Default for AdhesionConfig {
    fn default() -> Self {
        Self {
            max_force: MAX_HOLDING_FORCE,
            decay_rate: default_decay_rate(),
            switch_latency: SWITCH_LATENCY,
            gap_tol: 0.0005,
            magnet_friction: 0.5,
            pad_radius: 0.02,
            partial_contact: true,
        }
    }
}

impl AdhesionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("adhesion.max_force", self.max_force),
            ("adhesion.decay_rate", self.decay_rate),
            ("adhesion.gap_tol", self.gap_tol),
            ("adhesion.magnet_friction", self.magnet_friction),
            ("adhesion.pad_radius", self.pad_radius),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, "must be finite and > 0"));
            }
        }
        if !(self.switch_latency.is_finite() && self.switch_latency >= 0.0) {
            return Err(Error::invalid("adhesion.switch_latency", "must be >= 0"));
        }
        Ok(())
    }
}

/// `ln(1 / 0.07) / 1 mm`, about 2659.3 1/m.
pub fn default_decay_rate() -> f64 {
    (1.0 / REFERENCE_FORCE_RATIO).ln() / REFERENCE_GAP
}

/// Holding force at a given air gap with the default decay curve.
pub fn airgap_force(gap: f64, max_force: f64) -> f64 {
    airgap_force_with(gap, max_force, default_decay_rate())
}

pub fn airgap_force_with(gap: f64, max_force: f64, decay_rate: f64) -> f64 {
    max_force * (-decay_rate * gap.max(0.0)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttachReason {
    Ok,
    NoContactConf,
    MagnetOff,
    StochasticFail,
    Misaligned,
    NonFerromagnetic,
}

impl AttachReason {
    pub const ALL: [AttachReason; 6] = [
        AttachReason::Ok,
        AttachReason::NoContactConf,
        AttachReason::MagnetOff,
        AttachReason::StochasticFail,
        AttachReason::Misaligned,
        AttachReason::NonFerromagnetic,
    ];

    /// Stable short code used in episode logs.
    pub fn code(self) -> &'static str {
        match self {
            AttachReason::Ok => "ok",
            AttachReason::NoContactConf => "noconf",
            AttachReason::MagnetOff => "off",
            AttachReason::StochasticFail => "stoch",
            AttachReason::Misaligned => "misal",
            AttachReason::NonFerromagnetic => "nonferro",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.code() == code)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttachDecision {
    pub attach: bool,
    pub reason: AttachReason,
}

impl AttachDecision {
    fn fail(reason: AttachReason) -> Self {
        Self {
            attach: false,
            reason,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateInputs {
    pub contact_confidence: f64,
    pub magnet_action: f64,
    pub alignment_gap: f64,
    pub on_ferromagnetic: bool,
    pub prob_attach: f64,
    /// Uniform draw latched for the current stance.
    pub draw: f64,
}

/// How strictly the gate models the magnet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateMode {
    Realistic { gap_tol: f64 },
    /// Any magnet command above threshold is full adhesion, whatever the
    /// contact geometry.
    Ideal,
}

/// Evaluates the attachment conditions in order and reports the first one
/// that fails.
pub fn gate_adhesion(g: &GateInputs, mode: GateMode) -> AttachDecision {
    let gap_tol = match mode {
        GateMode::Ideal => {
            return if g.magnet_action >= GATE_THRESHOLD {
                AttachDecision {
                    attach: true,
                    reason: AttachReason::Ok,
                }
            } else {
                AttachDecision::fail(AttachReason::MagnetOff)
            };
        }
        GateMode::Realistic { gap_tol } => gap_tol,
    };
    if g.contact_confidence < GATE_THRESHOLD {
        AttachDecision::fail(AttachReason::NoContactConf)
    } else if g.magnet_action < GATE_THRESHOLD {
        AttachDecision::fail(AttachReason::MagnetOff)
    } else if g.draw > g.prob_attach {
        AttachDecision::fail(AttachReason::StochasticFail)
    } else if g.alignment_gap > gap_tol {
        AttachDecision::fail(AttachReason::Misaligned)
    } else if !g.on_ferromagnetic {
        AttachDecision::fail(AttachReason::NonFerromagnetic)
    } else {
        AttachDecision {
            attach: true,
            reason: AttachReason::Ok,
        }
    }
}

/// Per-foot magnet state.
#[derive(Clone, Debug, PartialEq)]
pub struct EpmFoot {
    pub epm_on: bool,
    /// Target state and the time it takes effect.
    pub pending: Option<(bool, f64)>,
    pub max_force: f64,
    pub attached: bool,
    pub attach_gap: f64,
    latch: StanceLatch,
}

impl EpmFoot {
    pub fn new(max_force: f64) -> Self {
        Self {
            epm_on: false,
            pending: None,
            max_force,
            attached: false,
            attach_gap: 0.0,
            latch: StanceLatch::default(),
        }
    }

    pub fn switch_pending_until(&self) -> Option<f64> {
        self.pending.map(|(_, at)| at)
    }

    pub fn stance_draw(&self) -> f64 {
        self.latch.draw
    }

    pub fn in_stance(&self) -> bool {
        self.latch.in_stance
    }
}

/// Commands the EPM at time `now`. A change lands `latency` seconds after it
/// is commanded; reverting before then cancels it, and turning off releases
/// the attachment the moment it lands.
pub fn switch_epm(foot: &EpmFoot, command_on: bool, now: f64, latency: f64) -> EpmFoot {
    let mut next = foot.clone();
    if let Some((target, at)) = next.pending {
        if now + TIME_EPS >= at {
            next.epm_on = target;
            next.pending = None;
        }
    }
    if command_on == next.epm_on {
        next.pending = None;
    } else if next.pending.map(|(target, _)| target) != Some(command_on) {
        if latency <= 0.0 {
            next.epm_on = command_on;
        } else {
            next.pending = Some((command_on, now + latency));
        }
    }
    if !next.epm_on {
        next.attached = false;
    }
    next
}

/// Latches one uniform draw per swing-to-stance transition.
#[derive(Clone, Debug, PartialEq)]
struct StanceLatch {
    in_stance: bool,
    draw: f64,
}

impl Default for StanceLatch {
    fn default() -> Self {
        Self {
            in_stance: false,
            draw: 0.0,
        }
    }
}

impl StanceLatch {
    fn observe<R: Rng + ?Sized>(&mut self, in_contact: bool, rng: &mut R) -> f64 {
        if in_contact && !self.in_stance {
            self.draw = rng.random::<f64>();
        }
        self.in_stance = in_contact;
        self.draw
    }
}

/// Pull exerted by the magnet, along `-wall_normal`.
///
/// Attached feet pull with the gap-degraded force. A misaligned foot whose
/// magnet is on still pulls with the reduced force at the measured gap when
/// `partial_contact` is enabled. Everything else is zero.
pub fn holding_force(
    foot: &EpmFoot,
    decision: AttachDecision,
    gap: f64,
    wall_normal: &Vector3<f64>,
    cfg: &AdhesionConfig,
) -> Vector3<f64> {
    if !foot.epm_on {
        return Vector3::zeros();
    }
    let partial = cfg.partial_contact && decision.reason == AttachReason::Misaligned;
    if decision.attach || partial {
        -wall_normal * airgap_force_with(gap, foot.max_force, cfg.decay_rate)
    } else {
        Vector3::zeros()
    }
}

/// Largest tangential load an attached foot resists through the magnet alone.
pub fn shear_capacity(pull: f64, cfg: &AdhesionConfig) -> f64 {
    cfg.magnet_friction * pull.max(0.0)
}

#[derive(Clone, Copy, Debug)]
pub struct FootAdhesionInput {
    pub now: f64,
    pub contact_confidence: f64,
    pub magnet_action: f64,
    pub in_contact: bool,
    pub alignment_gap: f64,
    pub on_ferromagnetic: bool,
    pub prob_attach: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FootAdhesionOutput {
    pub decision: AttachDecision,
    pub force: Vector3<f64>,
    pub attached: bool,
}

/// The adhesion stack for one foot over one physics substep: latch the
/// stochastic draw, switch the EPM, run the gate, and compute the pull.
#[derive(Clone, Debug)]
pub struct AdhesionModel {
    pub cfg: AdhesionConfig,
    pub mode: GateMode,
}

impl AdhesionModel {
    pub fn new(cfg: AdhesionConfig, ideal: bool) -> Self {
        let mode = if ideal {
            GateMode::Ideal
        } else {
            GateMode::Realistic {
                gap_tol: cfg.gap_tol,
            }
        };
        Self { cfg, mode }
    }

    pub fn is_ideal(&self) -> bool {
        self.mode == GateMode::Ideal
    }

    pub fn step_foot<R: Rng + ?Sized>(
        &self,
        foot: &mut EpmFoot,
        input: &FootAdhesionInput,
        wall_normal: &Vector3<f64>,
        rng: &mut R,
    ) -> FootAdhesionOutput {
        let draw = foot.latch.observe(input.in_contact, rng);
        let command = match self.mode {
            GateMode::Ideal => input.magnet_action >= GATE_THRESHOLD,
            GateMode::Realistic { .. } => {
                input.contact_confidence >= GATE_THRESHOLD
                    && input.magnet_action >= GATE_THRESHOLD
            }
        };
        *foot = switch_epm(foot, command, input.now, self.cfg.switch_latency);
        let decision = gate_adhesion(
            &GateInputs {
                contact_confidence: input.contact_confidence,
                magnet_action: input.magnet_action,
                alignment_gap: input.alignment_gap,
                on_ferromagnetic: input.on_ferromagnetic,
                prob_attach: input.prob_attach,
                draw,
            },
            self.mode,
        );
        let attached = foot.epm_on && decision.attach;
        if attached && !foot.attached {
            foot.attach_gap = input.alignment_gap;
        }
        foot.attached = attached;
        let gap = if self.is_ideal() { 0.0 } else { input.alignment_gap };
        let force = holding_force(foot, decision, gap, wall_normal, &self.cfg);
        FootAdhesionOutput {
            decision,
            force,
            attached,
        }
    }
}
