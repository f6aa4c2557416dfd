use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use epmclimb_core::curriculum::*;
use nalgebra::Vector3;
use proptest::prelude::*;

fn oracle_theta(t: f64) -> f64 {
    FRAC_PI_2.min((FRAC_PI_2 * (t - 1200.0) / 20000.0).max(0.0))
}

fn oracle_prob(t: f64) -> f64 {
    1.0 - 0.15 * (t - 21200.0).max(0.0).min(13800.0) / 13800.0
}

fn oracle_kappa(t: f64) -> f64 {
    0.99975f64.powf((t - 1200.0).max(0.0))
}

const ANCHORS: [u64; 7] = [0, 1200, 11200, 21200, 28100, 35000, 1_000_000];

#[test]
fn schedules_match_closed_forms_at_anchors() {
    for t in ANCHORS {
        assert!((theta_of(t) - oracle_theta(t as f64)).abs() < 1e-12, "theta at {t}");
        assert!((prob_attach_of(t) - oracle_prob(t as f64)).abs() < 1e-12, "prob at {t}");
        assert!((kappa_of(t) - oracle_kappa(t as f64)).abs() < 1e-12, "kappa at {t}");
    }
}

#[test]
fn published_anchor_values() {
    assert!((theta_of(21200) - FRAC_PI_2).abs() < 1e-12);
    assert!((theta_of(11200) - FRAC_PI_4).abs() < 1e-12);
    assert!((prob_attach_of(35000) - 0.85).abs() < 1e-12);
    assert_eq!(prob_attach_of(21200), 1.0);
    assert!((prob_attach_of(28100) - 0.925).abs() < 1e-12);
    assert_eq!(theta_of(1200), 0.0);
}

#[test]
fn kappa_scales() {
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
fn phases_and_smoothness_gate() {
    assert_eq!(phase_of(0), (Phase::GaitAcquisition, false));
    assert_eq!(phase_of(999), (Phase::GaitAcquisition, false));
    assert_eq!(phase_of(1000), (Phase::GaitAcquisition, true));
    assert_eq!(phase_of(1200).0, Phase::GaitAcquisition);
    assert_eq!(phase_of(1201).0, Phase::GravityRotation);
    assert_eq!(phase_of(21200).0, Phase::GravityRotation);
    assert_eq!(phase_of(21201).0, Phase::AdhesionUncertainty);
}

#[test]
fn vertical_wall_gravity() {
    let g = gravity_of(21200, Vector3::new(0.0, 0.0, -STANDARD_GRAVITY));
    assert!((g - Vector3::new(-9.81, 0.0, 0.0)).norm() < 1e-12);
    let flat = gravity_of(0, Vector3::new(0.0, 0.0, -STANDARD_GRAVITY));
    assert_eq!(flat, Vector3::new(0.0, 0.0, -9.81));
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
    assert!((c.state(112).theta - FRAC_PI_4).abs() < 1e-12);
    let full = Curriculum::new(CurriculumConfig::default()).unwrap();
    for t in ANCHORS {
        let s = full.state(t);
        assert_eq!(s.theta, theta_of(t));
        assert_eq!(s.prob_attach, prob_attach_of(t));
        assert_eq!(s.kappa, kappa_of(t));
    }
}

#[test]
fn tilt_limit_caps_theta() {
    let c = Curriculum::new(CurriculumConfig {
        tilt_limit: 0.0,
        ..Default::default()
    })
    .unwrap();
    for t in ANCHORS {
        assert_eq!(c.state(t).theta, 0.0);
        assert_eq!(c.state(t).gravity, [0.0, 0.0, -9.81]);
    }
}

#[test]
fn overrides_pin_schedules() {
    let c = Curriculum::new(CurriculumConfig::default()).unwrap().with_overrides(ScheduleOverrides {
        fixed_theta: Some(FRAC_PI_2),
        fixed_prob_attach: Some(1.0),
        ..Default::default()
    });
    for t in ANCHORS {
        let s = c.state(t);
        assert_eq!(s.theta, FRAC_PI_2);
        assert_eq!(s.prob_attach, 1.0);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    for scale in [0.0, -1.0, 1.5, f64::NAN] {
        let cfg = CurriculumConfig {
            scale,
            ..Default::default()
        };
        assert!(Curriculum::new(cfg).is_err(), "scale {scale}");
    }
}

#[test]
fn schedules_are_continuous_on_a_dense_grid() {
    let mut prev = (theta_of(0), prob_attach_of(0), kappa_of(0));
    for t in 1..=40_000u64 {
        let cur = (theta_of(t), prob_attach_of(t), kappa_of(t));
        assert!((cur.0 - prev.0).abs() <= FRAC_PI_2 / 20000.0 + 1e-12);
        assert!((cur.1 - prev.1).abs() <= 0.15 / 13800.0 + 1e-12);
        assert!((cur.2 - prev.2).abs() <= 2.5e-4 + 1e-12);
        prev = cur;
    }
}

proptest! {
    #[test]
    fn gravity_keeps_its_magnitude(t in 0u64..2_000_000) {
        let g = gravity_of(t, Vector3::new(0.0, 0.0, -STANDARD_GRAVITY));
        prop_assert!((g.norm() - 9.81).abs() < 1e-12);
        prop_assert!(g.y == 0.0);
    }

    #[test]
    fn schedules_stay_in_range_and_are_monotone(a in 0u64..100_000, d in 0u64..100_000) {
        let b = a + d;
        prop_assert!((0.0..=FRAC_PI_2).contains(&theta_of(a)));
        prop_assert!((0.85..=1.0).contains(&prob_attach_of(a)));
        prop_assert!(kappa_of(a) > 0.0 && kappa_of(a) <= 1.0);
        prop_assert!(theta_of(b) >= theta_of(a));
        prop_assert!(prob_attach_of(b) <= prob_attach_of(a));
        prop_assert!(kappa_of(b) <= kappa_of(a));
    }

    #[test]
    fn scaled_state_is_well_formed(scale in 0.001f64..=1.0, t in 0u64..50_000) {
        let c = Curriculum::new(CurriculumConfig { scale, ..Default::default() }).unwrap();
        let s = c.state(t);
        let g = Vector3::from(s.gravity);
        prop_assert!((g.norm() - 9.81).abs() < 1e-12);
        prop_assert!((0.0..=FRAC_PI_2).contains(&s.theta));
        prop_assert!((0.85..=1.0).contains(&s.prob_attach));
    }
}
