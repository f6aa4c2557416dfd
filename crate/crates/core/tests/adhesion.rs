use epmclimb_core::adhesion::*;
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GAP_TOL: f64 = 0.0005;

/// Conditions checked one after another; the first false one is the reason.
fn oracle(c: f64, a: f64, x: f64, gap: f64, ferro: bool, p: f64) -> (bool, AttachReason) {
    let checks = [
        (c >= 0.5, AttachReason::NoContactConf),
        (a >= 0.5, AttachReason::MagnetOff),
        (x <= p, AttachReason::StochasticFail),
        (gap <= GAP_TOL, AttachReason::Misaligned),
        (ferro, AttachReason::NonFerromagnetic),
    ];
    for (ok, reason) in checks {
        if !ok {
            return (false, reason);
        }
    }
    (true, AttachReason::Ok)
}

#[test]
fn gate_truth_table() {
    let mut rows = 0;
    for c in [0.4, 0.5, 0.7] {
        for a in [0.4, 0.5, 0.9] {
            for x in [0.1, 0.9] {
                for gap in [0.0, 0.002] {
                    for ferro in [false, true] {
                        for p in [0.85, 1.0] {
                            let d = gate_adhesion(
                                &GateInputs {
                                    contact_confidence: c,
                                    magnet_action: a,
                                    alignment_gap: gap,
                                    on_ferromagnetic: ferro,
                                    prob_attach: p,
                                    draw: x,
                                },
                                GateMode::Realistic { gap_tol: GAP_TOL },
                            );
                            assert_eq!((d.attach, d.reason), oracle(c, a, x, gap, ferro, p), "{c} {a} {x} {gap} {ferro} {p}");
                            rows += 1;
                        }
                    }
                }
            }
        }
    }
    assert_eq!(rows, 144);
}

#[test]
fn airgap_anchors() {
    assert_eq!(airgap_force(0.0, MAX_HOLDING_FORCE), 697.0);
    let ratio = airgap_force(0.001, MAX_HOLDING_FORCE) / airgap_force(0.0, MAX_HOLDING_FORCE);
    assert!((ratio - 0.07).abs() < 0.01);
    assert!((airgap_force(0.0005, 697.0) - 697.0 * 0.07f64.sqrt()).abs() < 1e-9);
    // negative gaps are clamped to contact
    assert_eq!(airgap_force(-0.001, 697.0), 697.0);
}

#[test]
fn airgap_force_is_monotone_on_a_grid() {
    let mut prev = f64::INFINITY;
    for k in 0..1000 {
        let f = airgap_force(k as f64 * 5e-6, MAX_HOLDING_FORCE);
        assert!(f <= prev);
        assert!(f > 0.0);
        prev = f;
    }
}

#[test]
fn epm_switch_takes_effect_after_latency() {
    let foot = EpmFoot::new(697.0);
    let f = switch_epm(&foot, true, 0.0, 0.005);
    assert!(!f.epm_on);
    assert_eq!(f.switch_pending_until(), Some(0.005));
    let f = switch_epm(&f, true, 0.004, 0.005);
    assert!(!f.epm_on);
    let f = switch_epm(&f, true, 0.005, 0.005);
    assert!(f.epm_on);
    assert_eq!(f.pending, None);
    // a command reverted before it lands is cancelled
    let g = switch_epm(&f, false, 0.010, 0.005);
    let g = switch_epm(&g, true, 0.012, 0.005);
    assert!(g.epm_on);
    assert_eq!(g.pending, None);
}

#[test]
fn zero_latency_switches_immediately() {
    let f = switch_epm(&EpmFoot::new(697.0), true, 0.0, 0.0);
    assert!(f.epm_on);
}

fn run_foot(model: &AdhesionModel, input: FootAdhesionInput, steps: usize) -> FootAdhesionOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut foot = EpmFoot::new(model.cfg.max_force);
    let mut out = None;
    for k in 0..steps {
        let inp = FootAdhesionInput {
            now: k as f64 * 0.002,
            ..input
        };
        out = Some(model.step_foot(&mut foot, &inp, &Vector3::z(), &mut rng));
    }
    out.unwrap()
}

fn crafted(contact_confidence: f64, magnet_action: f64, gap: f64) -> FootAdhesionInput {
    FootAdhesionInput {
        now: 0.0,
        contact_confidence,
        magnet_action,
        in_contact: true,
        alignment_gap: gap,
        on_ferromagnetic: true,
        prob_attach: 1.0,
    }
}

#[test]
fn ideal_mode_applies_full_force_regardless_of_gap() {
    let ideal = AdhesionModel::new(AdhesionConfig::default(), true);
    for gap in [0.0, 0.0005, 0.002, 0.01] {
        for conf in [0.0, 0.4, 1.0] {
            let out = run_foot(&ideal, crafted(conf, 0.9, gap), 10);
            assert!(out.attached);
            assert_eq!(out.force, Vector3::new(0.0, 0.0, -697.0));
        }
    }
    let off = run_foot(&ideal, crafted(1.0, 0.4, 0.0), 10);
    assert!(!off.attached);
    assert_eq!(off.force, Vector3::zeros());
}

#[test]
fn realistic_mode_degrades_with_gap() {
    let real = AdhesionModel::new(AdhesionConfig::default(), false);
    let out = run_foot(&real, crafted(1.0, 0.9, 0.0), 10);
    assert!(out.attached);
    assert!((out.force.z + 697.0).abs() < 1e-9);
    let out = run_foot(&real, crafted(1.0, 0.9, 0.002), 10);
    assert!(!out.attached);
    assert_eq!(out.decision.reason, AttachReason::Misaligned);
    assert!(-out.force.z < 697.0 * 0.01);
    let out = run_foot(&real, crafted(0.2, 0.9, 0.0), 10);
    assert_eq!(out.decision.reason, AttachReason::NoContactConf);
    assert_eq!(out.force, Vector3::zeros());
}

#[test]
fn force_waits_for_the_switch() {
    let real = AdhesionModel::new(AdhesionConfig::default(), false);
    let early = run_foot(&real, crafted(1.0, 0.9, 0.0), 2);
    assert_eq!(early.force, Vector3::zeros());
    let late = run_foot(&real, crafted(1.0, 0.9, 0.0), 4);
    assert!(late.force.z < 0.0);
}

#[test]
fn draw_is_latched_per_stance() {
    let real = AdhesionModel::new(AdhesionConfig::default(), false);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut foot = EpmFoot::new(697.0);
    let mut inp = crafted(1.0, 0.9, 0.0);
    real.step_foot(&mut foot, &inp, &Vector3::z(), &mut rng);
    let d = foot.stance_draw();
    for k in 1..50 {
        inp.now = k as f64 * 0.002;
        real.step_foot(&mut foot, &inp, &Vector3::z(), &mut rng);
        assert_eq!(foot.stance_draw(), d);
    }
    inp.in_contact = false;
    real.step_foot(&mut foot, &inp, &Vector3::z(), &mut rng);
    inp.in_contact = true;
    real.step_foot(&mut foot, &inp, &Vector3::z(), &mut rng);
    assert_ne!(foot.stance_draw(), d);
}

#[test]
fn reason_codes_round_trip() {
    for r in AttachReason::ALL {
        assert_eq!(AttachReason::from_code(r.code()), Some(r));
    }
    assert_eq!(AttachReason::from_code("bogus"), None);
}

proptest! {
    #[test]
    fn gate_matches_oracle(
        c in 0.0f64..1.0, a in 0.0f64..1.0, x in 0.0f64..1.0,
        gap in 0.0f64..0.003, ferro: bool, p in 0.85f64..=1.0,
    ) {
        let d = gate_adhesion(
            &GateInputs { contact_confidence: c, magnet_action: a, alignment_gap: gap, on_ferromagnetic: ferro, prob_attach: p, draw: x },
            GateMode::Realistic { gap_tol: GAP_TOL },
        );
        prop_assert_eq!((d.attach, d.reason), oracle(c, a, x, gap, ferro, p));
    }

    #[test]
    fn airgap_is_monotone_and_bounded(g1 in 0.0f64..0.01, dg in 0.0f64..0.01) {
        let f1 = airgap_force(g1, 697.0);
        let f2 = airgap_force(g1 + dg, 697.0);
        prop_assert!(f2 <= f1);
        prop_assert!(f1 <= 697.0 && f2 >= 0.0);
    }

    #[test]
    fn force_never_pushes(conf in 0.0f64..1.0, a in 0.0f64..1.0, gap in 0.0f64..0.003, ideal: bool) {
        let m = AdhesionModel::new(AdhesionConfig::default(), ideal);
        let out = run_foot(&m, crafted(conf, a, gap), 6);
        prop_assert!(out.force.z <= 0.0);
        prop_assert!(out.force.z >= -697.0);
        prop_assert!(out.force.x == 0.0 && out.force.y == 0.0);
    }
}
