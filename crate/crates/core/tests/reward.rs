use std::f64::consts::FRAC_PI_2;

use epmclimb_core::curriculum::{Curriculum, CurriculumConfig, CurriculumState};
use epmclimb_core::reward::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[path = "common/reward_oracle.rs"]
mod reward_oracle;
use reward_oracle::{random_inputs, table_reward};

fn schedule(t: u64) -> CurriculumState {
    Curriculum::new(CurriculumConfig::default()).unwrap().state(t)
}

#[test]
fn pipeline_matches_table_transcription() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let ts = [0u64, 1000, 1200, 21200, 35000];
    let mut nonzero_totals = 0;
    for k in 0..1000 {
        let t = ts[k % ts.len()];
        let inp = random_inputs(&mut rng);
        let got = compute_rewards(&inp, &schedule(t)).values();
        let want = table_reward(&inp, t);
        for (n, (g, w)) in got.iter().zip(&want).enumerate() {
            assert!(
                (g - w).abs() <= 1e-9 * w.abs().max(1.0),
                "sample {k} t={t} term {}: {g} vs {w}",
                RewardBreakdown::NAMES[n]
            );
        }
        if want[16].abs() > 1e-6 {
            nonzero_totals += 1;
        }
        if t < 1000 {
            assert_eq!(got[12], 0.0);
            assert_eq!(got[13], 0.0);
        }
    }
    // the comparison must exercise the composed total, not only underflowed zeros
    assert!(nonzero_totals > 100, "{nonzero_totals}");
}

#[test]
fn perfect_tracking_at_start_gives_base_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut inp = random_inputs(&mut rng);
    inp.command = [0.2, 0.0, 0.1];
    inp.base_lin_vel = [0.2, 0.0, 0.0];
    inp.base_ang_vel = [0.0, 0.0, 0.1];
    let r = compute_rewards(&inp, &schedule(0));
    assert_eq!(r.lin_vel, 3.0);
    assert!((r.ang_vel - 3.0).abs() < 1e-15);
    let late = compute_rewards(&inp, &schedule(1_000_000));
    assert!((late.lin_vel - 4.5).abs() < 1e-9);
}

#[test]
fn gait_indicator_rewards_matching_contact() {
    assert_eq!(gait_indicator(0.5, false), 1.0);
    assert_eq!(gait_indicator(0.5, true), -1.0);
    assert_eq!(gait_indicator(2.0, true), 1.0);
    assert_eq!(gait_indicator(2.0, false), -1.0);
    assert_eq!(desired_foot_height(0.5), 0.08);
    assert_eq!(desired_foot_height(0.0), 0.0);
    assert_eq!(desired_foot_height(FRAC_PI_2), 0.0);
}

#[test]
fn orientation_term_is_the_tilt_angle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut inp = random_inputs(&mut rng);
    inp.body_z = [0.0, 0.0, 1.0];
    assert_eq!(compute_rewards(&inp, &schedule(0)).orientation, 0.0);
    inp.body_z = [1.0, 0.0, 0.0];
    assert!((compute_rewards(&inp, &schedule(0)).orientation - 3.0 * FRAC_PI_2).abs() < 1e-12);
}

proptest! {
    #[test]
    fn total_is_the_composition(seed in any::<u64>(), t in 0u64..50_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = compute_rewards(&random_inputs(&mut rng), &schedule(t));
        prop_assert_eq!(r.total, r.positive_sum() * (-0.2 * r.penalty_sum()).exp());
        prop_assert!(r.total.is_finite());
        prop_assert!(r.penalty_sum() >= 0.0);
        // 3 + 3 scaled by at most 1.5, plus 2 + 2 + 0.5
        prop_assert!(r.total <= 9.0 + 4.5 + 1e-12);
        prop_assert_eq!(RewardBreakdown::from_values(&r.values()), r);
    }

    #[test]
    fn smoothness_gated_before_start(seed in any::<u64>(), t in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = compute_rewards(&random_inputs(&mut rng), &schedule(t));
        prop_assert_eq!(r.smoothness1, 0.0);
        prop_assert_eq!(r.smoothness2, 0.0);
    }
}
