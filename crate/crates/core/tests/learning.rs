use epmclimb_core::learning::nn::{Activation, Adam, Mlp};
use epmclimb_core::learning::toy::train_lqr;
use epmclimb_core::learning::*;
use epmclimb_core::observation::{ESTIMATE_DIM, ESTIMATOR_INPUT_DIM, OBS_DIM};
use epmclimb_core::{ExperimentConfig, ACTION_DIM};
use epmclimb_core::evaluation::Ablation;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[path = "common/ppo_toy.rs"]
mod ppo_toy;
use ppo_toy::{gradients, kink_margin, max_relative_error, randn, toy};

#[test]
fn surrogate_gradient_matches_central_differences() {
    let clip = 0.2;
    let ent = 0.01;
    let mut checked = 0;
    let mut saw_clipping = false;
    for seed in 0..20 {
        let t = toy(seed, 0.15);
        assert!(t.actor.num_params() + t.log_std.len() <= 50);
        if kink_margin(&t, clip) < 1e-3 {
            continue;
        }
        let s = surrogate_loss_and_grad(&t.actor, &t.log_std, t.obs.view(), t.actions.view(), &t.old_lp, &t.adv, clip, ent);
        saw_clipping |= s.clip_fraction > 0.0;
        let (analytic, numeric) = gradients(&t, clip, ent);
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
        checked += 1;
    }
    assert!(checked >= 10, "{checked}");
    assert!(saw_clipping);
}

#[test]
fn ratio_is_one_before_any_step() {
    let t = toy(3, 0.0);
    let actor = Mlp::from_params(t.actor.sizes(), Activation::Tanh, t.actor.params().to_vec()).unwrap();
    let s = surrogate_loss_and_grad(&actor, &t.log_std, t.obs.view(), t.actions.view(), &t.old_lp, &t.adv, 0.2, 0.0);
    assert!(s.max_ratio_deviation < 1e-12);
    assert_eq!(s.clip_fraction, 0.0);
    let mean_adv = t.adv.iter().sum::<f64>() / t.adv.len() as f64;
    assert!((s.loss + mean_adv).abs() < 1e-12);
}

fn small_batch(agent: &Agent, rng: &mut ChaCha8Rng, n: usize, zero_adv: bool) -> TrainingBatch {
    let obs = randn(rng, n, agent.obs_dim());
    let mean = agent.mean(obs.view());
    let (actions, log_probs) = agent.sample(&mean, rng);
    let values = agent.value(obs.view()).to_vec();
    let advantages = if zero_adv { vec![0.0; n] } else { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let returns = values.iter().zip(&advantages).map(|(v, a)| v + a).collect();
    TrainingBatch {
        obs,
        actions,
        log_probs,
        values,
        returns,
        advantages,
        ..Default::default()
    }
}

fn tiny_spec() -> NetworkSpec {
    NetworkSpec {
        actor_hidden: vec![16, 16],
        critic_hidden: vec![16, 16],
        estimator_hidden: vec![16],
        ..Default::default()
    }
}

#[test]
fn first_epoch_ratio_is_exactly_one_in_ppo_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut agent = Agent::new(&tiny_spec(), 6, 3, None, &mut rng);
    let mut opt = PpoOptimizer::new(&agent, 3e-4);
    let batch = small_batch(&agent, &mut rng, 64, false);
    let stats = ppo_update(&mut agent, &mut opt, &batch, &PpoConfig::default(), &mut rng).unwrap();
    assert!(stats.initial_ratio_deviation < 1e-12);
    assert!(stats.approx_kl.is_finite());
}

#[test]
fn zero_advantage_leaves_the_policy_fixed() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut agent = Agent::new(&tiny_spec(), 6, 3, None, &mut rng);
    let before = agent.clone();
    let mut opt = PpoOptimizer::new(&agent, 1e-3);
    let batch = small_batch(&agent, &mut rng, 64, true);
    let cfg = PpoConfig {
        entropy_coef: 0.0,
        ..Default::default()
    };
    ppo_update(&mut agent, &mut opt, &batch, &cfg, &mut rng).unwrap();
    assert_eq!(agent.actor, before.actor);
    assert_eq!(agent.log_std, before.log_std);
}

#[test]
fn nonzero_advantage_moves_the_policy() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut agent = Agent::new(&tiny_spec(), 6, 3, None, &mut rng);
    let before = agent.clone();
    let mut opt = PpoOptimizer::new(&agent, 1e-3);
    let batch = small_batch(&agent, &mut rng, 64, false);
    ppo_update(&mut agent, &mut opt, &batch, &PpoConfig::default(), &mut rng).unwrap();
    assert_ne!(agent.actor, before.actor);
}

fn dense_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[test]
fn climbing_network_parameter_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let agent = Agent::for_climbing(&NetworkSpec::default(), &mut rng);
    assert_eq!(agent.actor.sizes(), &[OBS_DIM, 256, 128, 64, ACTION_DIM]);
    assert_eq!(agent.actor.num_params(), dense_count(&[85, 256, 128, 64, 16]));
    assert_eq!(agent.actor.num_params(), 64208);
    assert_eq!(agent.critic.num_params(), 63233);
    let est = agent.estimator.as_ref().unwrap();
    assert_eq!(est.sizes(), &[ESTIMATOR_INPUT_DIM, 256, 128, ESTIMATE_DIM]);
    assert_eq!(est.num_params(), 53515);
    assert_eq!(agent.log_std.len(), 16);
    assert_eq!(agent.num_params(), 64208 + 16 + 63233 + 53515);
}

#[test]
fn estimator_loss_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut est = Mlp::orthogonal(&[6, 32, 5], Activation::Tanh, 2f64.sqrt(), 1.0, &mut rng);
    let x = randn(&mut rng, 256, 6);
    // last CONTACT_HEAD columns are probabilities
    let labels = Array2::from_shape_fn((256, 5), |(j, k)| {
        if k < 5 - CONTACT_HEAD {
            0.5 * x[[j, 0]] - 0.3 * x[[j, 1]]
        } else if x[[j, k]] > 0.0 {
            1.0
        } else {
            0.0
        }
    });
    let mut adam = Adam::new(est.num_params(), 3e-3);
    let start = estimator_loss(&est, x.view(), labels.view());
    let losses = fit_estimator(&mut est, &mut adam, x.view(), labels.view(), 40, 32);
    assert!(losses[39] < 0.5 * start, "{start} -> {}", losses[39]);
    assert!(losses[39] < losses[0]);
}

#[test]
fn lqr_toy_improves_for_every_seed() {
    let cfg = PpoConfig {
        rollout_steps: 50,
        ..Default::default()
    };
    for seed in 1..=5 {
        let curve = train_lqr(seed, 60, 8, &cfg).unwrap();
        let early = curve[..10].iter().sum::<f64>() / 10.0;
        let late = curve[50..].iter().sum::<f64>() / 10.0;
        assert!(late > early + 0.1 * early.abs(), "seed {seed}: {early} -> {late}");
    }
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let agent = Agent::new(&tiny_spec(), 7, 3, Some((5, 4 + CONTACT_HEAD)), &mut rng);
    let mut buf = Vec::new();
    agent.write_checkpoint(&mut buf, 1234).unwrap();
    let (back, iter) = Agent::read_checkpoint(&mut buf.as_slice()).unwrap();
    assert_eq!(iter, 1234);
    assert_eq!(back, agent);

    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(Agent::read_checkpoint(&mut bad.as_slice()).is_err());
    let mut flipped = buf.clone();
    flipped[10] ^= 0xff;
    assert!(Agent::read_checkpoint(&mut flipped.as_slice()).is_err());
    assert!(Agent::read_checkpoint(&mut &buf[..buf.len() - 3]).is_err());
}

#[test]
fn actor_forward_validates_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let agent = Agent::new(&tiny_spec(), 4, 2, None, &mut rng);
    assert!(agent.actor_forward(&[0.0; 3]).is_err());
    assert!(agent.actor_forward(&[0.0, f64::NAN, 0.0, 0.0]).is_err());
    let d = agent.actor_forward(&[0.1, 0.2, 0.3, 0.4]).unwrap();
    assert_eq!(d.mean.len(), 2);
}

fn small_training_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.curriculum.scale = 0.001;
    cfg.train.num_envs = 2;
    cfg.ppo.rollout_steps = 10;
    cfg.network = tiny_spec();
    cfg
}

#[test]
fn training_is_deterministic() {
    let cfg = small_training_config();
    let run = || {
        let mut tr = Trainer::new(&cfg, Ablation::Full, 9).unwrap();
        let rows: Vec<String> = (0..3).map(|_| tr.step().unwrap().tsv_row()).collect();
        (rows, tr.agent().clone())
    };
    let (a_rows, a_agent) = run();
    let (b_rows, b_agent) = run();
    assert_eq!(a_rows, b_rows);
    assert_eq!(a_agent, b_agent);
    let mut tr = Trainer::new(&cfg, Ablation::Full, 10).unwrap();
    tr.step().unwrap();
    assert_ne!(tr.agent(), &a_agent);
}

#[test]
fn curve_columns_match_rows() {
    let cfg = small_training_config();
    let mut tr = Trainer::new(&cfg, Ablation::Full, 1).unwrap();
    let row = tr.step().unwrap().tsv_row();
    assert_eq!(row.split('\t').count(), CURVE_COLUMNS.len());
    assert_eq!(IterationStats::tsv_header().split('\t').count(), CURVE_COLUMNS.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gae_matches_recursive_definition(
        rewards in prop::collection::vec(-1.0f64..1.0, 1..30),
        seed in any::<u64>(),
        gamma in 0.5f64..=1.0,
        lambda in 0.5f64..=1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rewards.len();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
        let last = rng.random_range(-1.0..1.0);
        let (adv, ret) = compute_gae(&rewards, &values, &dones, last, gamma, lambda);
        let mut next_adv = 0.0;
        let mut next_v = last;
        for t in (0..n).rev() {
            let live = if dones[t] { 0.0 } else { 1.0 };
            let delta = rewards[t] + gamma * next_v * live - values[t];
            let a = delta + gamma * lambda * live * next_adv;
            prop_assert!((adv[t] - a).abs() < 1e-12);
            prop_assert!((ret[t] - (a + values[t])).abs() < 1e-12);
            next_adv = a;
            next_v = values[t];
        }
    }

    #[test]
    fn log_prob_matches_density(mean in -2.0f64..2.0, log_std in -2.0f64..1.0, a in -3.0f64..3.0) {
        let s = log_std.exp();
        let density = (-(a - mean).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        prop_assert!((gaussian_log_prob(&[mean], &[log_std], &[a]) - density.ln()).abs() < 1e-9);
    }
}
