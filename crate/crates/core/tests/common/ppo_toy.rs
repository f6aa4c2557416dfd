use epmclimb_core::learning::nn::{Activation, Mlp};
use epmclimb_core::learning::{gaussian_log_prob, surrogate_loss_and_grad};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal))
}

pub struct Toy {
    pub actor: Mlp,
    pub log_std: Vec<f64>,
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub old_lp: Vec<f64>,
    pub adv: Vec<f64>,
}

/// 2-4-2 tanh actor: 22 weights plus 2 log-stds.
pub fn toy(seed: u64, drift: f64) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let old = Mlp::orthogonal(&[2, 4, 2], Activation::Tanh, 1.4, 1.0, &mut rng);
    let old_std: Vec<f64> = vec![-0.3, 0.2];
    let obs = randn(&mut rng, 12, 2);
    let mean = old.forward(obs.view());
    let mut actions = Array2::zeros((12, 2));
    let mut old_lp = Vec::new();
    for j in 0..12 {
        for k in 0..2 {
            actions[[j, k]] = mean[[j, k]] + old_std[k].exp() * rng.sample::<f64, _>(StandardNormal);
        }
        old_lp.push(gaussian_log_prob(
            mean.row(j).as_slice().unwrap(),
            &old_std,
            actions.row(j).as_slice().unwrap(),
        ));
    }
    let adv: Vec<f64> = (0..12).map(|_| rng.sample(StandardNormal)).collect();
    let mut actor = old.clone();
    for p in actor.params_mut() {
        *p += drift * rng.sample::<f64, _>(StandardNormal);
    }
    let log_std = old_std.iter().map(|s| s + drift * rng.sample::<f64, _>(StandardNormal)).collect();
    Toy {
        actor,
        log_std,
        obs,
        actions,
        old_lp,
        adv,
    }
}

pub fn loss_at(t: &Toy, params: &[f64], log_std: &[f64], clip: f64, ent: f64) -> f64 {
    let actor = Mlp::from_params(t.actor.sizes(), Activation::Tanh, params.to_vec()).unwrap();
    surrogate_loss_and_grad(&actor, log_std, t.obs.view(), t.actions.view(), &t.old_lp, &t.adv, clip, ent).loss
}

/// Worst distance of any ratio from a clip edge; finite differences are only
/// meaningful away from the kinks.
pub fn kink_margin(t: &Toy, clip: f64) -> f64 {
    let mean = t.actor.forward(t.obs.view());
    (0..12)
        .map(|j| {
            let lp = gaussian_log_prob(mean.row(j).as_slice().unwrap(), &t.log_std, t.actions.row(j).as_slice().unwrap());
            let r = (lp - t.old_lp[j]).exp();
            (r - (1.0 - clip)).abs().min((r - (1.0 + clip)).abs())
        })
        .fold(f64::INFINITY, f64::min)
}

/// Analytic and central-difference gradients over actor weights and log-stds.
pub fn gradients(t: &Toy, clip: f64, ent: f64) -> (Vec<f64>, Vec<f64>) {
    let s = surrogate_loss_and_grad(&t.actor, &t.log_std, t.obs.view(), t.actions.view(), &t.old_lp, &t.adv, clip, ent);
    let mut analytic = s.grad_actor;
    analytic.extend_from_slice(&s.grad_log_std);
    let base: Vec<f64> = t.actor.params().iter().chain(&t.log_std).copied().collect();
    let na = t.actor.num_params();
    let h = 1e-6;
    let numeric = (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] += h;
            let up = loss_at(t, &p[..na], &p[na..], clip, ent);
            p[i] -= 2.0 * h;
            let down = loss_at(t, &p[..na], &p[na..], clip, ent);
            (up - down) / (2.0 * h)
        })
        .collect();
    (analytic, numeric)
}

/// Largest elementwise relative error, with a floor tied to the gradient norm
/// so near-zero entries do not dominate.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(1e-2 * scale))
        .fold(0.0, f64::max)
}
