use std::f64::consts::{FRAC_PI_2, TAU};

use epmclimb_core::reward::RewardInputs;
use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Straight transcription of the reward table, term by term.
pub fn table_reward(inp: &RewardInputs, t: u64) -> [f64; 17] {
    let kappa = 0.99975f64.powi((t as i64 - 1200).max(0) as i32);
    let vs = 1.5 - 0.5 * kappa;
    let ps = 0.5 + 0.5 * kappa;
    let smooth = t >= 1000;
    let v_des_zero = inp.command == [0.0, 0.0, 0.0];
    let swing = |phi: f64| phi > 0.0 && phi < FRAC_PI_2;

    let lv = vs
        * 3.0
        * (-5.0 * ((inp.command[0] - inp.base_lin_vel[0]).powi(2) + (inp.command[1] - inp.base_lin_vel[1]).powi(2)))
            .exp();
    let av = vs * 3.0 * (-5.0 * (inp.command[2] - inp.base_ang_vel[2]).powi(2)).exp();
    let mut sc = 0.0;
    let mut g = 0.0;
    let mut fh_arg = 0.0;
    let mut fs = 0.0;
    let mut fc = 0.0;
    let mut am = 0.0;
    for i in 0..4 {
        let c = if inp.contacts[i] { 1.0 } else { 0.0 };
        let f = if swing(inp.phases[i]) { 1.0 } else { 0.0 };
        let p_des = if f == 1.0 { 0.08 } else { 0.0 };
        sc += if inp.contacts[i] && v_des_zero { 1.0 } else { -1.0 };
        // +1 when the foot is in the air during swing or down during stance
        g += if (f == 1.0 && c == 0.0) || (f == 0.0 && c == 1.0) { 1.0 } else { -1.0 };
        fh_arg += f * (p_des - inp.foot_heights[i]).powi(2);
        fs += c * (inp.foot_vel[i][0].powi(2) + inp.foot_vel[i][1].powi(2));
        fc += (1.0 - c) * (p_des - inp.foot_heights[i]).powi(2) * inp.foot_vel[i][2].abs().powf(0.5);
        am += (c - inp.magnet_actions[i]).powi(2);
    }
    let bz = Vector3::from(inp.body_z);
    let rz = Vector3::from(inp.reference_z);
    let o = 3.0 * bz.cross(&rz).norm().atan2(bz.dot(&rz));
    let sumsq = |v: &[f64]| v.iter().map(|x| x.powi(2)).sum::<f64>();
    let tau = ps * 0.003 * sumsq(&inp.torques);
    let alpha = if v_des_zero { 3.0 } else { 0.75 };
    let jp = alpha * (0..12).map(|j| (inp.joint_pos[j] - inp.nominal_joint_pos[j]).powi(2)).sum::<f64>();
    let js = 0.003 * sumsq(&inp.joint_vel);
    let ja = 0.003 * sumsq(&inp.joint_acc);
    let (as1, as2) = if smooth {
        (
            2.5 * (0..16).map(|k| (inp.action[k] - inp.prev_action[k]).powi(2)).sum::<f64>(),
            1.2 * (0..16)
                .map(|k| (inp.action[k] - 2.0 * inp.prev_action[k] + inp.prev_prev_action[k]).powi(2))
                .sum::<f64>(),
        )
    } else {
        (0.0, 0.0)
    };
    let bm = 3.0
        * (-0.5 * (inp.base_ang_vel[0].powi(2) + inp.base_ang_vel[1].powi(2)) + 0.2 * inp.base_lin_vel[2].abs()).exp();
    let am = 0.15 * am;
    let positive = lv + av + 0.5 * sc + 0.5 * g + 0.5 * (-fh_arg).exp();
    let penalty = ps * 0.5 * fs + 140.0 * fc + o + tau + jp + js + ja + as1 + as2 + bm + am;
    let total = positive * (-0.2 * penalty).exp();
    [
        lv,
        av,
        0.5 * sc,
        0.5 * g,
        0.5 * (-fh_arg).exp(),
        ps * 0.5 * fs,
        140.0 * fc,
        o,
        tau,
        jp,
        js,
        ja,
        as1,
        as2,
        bm,
        am,
        total,
    ]
}

pub fn random_inputs(rng: &mut ChaCha8Rng) -> RewardInputs {
    let mut u = |s: f64| rng.random_range(-s..s);
    let command = [u(0.3), u(0.3), u(0.3)];
    let command = if u(1.0) > 0.6 { [0.0; 3] } else { command };
    let unit = |v: [f64; 3]| {
        let n = Vector3::from(v).normalize();
        [n.x, n.y, n.z]
    };
    let mut inp = RewardInputs {
        command,
        base_lin_vel: [u(0.4), u(0.4), u(0.1)],
        base_ang_vel: [u(0.3), u(0.3), u(0.5)],
        phases: [0.0; 4],
        foot_heights: [0.0; 4],
        foot_vel: [[0.0; 3]; 4],
        contacts: [false; 4],
        torques: [0.0; 12],
        joint_pos: [0.0; 12],
        joint_vel: [0.0; 12],
        joint_acc: [0.0; 12],
        nominal_joint_pos: [0.0; 12],
        action: [0.0; 16],
        prev_action: [0.0; 16],
        prev_prev_action: [0.0; 16],
        magnet_actions: [0.0; 4],
        body_z: unit([u(0.2), u(0.2), 1.0]),
        reference_z: [0.0, 0.0, 1.0],
    };
    for i in 0..4 {
        inp.phases[i] = u(TAU).abs();
        inp.foot_heights[i] = u(0.1).abs();
        inp.foot_vel[i] = [u(0.3), u(0.3), u(0.3)];
        inp.contacts[i] = u(1.0) > 0.0;
        inp.magnet_actions[i] = u(1.0).abs();
    }
    for j in 0..12 {
        inp.torques[j] = u(3.0);
        inp.joint_pos[j] = u(1.0);
        inp.nominal_joint_pos[j] = inp.joint_pos[j] + u(0.1);
        inp.joint_vel[j] = u(2.0);
        inp.joint_acc[j] = u(10.0);
    }
    for k in 0..16 {
        inp.action[k] = u(0.2);
        inp.prev_action[k] = inp.action[k] + u(0.05);
        inp.prev_prev_action[k] = inp.prev_action[k] + u(0.05);
    }
    inp
}
