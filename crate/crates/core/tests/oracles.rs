mod common;

use common::*;
use gaitscope::policy::RecurrentState;
use gaitscope::train::{sequence_gradients, tbptt_gradients, Window};
use nalgebra::DVector;

#[test]
fn lstm_matches_scalar_loops() {
    for case in 0..50u64 {
        let n = 1 + (case as usize % 6);
        let net = random_net(small_dims(n), case, 1.5);
        let mut r = rng(case);
        let x = random_vec(&mut r, 6, -1.0, 1.0);
        let s = RecurrentState {
            h: random_vec(&mut r, n, -1.0, 1.0),
            c: random_vec(&mut r, n, -2.0, 2.0),
        };
        let next = net.lstm_step(&x, &s).unwrap();
        let (h, c) = scalar_lstm(&net, x.as_slice(), s.h.as_slice(), s.c.as_slice());
        for j in 0..n {
            assert!((next.h[j] - h[j]).abs() < 1e-14, "case {case} h[{j}]");
            assert!((next.c[j] - c[j]).abs() < 1e-14, "case {case} c[{j}]");
        }
    }
}

#[test]
fn mlp_matches_layer_by_layer_loops() {
    for case in 0..50u64 {
        let net = random_net(small_dims(3), case, 1.0);
        let obs = random_vec(&mut rng(case + 1000), 5, -2.0, 2.0);
        let a = net.mlp_forward(&obs).unwrap();
        let b = scalar_mlp(&net, obs.as_slice());
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
    }
}

#[test]
fn policy_step_composes_encoder_lstm_and_head() {
    let net = random_net(small_dims(4), 7, 1.0);
    let obs = random_vec(&mut rng(7), 5, -1.0, 1.0);
    let s = net.zero_state();
    let (a, next) = net.policy_step(&obs, &s).unwrap();
    let x = DVector::from_vec(scalar_mlp(&net, obs.as_slice()));
    let (h, _) = scalar_lstm(&net, x.as_slice(), s.h.as_slice(), s.c.as_slice());
    let expected = &net.fc.w * DVector::from_vec(h) + &net.fc.b;
    assert!((a.0 - expected).amax() < 1e-14);
    assert_eq!(next, net.lstm_step(&x, &s).unwrap());
}

/// Analytic recurrent Jacobians against central differences, 100 cases.
#[test]
fn recurrent_jacobian_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let net = random_net(small_dims(4), 500 + case, 1.5);
        let mut r = rng(case);
        let x = random_vec(&mut r, 6, -1.0, 1.0);
        let s = RecurrentState {
            h: random_vec(&mut r, 4, -1.0, 1.0),
            c: random_vec(&mut r, 4, -1.5, 1.5),
        };
        let analytic = net.recurrent_jacobian(&s, &x).unwrap();
        let fd = fd_jacobian(&net, &s.to_flat(), &x, 1e-6);
        let abs = (&analytic - &fd).amax();
        assert!(abs < 1e-6, "case {case}: max-abs error {abs:e}");
        let rel = abs / fd.amax();
        worst = worst.max(rel);
        assert!(rel < 1e-5, "case {case}: relative error {rel:e}");
    }
    eprintln!("worst Jacobian relative error {worst:e}");
}

/// Every TBPTT weight gradient against central differences of the window
/// loss, 100 random 4-cell cases.
#[test]
fn tbptt_gradients_match_finite_differences() {
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let mut net = random_net(small_dims(4), 900 + case, 1.0);
        let k = 1 + (case as usize % 8);
        let w = random_window(case, 4, k);
        let analytic = tbptt_gradients(&net, &w).unwrap();
        assert!((analytic.loss - window_loss(&net, &w)).abs() < 1e-13);
        let g = analytic.grads.params_flat();
        let base = net.params_flat();
        let mut fd = vec![0.0; base.len()];
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += eps;
            net.set_params_flat(&p).unwrap();
            let up = window_loss(&net, &w);
            p[i] -= 2.0 * eps;
            net.set_params_flat(&p).unwrap();
            let down = window_loss(&net, &w);
            fd[i] = (up - down) / (2.0 * eps);
        }
        net.set_params_flat(&base).unwrap();
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = g
            .iter()
            .zip(&fd)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let rel = err / scale;
        worst = worst.max(rel);
        assert!(rel < 1e-5, "case {case} (k={k}): relative error {rel:e}");
    }
    eprintln!("worst TBPTT gradient relative error {worst:e}");
}

#[test]
fn observation_gradients_match_finite_differences() {
    let net = random_net(small_dims(4), 31, 1.0);
    let w = random_window(31, 4, 6);
    let analytic = tbptt_gradients(&net, &w).unwrap();
    let eps = 1e-6;
    for t in 0..w.len() {
        for k in 0..5 {
            let mut up = w.clone();
            up.obs[t][k] += eps;
            let mut down = w.clone();
            down.obs[t][k] -= eps;
            let fd = (window_loss(&net, &up) - window_loss(&net, &down)) / (2.0 * eps);
            assert!((analytic.d_obs[t][k] - fd).abs() < 1e-8, "obs {t}/{k}");
        }
    }
}

#[test]
fn sequence_windows_carry_state_but_not_gradient() {
    let net = random_net(small_dims(3), 2, 1.0);
    let w = random_window(2, 3, 12);
    let parts = sequence_gradients(&net, &w.state0, &w.obs, &w.targets, 4).unwrap();
    assert_eq!(parts.len(), 3);
    let mut s = w.state0.clone();
    for (i, part) in parts.iter().enumerate() {
        let sub = Window {
            state0: s.clone(),
            obs: w.obs[4 * i..4 * i + 4].to_vec(),
            targets: w.targets[4 * i..4 * i + 4].to_vec(),
        };
        let direct = tbptt_gradients(&net, &sub).unwrap();
        assert_eq!(direct.grads, part.grads);
        s = direct.final_state;
    }
}
