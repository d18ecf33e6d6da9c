#![allow(dead_code)]

use gaitscope::policy::{Dims, PolicyNet, RecurrentState};
use gaitscope::seed::{rng_for, Rng};
use gaitscope::train::Window;
use nalgebra::{DMatrix, DVector};
use rand::{Rng as _, SeedableRng};

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn small_dims(n_cells: usize) -> Dims {
    Dims {
        d_obs: 5,
        mlp_widths: vec![6],
        n_cells,
        d_act: 3,
    }
}

/// Random network with every parameter multiplied by `scale`.
pub fn random_net(dims: Dims, seed: u64, scale: f64) -> PolicyNet {
    let mut net = PolicyNet::random(dims, &mut rng_for(seed, 100, 0)).unwrap();
    let p: Vec<f64> = net.params_flat().iter().map(|v| v * scale).collect();
    net.set_params_flat(&p).unwrap();
    net
}

pub fn zero_biases(net: &mut PolicyNet) {
    for layer in &mut net.mlp {
        layer.b.fill(0.0);
    }
    net.lstm.b.fill(0.0);
    net.fc.b.fill(0.0);
}

pub fn random_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Element-by-element LSTM step written with explicit loops.
pub fn scalar_lstm(net: &PolicyNet, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let pre = |row: usize| {
        let mut z = net.lstm.b[row];
        for (k, xk) in x.iter().enumerate() {
            z += net.lstm.w_ih[(row, k)] * xk;
        }
        for (k, hk) in h.iter().enumerate() {
            z += net.lstm.w_hh[(row, k)] * hk;
        }
        z
    };
    let mut h_new = vec![0.0; n];
    let mut c_new = vec![0.0; n];
    for j in 0..n {
        let i = sig(pre(j));
        let f = sig(pre(n + j));
        let g = pre(2 * n + j).tanh();
        let o = sig(pre(3 * n + j));
        c_new[j] = f * c[j] + i * g;
        h_new[j] = o * c_new[j].tanh();
    }
    (h_new, c_new)
}

pub fn scalar_mlp(net: &PolicyNet, obs: &[f64]) -> Vec<f64> {
    let mut a = obs.to_vec();
    for layer in &net.mlp {
        let mut next = vec![0.0; layer.b.len()];
        for (r, out) in next.iter_mut().enumerate() {
            let mut z = layer.b[r];
            for (k, ak) in a.iter().enumerate() {
                z += layer.w[(r, k)] * ak;
            }
            *out = z.tanh();
        }
        a = next;
    }
    a
}

/// Central-difference Jacobian of the recurrent map.
pub fn fd_jacobian(net: &PolicyNet, s: &DVector<f64>, x: &DVector<f64>, eps: f64) -> DMatrix<f64> {
    let n = s.len();
    let mut j = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut sp = s.clone();
        let mut sm = s.clone();
        sp[k] += eps;
        sm[k] -= eps;
        let col = (net.recurrent_map(&sp, x) - net.recurrent_map(&sm, x)) / (2.0 * eps);
        j.set_column(k, &col);
    }
    j
}

pub fn residual(net: &PolicyNet, s: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    net.recurrent_map(s, x) - s
}

pub fn q(net: &PolicyNet, s: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * residual(net, s, x).norm_squared()
}

/// Gauss-Newton on `F(s) - s = 0` with a finite-difference Jacobian and a
/// backtracking step.
pub fn refine(net: &PolicyNet, s0: &DVector<f64>, x: &DVector<f64>, iters: usize) -> DVector<f64> {
    let n = s0.len();
    let mut s = s0.clone();
    for _ in 0..iters {
        let r = residual(net, &s, x);
        let q0 = 0.5 * r.norm_squared();
        if q0 < 1e-28 {
            break;
        }
        let jr = fd_jacobian(net, &s, x, 1e-7) - DMatrix::identity(n, n);
        let Some(step) = jr.clone().lu().solve(&r) else {
            break;
        };
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-6 {
            let cand = &s - &step * t;
            if q(net, &cand, x) < q0 {
                s = cand;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    s
}

/// Dense scan of q over [-1,1]^4 for a 2-cell net. Returns refined fixed
/// points reached from every strict-or-flat grid local minimum.
///
/// q separates as A0(h, c0) + A1(h, c1) for fixed h, so a 4-D minimum must be
/// a 1-D minimum of each A_j along its own c axis. That filter keeps the full
/// 80-neighbour check cheap.
pub fn grid_scan_fixed_points(
    net: &PolicyNet,
    x: &DVector<f64>,
    res: f64,
    q_tol: f64,
) -> Vec<DVector<f64>> {
    assert_eq!(net.dims.state_len(), 4);
    let m = (2.0 / res).round() as usize + 1;
    let coord = |i: usize| -1.0 + res * i as f64;
    let drive = &net.lstm.w_ih * x + &net.lstm.b;
    let w = &net.lstm.w_hh;
    // a[j][(hb * m + ha) * m + cj] for cell j.
    let mut a = [vec![0.0; m * m * m], vec![0.0; m * m * m]];
    for ha in 0..m {
        for hb in 0..m {
            let h = [coord(ha), coord(hb)];
            let pre = |row: usize| drive[row] + w[(row, 0)] * h[0] + w[(row, 1)] * h[1];
            for (j, aj) in a.iter_mut().enumerate() {
                let i = sig(pre(j));
                let f = sig(pre(2 + j));
                let g = pre(4 + j).tanh();
                let o = sig(pre(6 + j));
                for ci in 0..m {
                    let c = coord(ci);
                    let cn = f * c + i * g;
                    let hn = o * cn.tanh();
                    aj[(hb * m + ha) * m + ci] = 0.5 * ((hn - h[j]).powi(2) + (cn - c).powi(2));
                }
            }
        }
    }
    let qv = |ha: usize, hb: usize, c0: usize, c1: usize| {
        a[0][(hb * m + ha) * m + c0] + a[1][(hb * m + ha) * m + c1]
    };
    let is_1d_min = |aj: &[f64], base: usize, ci: usize| {
        aj[base + ci] <= aj[base + ci - 1] && aj[base + ci] <= aj[base + ci + 1]
    };
    let mut found: Vec<DVector<f64>> = Vec::new();
    for ha in 1..m - 1 {
        for hb in 1..m - 1 {
            let base = (hb * m + ha) * m;
            let c0s: Vec<usize> = (1..m - 1).filter(|&c| is_1d_min(&a[0], base, c)).collect();
            let c1s: Vec<usize> = (1..m - 1).filter(|&c| is_1d_min(&a[1], base, c)).collect();
            for &c0 in &c0s {
                for &c1 in &c1s {
                    let v = qv(ha, hb, c0, c1);
                    let mut is_min = true;
                    'nb: for da in 0..3 {
                        for db in 0..3 {
                            for dc in 0..3 {
                                for dd in 0..3 {
                                    if qv(ha + da - 1, hb + db - 1, c0 + dc - 1, c1 + dd - 1) < v {
                                        is_min = false;
                                        break 'nb;
                                    }
                                }
                            }
                        }
                    }
                    if is_min {
                        let s0 =
                            DVector::from_vec(vec![coord(ha), coord(hb), coord(c0), coord(c1)]);
                        let s = refine(net, &s0, x, 60);
                        if q(net, &s, x) < q_tol && !found.iter().any(|f| (f - &s).norm() < 1e-6) {
                            found.push(s);
                        }
                    }
                }
            }
        }
    }
    found
}

pub fn window_loss(net: &PolicyNet, w: &Window) -> f64 {
    let mut s = w.state0.clone();
    let mut sq = 0.0;
    for (o, y) in w.obs.iter().zip(&w.targets) {
        let (a, next) = net.policy_step(o, &s).unwrap();
        sq += (a.0 - y).norm_squared();
        s = next;
    }
    sq / (w.len() * net.dims.d_act) as f64
}

pub fn random_window(seed: u64, n: usize, k: usize) -> Window {
    let mut r = rng(seed);
    Window {
        state0: RecurrentState {
            h: random_vec(&mut r, n, -0.5, 0.5),
            c: random_vec(&mut r, n, -0.5, 0.5),
        },
        obs: (0..k).map(|_| random_vec(&mut r, 5, -1.0, 1.0)).collect(),
        targets: (0..k).map(|_| random_vec(&mut r, 3, -1.0, 1.0)).collect(),
    }
}
