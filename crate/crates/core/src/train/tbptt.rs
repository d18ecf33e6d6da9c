use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::policy::{LstmCache, PolicyNet, RecurrentState};

/// One truncation window: the state entering it is treated as a constant.
#[derive(Debug, Clone)]
pub struct Window {
    pub state0: RecurrentState,
    pub obs: Vec<DVector<f64>>,
    pub targets: Vec<DVector<f64>>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct WindowGradients {
    /// Window MSE, averaged over steps and action dimensions.
    pub loss: f64,
    /// Gradient of `loss`, shaped like the network.
    pub grads: PolicyNet,
    /// Gradient of `loss` with respect to each window observation.
    pub d_obs: Vec<DVector<f64>>,
    /// Recurrent state after the last window step.
    pub final_state: RecurrentState,
}

struct StepTape {
    /// Input followed by each MLP activation.
    mlp_acts: Vec<DVector<f64>>,
    lstm: LstmCache,
    residual: DVector<f64>,
}

/// Exact gradients of the window MSE by reverse accumulation through the
/// action head, the LSTM (within the window only), and the MLP encoder.
pub fn tbptt_gradients(net: &PolicyNet, window: &Window) -> Result<WindowGradients> {
    let k = window.len();
    if k == 0 {
        return Err(Error::Config("empty BPTT window".into()));
    }
    check_dim("window targets", k, window.targets.len())?;
    check_dim("window state", net.dims.n_cells, window.state0.n_cells())?;
    for (o, y) in window.obs.iter().zip(&window.targets) {
        check_dim("observation", net.dims.d_obs, o.len())?;
        check_dim("target action", net.dims.d_act, y.len())?;
    }

    let scale = 2.0 / (k * net.dims.d_act) as f64;
    let mut tape = Vec::with_capacity(k);
    let mut state = window.state0.clone();
    let mut sq = 0.0;
    for (obs, target) in window.obs.iter().zip(&window.targets) {
        let mut acts = Vec::with_capacity(net.mlp.len() + 1);
        acts.push(obs.clone());
        for layer in &net.mlp {
            let next = layer.apply(acts.last().unwrap()).map(f64::tanh);
            acts.push(next);
        }
        let cache = net.lstm_step_cached(acts.last().unwrap(), &state);
        let y = net.fc.apply(&cache.h);
        let residual = y - target;
        sq += residual.norm_squared();
        state = RecurrentState {
            h: cache.h.clone(),
            c: cache.c.clone(),
        };
        tape.push(StepTape {
            mlp_acts: acts,
            lstm: cache,
            residual,
        });
    }
    let loss = sq / (k * net.dims.d_act) as f64;

    let mut grads = PolicyNet::zeros(net.dims.clone())?;
    let mut d_obs = vec![DVector::zeros(net.dims.d_obs); k];
    let n = net.dims.n_cells;
    let mut dh_next: DVector<f64> = DVector::zeros(n);
    let mut dc_next: DVector<f64> = DVector::zeros(n);
    let mut dz: DVector<f64> = DVector::zeros(4 * n);

    for t in (0..k).rev() {
        let step = &tape[t];
        let c = &step.lstm;
        let dy = &step.residual * scale;
        grads.fc.w.ger(1.0, &dy, &c.h, 1.0);
        grads.fc.b += &dy;

        let dh = net.fc.w.tr_mul(&dy) + &dh_next;
        for r in 0..n {
            let tc = c.tanh_c[r];
            let dc = dc_next[r] + dh[r] * c.o[r] * (1.0 - tc * tc);
            dz[r] = dc * c.g[r] * c.i[r] * (1.0 - c.i[r]);
            dz[n + r] = dc * c.c_prev[r] * c.f[r] * (1.0 - c.f[r]);
            dz[2 * n + r] = dc * c.i[r] * (1.0 - c.g[r] * c.g[r]);
            dz[3 * n + r] = dh[r] * tc * c.o[r] * (1.0 - c.o[r]);
            dc_next[r] = dc * c.f[r];
        }
        grads.lstm.w_ih.ger(1.0, &dz, &c.x, 1.0);
        grads.lstm.w_hh.ger(1.0, &dz, &c.h_prev, 1.0);
        grads.lstm.b += &dz;
        dh_next = net.lstm.w_hh.tr_mul(&dz);

        let mut da = net.lstm.w_ih.tr_mul(&dz);
        for l in (0..net.mlp.len()).rev() {
            let out = &step.mlp_acts[l + 1];
            let dpre = da.zip_map(out, |d, a| d * (1.0 - a * a));
            grads.mlp[l].w.ger(1.0, &dpre, &step.mlp_acts[l], 1.0);
            grads.mlp[l].b += &dpre;
            da = net.mlp[l].w.tr_mul(&dpre);
        }
        d_obs[t] = da;
    }

    Ok(WindowGradients {
        loss,
        grads,
        d_obs,
        final_state: state,
    })
}

/// Splits a sequence into consecutive windows of `k_trunc` steps (the last
/// may be shorter), runs the network forward across boundaries, and
/// returns each window's gradients. Gradients never cross a boundary.
pub fn sequence_gradients(
    net: &PolicyNet,
    state0: &RecurrentState,
    obs: &[DVector<f64>],
    targets: &[DVector<f64>],
    k_trunc: usize,
) -> Result<Vec<WindowGradients>> {
    if k_trunc == 0 {
        return Err(Error::Config("k_trunc must be at least 1".into()));
    }
    check_dim("sequence targets", obs.len(), targets.len())?;
    let mut out = Vec::with_capacity(obs.len().div_ceil(k_trunc));
    let mut state = state0.clone();
    for (o, y) in obs.chunks(k_trunc).zip(targets.chunks(k_trunc)) {
        let window = Window {
            state0: state,
            obs: o.to_vec(),
            targets: y.to_vec(),
        };
        let g = tbptt_gradients(net, &window)?;
        state = g.final_state.clone();
        out.push(g);
    }
    Ok(out)
}
