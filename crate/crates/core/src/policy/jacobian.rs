use nalgebra::{DMatrix, DVector};

use super::net::{Gate, LstmCache, PolicyNet, RecurrentState};
use crate::error::{check_dim, Result};

impl PolicyNet {
    /// Analytic Jacobian of `[h; c] -> [h'; c']` at fixed input `x`.
    /// Entry `(i, j)` is `d out_i / d in_j`.
    pub fn recurrent_jacobian(&self, s: &RecurrentState, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim("LSTM input", self.dims.d_in(), x.len())?;
        check_dim("hidden state", self.dims.n_cells, s.h.len())?;
        check_dim("cell state", self.dims.n_cells, s.c.len())?;
        Ok(self.recurrent_jacobian_unchecked(s, x))
    }

    pub(crate) fn recurrent_jacobian_unchecked(
        &self,
        s: &RecurrentState,
        x: &DVector<f64>,
    ) -> DMatrix<f64> {
        let n = self.dims.n_cells;
        let k = self.lstm_step_cached(x, s);
        let w = &self.lstm.w_hh;

        // Per-row scale factors for each gate's pre-activation.
        let d_i = DVector::from_fn(n, |r, _| k.g[r] * k.i[r] * (1.0 - k.i[r]));
        let d_f = DVector::from_fn(n, |r, _| k.c_prev[r] * k.f[r] * (1.0 - k.f[r]));
        let d_g = DVector::from_fn(n, |r, _| k.i[r] * (1.0 - k.g[r] * k.g[r]));
        let d_o = DVector::from_fn(n, |r, _| k.tanh_c[r] * k.o[r] * (1.0 - k.o[r]));
        let dh_dc_new = DVector::from_fn(n, |r, _| k.o[r] * (1.0 - k.tanh_c[r] * k.tanh_c[r]));

        let ri = self.lstm.rows(Gate::Input).start;
        let rf = self.lstm.rows(Gate::Forget).start;
        let rg = self.lstm.rows(Gate::Cell).start;
        let ro = self.lstm.rows(Gate::Output).start;

        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for r in 0..n {
            for col in 0..n {
                let dc_dh = d_f[r] * w[(rf + r, col)]
                    + d_i[r] * w[(ri + r, col)]
                    + d_g[r] * w[(rg + r, col)];
                jac[(n + r, col)] = dc_dh;
                jac[(r, col)] = d_o[r] * w[(ro + r, col)] + dh_dc_new[r] * dc_dh;
            }
            jac[(n + r, n + r)] = k.f[r];
            jac[(r, n + r)] = dh_dc_new[r] * k.f[r];
        }
        jac
    }
}

impl PolicyNet {
    /// `J^T w` for the recurrent Jacobian at `(s, x)`, without forming `J`.
    /// `w` is a cotangent on `[h'; c']`; the result is on `[h; c]`.
    pub fn recurrent_vjp(
        &self,
        s: &RecurrentState,
        x: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let n = self.dims.n_cells;
        check_dim("cotangent", 2 * n, w.len())?;
        check_dim("LSTM input", self.dims.d_in(), x.len())?;
        check_dim("hidden state", n, s.h.len())?;
        let k = self.lstm_step_cached(x, s);
        Ok(self.recurrent_vjp_cached(&k, w))
    }

    pub(crate) fn recurrent_vjp_cached(&self, k: &LstmCache, w: &DVector<f64>) -> DVector<f64> {
        let n = self.dims.n_cells;
        let mut dz = DVector::zeros(4 * n);
        let mut out = DVector::zeros(2 * n);
        for r in 0..n {
            let wh = w[r];
            let tc = k.tanh_c[r];
            let dc = w[n + r] + wh * k.o[r] * (1.0 - tc * tc);
            dz[r] = dc * k.g[r] * k.i[r] * (1.0 - k.i[r]);
            dz[n + r] = dc * k.c_prev[r] * k.f[r] * (1.0 - k.f[r]);
            dz[2 * n + r] = dc * k.i[r] * (1.0 - k.g[r] * k.g[r]);
            dz[3 * n + r] = wh * tc * k.o[r] * (1.0 - k.o[r]);
            out[n + r] = dc * k.f[r];
        }
        let gh = self.lstm.w_hh.tr_mul(&dz);
        out.rows_mut(0, n).copy_from(&gh);
        out
    }
}
