use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::seed::Rng;

/// Network dimensions. The LSTM input width is the last MLP width
/// (or `d_obs` when the MLP is empty).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub d_obs: usize,
    pub mlp_widths: Vec<usize>,
    pub n_cells: usize,
    pub d_act: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            d_obs: 12,
            mlp_widths: vec![32, 24],
            n_cells: 32,
            d_act: 4,
        }
    }
}

impl Dims {
    pub fn d_in(&self) -> usize {
        self.mlp_widths.last().copied().unwrap_or(self.d_obs)
    }

    /// Length of the concatenated `[h; c]` state.
    pub fn state_len(&self) -> usize {
        2 * self.n_cells
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_obs == 0 || self.n_cells == 0 || self.d_act == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        if self.mlp_widths.contains(&0) {
            return Err(Error::Config("MLP widths must be positive".into()));
        }
        Ok(())
    }
}

/// Affine layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Dense {
    pub fn zeros(d_out: usize, d_in: usize) -> Self {
        Dense {
            w: DMatrix::zeros(d_out, d_in),
            b: DVector::zeros(d_out),
        }
    }

    fn uniform(d_out: usize, d_in: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        Dense {
            w: DMatrix::from_fn(d_out, d_in, |_, _| rng.random_range(-bound..bound)),
            b: DVector::from_fn(d_out, |_, _| rng.random_range(-bound..bound)),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.w * x + &self.b
    }

    pub fn d_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w.nrows()
    }
}

/// Gate blocks are stacked in the order input, forget, cell, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

/// Single-layer LSTM weights. Each matrix stacks the four gate blocks
/// row-wise, `n` rows per gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w_ih: DMatrix<f64>,
    pub w_hh: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Lstm {
    pub fn zeros(n: usize, d_in: usize) -> Self {
        Lstm {
            w_ih: DMatrix::zeros(4 * n, d_in),
            w_hh: DMatrix::zeros(4 * n, n),
            b: DVector::zeros(4 * n),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn d_in(&self) -> usize {
        self.w_ih.ncols()
    }

    /// Row range of one gate block.
    pub fn rows(&self, gate: Gate) -> std::ops::Range<usize> {
        let n = self.n_cells();
        let k = gate as usize;
        k * n..(k + 1) * n
    }
}

/// The recurrent state. Its flat form is always `[h; c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub h: DVector<f64>,
    pub c: DVector<f64>,
}

impl RecurrentState {
    pub fn zeros(n: usize) -> Self {
        RecurrentState {
            h: DVector::zeros(n),
            c: DVector::zeros(n),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.h.len()
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let n = self.n_cells();
        DVector::from_fn(2 * n, |i, _| if i < n { self.h[i] } else { self.c[i - n] })
    }

    pub fn from_flat(s: &DVector<f64>) -> Result<Self> {
        if !s.len().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "flat recurrent state must have even length, got {}",
                s.len()
            )));
        }
        let n = s.len() / 2;
        Ok(RecurrentState {
            h: s.rows(0, n).into_owned(),
            c: s.rows(n, n).into_owned(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().chain(self.c.iter()).all(|v| v.is_finite())
    }
}

/// Torque command vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Action(pub DVector<f64>);

impl Action {
    pub fn zeros(d_act: usize) -> Self {
        Action(DVector::zeros(d_act))
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate activations and outputs of one LSTM step, kept for backprop and
/// Jacobians.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub x: DVector<f64>,
    pub h_prev: DVector<f64>,
    pub c_prev: DVector<f64>,
    pub i: DVector<f64>,
    pub f: DVector<f64>,
    pub g: DVector<f64>,
    pub o: DVector<f64>,
    pub c: DVector<f64>,
    pub tanh_c: DVector<f64>,
    pub h: DVector<f64>,
}

/// MLP encoder → LSTM → affine action head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub dims: Dims,
    pub mlp: Vec<Dense>,
    pub lstm: Lstm,
    pub fc: Dense,
}

impl PolicyNet {
    pub fn zeros(dims: Dims) -> Result<Self> {
        dims.validate()?;
        let mut mlp = Vec::with_capacity(dims.mlp_widths.len());
        let mut d_prev = dims.d_obs;
        for &w in &dims.mlp_widths {
            mlp.push(Dense::zeros(w, d_prev));
            d_prev = w;
        }
        let lstm = Lstm::zeros(dims.n_cells, d_prev);
        let fc = Dense::zeros(dims.d_act, dims.n_cells);
        Ok(PolicyNet {
            dims,
            mlp,
            lstm,
            fc,
        })
    }

    /// Uniform `±1/sqrt(fan_in)` initialization for every weight and bias,
    /// forget-gate bias offset by +1.
    pub fn random(dims: Dims, rng: &mut Rng) -> Result<Self> {
        dims.validate()?;
        let mut mlp = Vec::with_capacity(dims.mlp_widths.len());
        let mut d_prev = dims.d_obs;
        for &w in &dims.mlp_widths {
            mlp.push(Dense::uniform(w, d_prev, rng));
            d_prev = w;
        }
        let n = dims.n_cells;
        let bound = 1.0 / (n as f64).sqrt();
        let mut lstm = Lstm {
            w_ih: DMatrix::from_fn(4 * n, d_prev, |_, _| rng.random_range(-bound..bound)),
            w_hh: DMatrix::from_fn(4 * n, n, |_, _| rng.random_range(-bound..bound)),
            b: DVector::from_fn(4 * n, |_, _| rng.random_range(-bound..bound)),
        };
        for r in lstm.rows(Gate::Forget) {
            lstm.b[r] += 1.0;
        }
        let fc = Dense::uniform(dims.d_act, n, rng);
        Ok(PolicyNet {
            dims,
            mlp,
            lstm,
            fc,
        })
    }

    /// Checks every weight shape against `dims`.
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        check_dim(
            "MLP layer count",
            self.dims.mlp_widths.len(),
            self.mlp.len(),
        )?;
        let mut d_prev = self.dims.d_obs;
        for (layer, &width) in self.mlp.iter().zip(&self.dims.mlp_widths) {
            check_dim("MLP weight rows", width, layer.w.nrows())?;
            check_dim("MLP weight cols", d_prev, layer.w.ncols())?;
            check_dim("MLP bias", width, layer.b.len())?;
            d_prev = width;
        }
        let n = self.dims.n_cells;
        check_dim("LSTM w_ih rows", 4 * n, self.lstm.w_ih.nrows())?;
        check_dim("LSTM w_ih cols", d_prev, self.lstm.w_ih.ncols())?;
        check_dim("LSTM w_hh rows", 4 * n, self.lstm.w_hh.nrows())?;
        check_dim("LSTM w_hh cols", n, self.lstm.w_hh.ncols())?;
        check_dim("LSTM bias", 4 * n, self.lstm.b.len())?;
        check_dim("FC weight rows", self.dims.d_act, self.fc.w.nrows())?;
        check_dim("FC weight cols", n, self.fc.w.ncols())?;
        check_dim("FC bias", self.dims.d_act, self.fc.b.len())?;
        Ok(())
    }

    /// MLP encoder with tanh after every layer.
    pub fn mlp_forward(&self, obs: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("observation", self.dims.d_obs, obs.len())?;
        Ok(self.mlp_forward_unchecked(obs))
    }

    pub(crate) fn mlp_forward_unchecked(&self, obs: &DVector<f64>) -> DVector<f64> {
        let mut a = obs.clone();
        for layer in &self.mlp {
            a = layer.apply(&a).map(f64::tanh);
        }
        a
    }

    pub fn lstm_step(&self, x: &DVector<f64>, s: &RecurrentState) -> Result<RecurrentState> {
        check_dim("LSTM input", self.dims.d_in(), x.len())?;
        check_dim("hidden state", self.dims.n_cells, s.h.len())?;
        check_dim("cell state", self.dims.n_cells, s.c.len())?;
        check_finite("LSTM input", x.as_slice())?;
        check_finite("recurrent state", s.h.as_slice())?;
        check_finite("recurrent state", s.c.as_slice())?;
        let cache = self.lstm_step_cached(x, s);
        Ok(RecurrentState {
            h: cache.h,
            c: cache.c,
        })
    }

    /// Unchecked LSTM step that keeps every intermediate.
    pub fn lstm_step_cached(&self, x: &DVector<f64>, s: &RecurrentState) -> LstmCache {
        let lstm = &self.lstm;
        let n = lstm.n_cells();
        let z = &lstm.w_ih * x + &lstm.w_hh * &s.h + &lstm.b;
        let i = z.rows(0, n).map(sigmoid);
        let f = z.rows(n, n).map(sigmoid);
        let g = z.rows(2 * n, n).map(f64::tanh);
        let o = z.rows(3 * n, n).map(sigmoid);
        let c = f.component_mul(&s.c) + i.component_mul(&g);
        let tanh_c = c.map(f64::tanh);
        let h = o.component_mul(&tanh_c);
        LstmCache {
            x: x.clone(),
            h_prev: s.h.clone(),
            c_prev: s.c.clone(),
            i,
            f,
            g,
            o,
            c,
            tanh_c,
            h,
        }
    }

    /// One closed-loop policy step: encoder, recurrent update, action head.
    pub fn policy_step(
        &self,
        obs: &DVector<f64>,
        s: &RecurrentState,
    ) -> Result<(Action, RecurrentState)> {
        let x = self.mlp_forward(obs)?;
        let next = self.lstm_step(&x, s)?;
        let action = self.fc.apply(&next.h);
        check_finite("action", action.as_slice())?;
        Ok((Action(action), next))
    }

    /// Recurrent map `F(s, x)` on flat `[h; c]` vectors.
    pub fn recurrent_map(&self, s: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        let state = RecurrentState::from_flat(s).expect("even-length state");
        let cache = self.lstm_step_cached(x, &state);
        RecurrentState {
            h: cache.h,
            c: cache.c,
        }
        .to_flat()
    }

    pub fn zero_state(&self) -> RecurrentState {
        RecurrentState::zeros(self.dims.n_cells)
    }

    pub fn num_params(&self) -> usize {
        let mlp: usize = self.mlp.iter().map(|l| l.w.len() + l.b.len()).sum();
        mlp + self.lstm.w_ih.len()
            + self.lstm.w_hh.len()
            + self.lstm.b.len()
            + self.fc.w.len()
            + self.fc.b.len()
    }
}

impl PolicyNet {
    /// Every weight and bias as a slice, in a fixed order: MLP layers
    /// (W then b), LSTM `w_ih`, `w_hh`, `b`, head W, head b.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * self.mlp.len() + 5);
        for layer in &self.mlp {
            out.push(layer.w.as_slice());
            out.push(layer.b.as_slice());
        }
        out.push(self.lstm.w_ih.as_slice());
        out.push(self.lstm.w_hh.as_slice());
        out.push(self.lstm.b.as_slice());
        out.push(self.fc.w.as_slice());
        out.push(self.fc.b.as_slice());
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.mlp.len() + 5);
        for layer in &mut self.mlp {
            out.push(layer.w.as_mut_slice());
            out.push(layer.b.as_mut_slice());
        }
        out.push(self.lstm.w_ih.as_mut_slice());
        out.push(self.lstm.w_hh.as_mut_slice());
        out.push(self.lstm.b.as_mut_slice());
        out.push(self.fc.w.as_mut_slice());
        out.push(self.fc.b.as_mut_slice());
        out
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_dim("flat parameter vector", self.num_params(), flat.len())?;
        let mut offset = 0;
        for slice in self.param_slices_mut() {
            let len = slice.len();
            slice.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }
}
