use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::policy::{PolicyNet, RecurrentState};
use crate::seed::{rng_for, stream, Rng};
use crate::train::{Adam, AdamConfig};

/// Speed function `q(s) = 0.5 * |F(s, x) - s|^2`.
pub fn speed(net: &PolicyNet, s: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * (net.recurrent_map(s, x) - s).norm_squared()
}

/// `(q, grad q)` with `grad q = (J - I)^T (F(s) - s)`.
pub fn speed_gradient(net: &PolicyNet, s: &DVector<f64>, x: &DVector<f64>) -> (f64, DVector<f64>) {
    let state = RecurrentState::from_flat(s).expect("even-length state");
    let cache = net.lstm_step_cached(x, &state);
    let mut residual = DVector::zeros(s.len());
    let n = state.n_cells();
    for k in 0..n {
        residual[k] = cache.h[k] - s[k];
        residual[n + k] = cache.c[k] - s[n + k];
    }
    let grad = net.recurrent_vjp_cached(&cache, &residual) - &residual;
    (0.5 * residual.norm_squared(), grad)
}

/// The constant LSTM input used for unforced analysis: the encoder's
/// response to an all-zero observation.
pub fn zero_input_vector(net: &PolicyNet) -> DVector<f64> {
    net.mlp_forward_unchecked(&DVector::zeros(net.dims.d_obs))
}

/// Distribution of optimizer starting states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum InitScheme {
    /// Every coordinate uniform on `[lo, hi]`.
    Cube { lo: f64, hi: f64 },
    /// Per-coordinate uniform box.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl InitScheme {
    /// Bounding box of the given states, each side widened by `inflate`
    /// times its extent.
    pub fn from_states(states: &[DVector<f64>], inflate: f64) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::Config("no states to bound".into()))?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for s in states {
            check_dim("state", lo.len(), s.len())?;
            lo = lo.inf(s);
            hi = hi.sup(s);
        }
        let pad = (&hi - &lo) * (0.5 * inflate);
        Ok(InitScheme::Box {
            lo: (&lo - &pad).iter().copied().collect(),
            hi: (&hi + &pad).iter().copied().collect(),
        })
    }

    fn sample(&self, dim: usize, rng: &mut Rng) -> Result<DVector<f64>> {
        match self {
            InitScheme::Cube { lo, hi } => Ok(DVector::from_fn(dim, |_, _| uniform(rng, *lo, *hi))),
            InitScheme::Box { lo, hi } => {
                check_dim("init box", dim, lo.len())?;
                check_dim("init box", dim, hi.len())?;
                Ok(DVector::from_fn(dim, |k, _| uniform(rng, lo[k], hi[k])))
            }
        }
    }
}

fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointOptions {
    pub adam: AdamConfig,
    pub max_iters: usize,
    pub q_tol: f64,
    /// Damped Newton steps on `F(s) - s = 0` after Adam; each accepted only
    /// if it lowers `q`.
    pub newton_steps: usize,
    pub init: InitScheme,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            adam: AdamConfig {
                lr: 0.01,
                ..AdamConfig::default()
            },
            max_iters: 20_000,
            q_tol: 1e-10,
            newton_steps: 20,
            init: InitScheme::Cube { lo: -1.0, hi: 1.0 },
        }
    }
}

impl FixedPointOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_tol > 0.0) {
            return Err(Error::Config("fixed_points.q_tol must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config(
                "fixed_points.adam.lr must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointCandidate {
    pub init_index: usize,
    pub state: DVector<f64>,
    pub speed: f64,
    pub converged: bool,
    /// A non-finite gradient or state stopped this run.
    pub diverged: bool,
    pub iterations: usize,
}

fn newton_polish(
    net: &PolicyNet,
    x: &DVector<f64>,
    mut s: DVector<f64>,
    mut q: f64,
    steps: usize,
) -> (DVector<f64>, f64) {
    let dim = s.len();
    for _ in 0..steps {
        if q == 0.0 {
            break;
        }
        let state = RecurrentState::from_flat(&s).expect("even-length state");
        let jac = net.recurrent_jacobian_unchecked(&state, x) - DMatrix::<f64>::identity(dim, dim);
        let residual = net.recurrent_map(&s, x) - &s;
        let Some(delta) = jac.lu().solve(&(-residual)) else {
            break;
        };
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..12 {
            let trial = &s + &delta * step;
            let qt = speed(net, &trial, x);
            if qt.is_finite() && qt < q {
                s = trial;
                q = qt;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (s, q)
}

fn optimize_one(
    net: &PolicyNet,
    x: &DVector<f64>,
    opts: &FixedPointOptions,
    init_index: usize,
    mut s: DVector<f64>,
) -> FixedPointCandidate {
    let mut adam = Adam::new(opts.adam, s.len());
    let mut iterations = 0;
    let mut q = speed(net, &s, x);
    let diverged = |q: f64, s: &DVector<f64>| !q.is_finite() || s.iter().any(|v| !v.is_finite());
    while iterations < opts.max_iters && q >= opts.q_tol {
        let (qk, grad) = speed_gradient(net, &s, x);
        q = qk;
        if q < opts.q_tol {
            break;
        }
        if diverged(q, &s) || grad.iter().any(|g| !g.is_finite()) {
            return FixedPointCandidate {
                init_index,
                state: s,
                speed: f64::NAN,
                converged: false,
                diverged: true,
                iterations,
            };
        }
        adam.step(s.as_mut_slice(), grad.as_slice());
        iterations += 1;
    }
    q = speed(net, &s, x);
    if diverged(q, &s) {
        return FixedPointCandidate {
            init_index,
            state: s,
            speed: f64::NAN,
            converged: false,
            diverged: true,
            iterations,
        };
    }
    let (s, q) = newton_polish(net, x, s, q, opts.newton_steps);
    FixedPointCandidate {
        init_index,
        converged: q < opts.q_tol,
        state: s,
        speed: q,
        diverged: false,
        iterations,
    }
}

/// Minimizes `q` from `n_inits` independent random starts. Each start has
/// its own seed, so the result does not depend on execution order.
pub fn find_fixed_points(
    net: &PolicyNet,
    x: &DVector<f64>,
    n_inits: usize,
    opts: &FixedPointOptions,
    seed: u64,
) -> Result<Vec<FixedPointCandidate>> {
    if n_inits == 0 {
        return Err(Error::Config("n_inits must be at least 1".into()));
    }
    opts.validate()?;
    check_dim("LSTM input", net.dims.d_in(), x.len())?;
    let dim = net.dims.state_len();
    (0..n_inits)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, stream::FIXED_POINT, k as u64);
            let s0 = opts.init.sample(dim, &mut rng)?;
            Ok(optimize_one(net, x, opts, k, s0))
        })
        .collect()
}
