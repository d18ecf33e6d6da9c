use std::f64::consts::TAU;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Command, EnvState, ToyEnv};
use crate::error::{Error, Result};
use crate::policy::PolicyNet;
use crate::rollout::ClosedLoop;
use crate::seed::{rng_for, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    pub speeds: Vec<f64>,
    /// Steps per rollout, including warmup.
    pub steps: usize,
    /// Leading steps discarded from each rollout.
    pub warmup: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            speeds: speed_sweep(0.8, 2.0, 0.2),
            steps: 1000,
            warmup: 200,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.speeds.is_empty() {
            return Err(Error::Config("rollout.speeds must not be empty".into()));
        }
        if self.speeds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config(
                "rollout.speeds must be finite and >= 0".into(),
            ));
        }
        if self.warmup >= self.steps {
            return Err(Error::Config(
                "rollout.warmup must be shorter than rollout.steps".into(),
            ));
        }
        Ok(())
    }
}

/// Inclusive arithmetic sweep, robust to rounding at the upper end.
pub fn speed_sweep(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + step * k as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowMeta {
    pub rollout_id: usize,
    pub speed: f64,
    pub t: usize,
}

/// Recurrent states, one row per recorded step, columns `[h; c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutDataset {
    pub data: DMatrix<f64>,
    pub meta: Vec<RowMeta>,
}

impl RolloutDataset {
    pub fn new(data: DMatrix<f64>, meta: Vec<RowMeta>) -> Result<Self> {
        if data.nrows() != meta.len() {
            return Err(Error::Config(format!(
                "dataset has {} rows but {} metadata rows",
                data.nrows(),
                meta.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(RolloutDataset { data, meta })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    /// Rows of one rollout, in time order.
    pub fn rollout_rows(&self, rollout_id: usize) -> Vec<usize> {
        (0..self.rows())
            .filter(|&r| self.meta[r].rollout_id == rollout_id)
            .collect()
    }

    /// `rollout_id, speed, t, s_0 .. s_{2n-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["rollout_id".to_string(), "speed".into(), "t".into()];
        header.extend((0..self.width()).map(|k| format!("s_{k}")));
        w.write_record(&header)?;
        for (r, m) in self.meta.iter().enumerate() {
            let mut row = vec![
                m.rollout_id.to_string(),
                m.speed.to_string(),
                m.t.to_string(),
            ];
            row.extend(self.data.row(r).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format written by [`write_csv`](Self::write_csv); lines
    /// starting with `#` are skipped.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        let header = rdr.headers()?.clone();
        if header.len() < 4
            || &header[0] != "rollout_id"
            || &header[1] != "speed"
            || &header[2] != "t"
        {
            return Err(Error::Parse(
                "dataset header must start with rollout_id,speed,t,s_0".into(),
            ));
        }
        let width = header.len() - 3;
        let parse = |field: &str| -> Result<f64> {
            field
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad number {field:?}: {e}")))
        };
        let mut values = Vec::new();
        let mut meta = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            meta.push(RowMeta {
                rollout_id: rec[0]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad rollout_id: {e}")))?,
                speed: parse(&rec[1])?,
                t: rec[2]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad t: {e}")))?,
            });
            for k in 0..width {
                values.push(parse(&rec[3 + k])?);
            }
        }
        let data = DMatrix::from_row_slice(meta.len(), width, &values);
        RolloutDataset::new(data, meta)
    }
}

/// One noise-free rollout per commanded speed, starting from the zero
/// recurrent state; the first `warmup` steps are discarded.
pub fn collect_rollouts(
    net: &PolicyNet,
    env: &ToyEnv,
    cfg: &RolloutConfig,
    seed: u64,
) -> Result<RolloutDataset> {
    cfg.validate()?;
    let env = ToyEnv::new(env.cfg.noise_free())?;
    let width = net.dims.state_len();
    let per: Vec<Result<Vec<f64>>> = cfg
        .speeds
        .par_iter()
        .enumerate()
        .map(|(id, &speed)| {
            let mut rng = rng_for(seed, stream::ROLLOUT, id as u64);
            let phase = rng.random_range(0.0..TAU);
            let init = EnvState::walking(Command::forward(speed), phase);
            let mut lp = ClosedLoop::new(net, &env, init, rng);
            let mut rows = Vec::with_capacity((cfg.steps - cfg.warmup) * width);
            for t in 0..cfg.steps {
                let rec = lp.step([0.0, 0.0]).map_err(|e| {
                    Error::Analysis(format!(
                        "rollout {id} (speed {speed}) aborted at step {t}: {e}"
                    ))
                })?;
                if t >= cfg.warmup {
                    rows.extend(rec.state.to_flat().iter());
                }
            }
            Ok(rows)
        })
        .collect();
    let n_rows = cfg.speeds.len() * (cfg.steps - cfg.warmup);
    let mut values = Vec::with_capacity(n_rows * width);
    let mut meta = Vec::with_capacity(n_rows);
    for (id, rows) in per.into_iter().enumerate() {
        values.extend(rows?);
        meta.extend((cfg.warmup..cfg.steps).map(|t| RowMeta {
            rollout_id: id,
            speed: cfg.speeds[id],
            t,
        }));
    }
    RolloutDataset::new(DMatrix::from_row_slice(n_rows, width, &values), meta)
}
