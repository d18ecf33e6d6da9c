use std::f64::consts::TAU;
use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Command, EnvState, ToyEnv};
use crate::error::{Error, Result};
use crate::policy::PolicyNet;
use crate::rollout::{ClosedLoop, RolloutTrace};
use crate::seed::{derive_seed, rng_for, stream};

/// A constant lateral push of `magnitude_bw` body weights held for
/// `duration_ms`, starting before step `t_apply`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalPerturbationSpec {
    pub magnitude_bw: f64,
    pub duration_ms: f64,
    pub t_apply: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoveryCriterion {
    /// Band half-width as a fraction of the commanded speed.
    pub band_fraction: f64,
    pub sustain_steps: usize,
    /// Steps after the push ends within which the band must be held.
    pub horizon_steps: usize,
}

impl Default for RecoveryCriterion {
    fn default() -> Self {
        RecoveryCriterion {
            band_fraction: 0.2,
            sustain_steps: 100,
            horizon_steps: 1000,
        }
    }
}

impl RecoveryCriterion {
    pub fn validate(&self) -> Result<()> {
        if !(self.band_fraction > 0.0 && self.band_fraction.is_finite()) {
            return Err(Error::Config("recovery.band_fraction must be > 0".into()));
        }
        if self.sustain_steps == 0 || self.sustain_steps > self.horizon_steps {
            return Err(Error::Config(
                "recovery.sustain_steps must be in 1..=horizon_steps".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalTrialConfig {
    pub speed: f64,
    pub recovery: RecoveryCriterion,
    /// Stop as soon as the outcome is decided.
    pub stop_early: bool,
}

impl Default for PhysicalTrialConfig {
    fn default() -> Self {
        PhysicalTrialConfig {
            speed: 2.0,
            recovery: RecoveryCriterion::default(),
            stop_early: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub recovered: bool,
    pub fell: bool,
    /// First step of the sustained in-band run, when recovered.
    pub recovery_step: Option<usize>,
    pub trace: RolloutTrace,
}

/// Runs one push trial. The seed sets the initial gait phase, so agents
/// differ in where in the stride the push lands.
pub fn physical_perturbation_trial(
    net: &PolicyNet,
    env: &ToyEnv,
    spec: &PhysicalPerturbationSpec,
    cfg: &PhysicalTrialConfig,
    seed: u64,
) -> Result<TrialOutcome> {
    cfg.recovery.validate()?;
    if !spec.magnitude_bw.is_finite() || !(spec.duration_ms >= 0.0) {
        return Err(Error::Config(
            "push magnitude must be finite and duration non-negative".into(),
        ));
    }
    let mut rng = rng_for(seed, stream::PHYSICAL_TRIAL, 0);
    let phase = rng.random_range(0.0..TAU);
    let mut lp = ClosedLoop::new(
        net,
        env,
        EnvState::walking(Command::forward(cfg.speed), phase),
        rng,
    );
    let push_steps = env.cfg.steps_for_ms(spec.duration_ms);
    let push_end = spec.t_apply + push_steps;
    let total = push_end + cfg.recovery.horizon_steps;
    let force = spec.magnitude_bw * env.cfg.body_weight();
    let band = cfg.recovery.band_fraction * cfg.speed;

    let mut trace = RolloutTrace::default();
    let mut run_start = None;
    let mut recovery_step = None;
    let mut fell = false;
    for t in 0..total {
        let f = if (spec.t_apply..push_end).contains(&t) {
            [0.0, force]
        } else {
            [0.0, 0.0]
        };
        let rec = lp.step(f)?;
        fell |= rec.env.fallen;
        let in_band = (rec.env.u - cfg.speed).abs() < band;
        trace.records.push(rec);
        if fell {
            if cfg.stop_early {
                break;
            }
            continue;
        }
        if t >= push_end && recovery_step.is_none() {
            if in_band {
                let start = *run_start.get_or_insert(t);
                if t + 1 - start >= cfg.recovery.sustain_steps {
                    recovery_step = Some(start);
                    if cfg.stop_early {
                        break;
                    }
                }
            } else {
                run_start = None;
            }
        }
    }
    Ok(TrialOutcome {
        recovered: recovery_step.is_some() && !fell,
        fell,
        recovery_step,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub magnitudes_bw: Vec<f64>,
    pub durations_ms: Vec<f64>,
    pub n_agents: usize,
    /// Steps of unperturbed walking before the push.
    pub warmup: usize,
    pub trial: PhysicalTrialConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            magnitudes_bw: (0..17).map(|k| -4.0 + 0.5 * k as f64).collect(),
            durations_ms: vec![100.0, 200.0],
            n_agents: 100,
            warmup: 200,
            trial: PhysicalTrialConfig::default(),
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::Config("grid.n_agents must be >= 1".into()));
        }
        if self.magnitudes_bw.is_empty() || self.durations_ms.is_empty() {
            return Err(Error::Config(
                "grid needs at least one magnitude and duration".into(),
            ));
        }
        if self.magnitudes_bw.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("grid magnitudes must be finite".into()));
        }
        if self
            .durations_ms
            .iter()
            .any(|d| !(d.is_finite() && *d >= 0.0))
        {
            return Err(Error::Config(
                "grid durations must be finite and >= 0".into(),
            ));
        }
        self.trial.recovery.validate()
    }

    pub fn n_trials(&self) -> usize {
        self.magnitudes_bw.len() * self.durations_ms.len() * self.n_agents
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub magnitude_bw: f64,
    pub duration_ms: f64,
    pub n_agents: usize,
    pub n_recovered: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridResult {
    /// Duration-major, then magnitude in configured order.
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn summed_fraction(&self) -> f64 {
        self.cells.iter().map(|c| c.fraction).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "magnitude_bw",
            "duration_ms",
            "n_agents",
            "n_recovered",
            "fraction",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.magnitude_bw.to_string(),
                c.duration_ms.to_string(),
                c.n_agents.to_string(),
                c.n_recovered.to_string(),
                c.fraction.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Every agent keeps the same seed across cells, so cells differ only in
/// the push.
pub fn agent_seed(master_seed: u64, agent: usize) -> u64 {
    derive_seed(master_seed, stream::PHYSICAL_TRIAL, agent as u64)
}

pub fn robustness_grid(
    net: &PolicyNet,
    env: &ToyEnv,
    cfg: &GridConfig,
    master_seed: u64,
) -> Result<GridResult> {
    cfg.validate()?;
    let n_mag = cfg.magnitudes_bw.len();
    let n_cells = n_mag * cfg.durations_ms.len();
    let outcomes: Vec<Result<bool>> = (0..n_cells * cfg.n_agents)
        .into_par_iter()
        .map(|key| {
            let (cell, agent) = (key / cfg.n_agents, key % cfg.n_agents);
            let spec = PhysicalPerturbationSpec {
                magnitude_bw: cfg.magnitudes_bw[cell % n_mag],
                duration_ms: cfg.durations_ms[cell / n_mag],
                t_apply: cfg.warmup,
            };
            physical_perturbation_trial(net, env, &spec, &cfg.trial, agent_seed(master_seed, agent))
                .map(|o| o.recovered)
        })
        .collect();
    let mut cells = Vec::with_capacity(n_cells);
    for (cell, chunk) in outcomes.chunks(cfg.n_agents).enumerate() {
        let mut n_recovered = 0;
        for r in chunk {
            n_recovered += usize::from(*r.as_ref().map_err(|e| Error::Analysis(e.to_string()))?);
        }
        cells.push(GridCell {
            magnitude_bw: cfg.magnitudes_bw[cell % n_mag],
            duration_ms: cfg.durations_ms[cell / n_mag],
            n_agents: cfg.n_agents,
            n_recovered,
            fraction: n_recovered as f64 / cfg.n_agents as f64,
        });
    }
    Ok(GridResult { cells })
}
