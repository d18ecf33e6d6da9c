//! Closed-loop coupling of a policy and the toy environment, and the
//! time-indexed trace it produces.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::env::{EnvState, Force, ToyEnv};
use crate::error::Result;
use crate::policy::{Action, PolicyNet, RecurrentState};
use crate::seed::Rng;

/// Everything that happened in one control step. `state` is the recurrent
/// state after consuming `obs`; `env` is the environment after `action`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub obs: DVector<f64>,
    pub state: RecurrentState,
    pub action: Action,
    pub env: EnvState,
    pub force: Force,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutTrace {
    pub records: Vec<StepRecord>,
}

impl RolloutTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn fell(&self) -> bool {
        self.records.iter().any(|r| r.env.fallen)
    }

    /// Recurrent states as rows of `[h; c]`.
    pub fn state_matrix(&self) -> DMatrix<f64> {
        let width = self.records.first().map_or(0, |r| 2 * r.state.n_cells());
        let mut m = DMatrix::zeros(self.records.len(), width);
        for (row, rec) in self.records.iter().enumerate() {
            m.row_mut(row).copy_from(&rec.state.to_flat().transpose());
        }
        m
    }

    pub fn flat_states(&self) -> Vec<DVector<f64>> {
        self.records.iter().map(|r| r.state.to_flat()).collect()
    }

    /// `t, u, v, r, gait_phase, u_cmd, obs_*, act_*, fx, fy, fallen`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d_obs = self.records.first().map_or(0, |r| r.obs.len());
        let d_act = self.records.first().map_or(0, |r| r.action.len());
        let mut header: Vec<String> = ["t", "u", "v", "r", "gait_phase", "u_cmd"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..d_obs).map(|k| format!("obs_{k}")));
        header.extend((0..d_act).map(|k| format!("act_{k}")));
        header.extend(["fx", "fy", "fallen"].iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for rec in &self.records {
            let mut row = vec![
                rec.t.to_string(),
                rec.env.u.to_string(),
                rec.env.v.to_string(),
                rec.env.r.to_string(),
                rec.env.gait_phase.to_string(),
                rec.env.command.u.to_string(),
            ];
            row.extend(rec.obs.iter().map(|v| v.to_string()));
            row.extend(rec.action.as_slice().iter().map(|v| v.to_string()));
            row.push(rec.force[0].to_string());
            row.push(rec.force[1].to_string());
            row.push(u8::from(rec.env.fallen).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A policy driving the environment. The recurrent state is exposed so
/// experiments can overwrite it between steps.
pub struct ClosedLoop<'a> {
    net: &'a PolicyNet,
    env: &'a ToyEnv,
    env_state: EnvState,
    obs: DVector<f64>,
    recurrent: RecurrentState,
    rng: Rng,
    t: usize,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(net: &'a PolicyNet, env: &'a ToyEnv, init: EnvState, mut rng: Rng) -> Self {
        let obs = env.observe(&init, &mut rng).to_vector();
        ClosedLoop {
            net,
            env,
            env_state: init,
            obs,
            recurrent: net.zero_state(),
            rng,
            t: 0,
        }
    }

    pub fn recurrent_state(&self) -> &RecurrentState {
        &self.recurrent
    }

    pub fn set_recurrent_state(&mut self, s: RecurrentState) {
        self.recurrent = s;
    }

    pub fn env_state(&self) -> &EnvState {
        &self.env_state
    }

    pub fn observation(&self) -> &DVector<f64> {
        &self.obs
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn step(&mut self, force: Force) -> Result<StepRecord> {
        let (action, next) = self.net.policy_step(&self.obs, &self.recurrent)?;
        let (env_next, obs_next) = self
            .env
            .step(&self.env_state, &action, force, &mut self.rng)?;
        let record = StepRecord {
            t: self.t,
            obs: std::mem::replace(&mut self.obs, obs_next.to_vector()),
            state: next.clone(),
            action,
            env: env_next.clone(),
            force,
        };
        self.recurrent = next;
        self.env_state = env_next;
        self.t += 1;
        Ok(record)
    }

    /// Runs `steps` steps with forces from `force_at(t)`.
    pub fn run(
        &mut self,
        steps: usize,
        mut force_at: impl FnMut(usize) -> Force,
    ) -> Result<RolloutTrace> {
        let mut trace = RolloutTrace {
            records: Vec::with_capacity(steps),
        };
        for _ in 0..steps {
            let f = force_at(self.t);
            trace.records.push(self.step(f)?);
        }
        Ok(trace)
    }
}
