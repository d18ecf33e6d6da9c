//! Planar three-DOF walker with phase-gated actuation.
//!
//! State is body-frame forward/lateral velocity `(u, v)`, yaw rate `r`, and
//! a gait phase `phi`. Thrust is effective only while the front contact gate
//! `g(phi)` is open, lateral actuation while the opposite gate `g(phi + pi)`
//! is open. The phase advances at the commanded stride rate, modulated by a
//! cadence action. External forces enter the velocity equations additively.
//!
//! Actions: `[thrust, lateral, turn, cadence]`.
//! Observations: `[u, v, r, u*, v*, r*, a_prev(4), g(phi), g(phi - pi/2)]`.

mod teacher;

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::policy::Action;
use crate::seed::Rng;

pub use teacher::{Teacher, TeacherGains};

pub const D_OBS: usize = 12;
pub const D_ACT: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub dt: f64,
    pub mass: f64,
    pub gravity: f64,
    pub damping: f64,
    pub thrust_gain: f64,
    pub lateral_gain: f64,
    pub turn_gain: f64,
    /// Actions saturate smoothly as `limit * tanh(a / limit)`.
    pub actuation_limit: f64,
    /// Phase-rate change per unit cadence action (rad/s).
    pub cadence_gain: f64,
    pub stride_base_hz: f64,
    pub stride_per_speed_hz: f64,
    /// Per-channel observation noise; empty means noise-free.
    pub obs_noise_std: Vec<f64>,
    /// Per-step phase slip (rad); zero for every analysis rollout.
    pub phase_noise_std: f64,
    pub v_fall: f64,
    pub u_fall: f64,
    pub fall_steps: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            dt: 0.01,
            mass: 30.0,
            gravity: 9.81,
            damping: 1.0,
            thrust_gain: 4.0,
            lateral_gain: 20.0,
            turn_gain: 2.0,
            actuation_limit: 3.0,
            cadence_gain: PI,
            stride_base_hz: 1.0,
            stride_per_speed_hz: 0.5,
            obs_noise_std: Vec::new(),
            phase_noise_std: 0.0,
            v_fall: 1.2,
            u_fall: 1.5,
            fall_steps: 5,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("actuation_limit", self.actuation_limit),
            ("v_fall", self.v_fall),
            ("u_fall", self.u_fall),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("env.{name} must be positive")));
            }
        }
        if self.fall_steps == 0 {
            return Err(Error::Config("env.fall_steps must be positive".into()));
        }
        if !self.obs_noise_std.is_empty() && self.obs_noise_std.len() != D_OBS {
            return Err(Error::Config(format!(
                "env.obs_noise_std must be empty or have {D_OBS} entries"
            )));
        }
        if self.obs_noise_std.iter().any(|s| !(*s >= 0.0)) || !(self.phase_noise_std >= 0.0) {
            return Err(Error::Config("env noise levels must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn body_weight(&self) -> f64 {
        self.mass * self.gravity
    }

    /// Commanded stride rate (rad/s).
    pub fn stride_rate(&self, u_cmd: f64) -> f64 {
        TAU * (self.stride_base_hz + self.stride_per_speed_hz * u_cmd)
    }

    /// Nominal gait period in steps at a commanded speed.
    pub fn gait_period_steps(&self, u_cmd: f64) -> f64 {
        TAU / (self.stride_rate(u_cmd) * self.dt)
    }

    /// Number of steps covering `ms` milliseconds.
    pub fn steps_for_ms(&self, ms: f64) -> usize {
        (ms / 1000.0 / self.dt).round() as usize
    }

    pub fn noise_free(&self) -> EnvConfig {
        EnvConfig {
            obs_noise_std: Vec::new(),
            phase_noise_std: 0.0,
            ..self.clone()
        }
    }

    fn saturate(&self, a: f64) -> f64 {
        self.actuation_limit * (a / self.actuation_limit).tanh()
    }
}

/// Raised-cosine contact gate.
pub fn contact_gate(phase: f64) -> f64 {
    0.5 * (1.0 + phase.cos())
}

pub fn wrap_phase(phase: f64) -> f64 {
    let p = phase.rem_euclid(TAU);
    if p >= TAU {
        0.0
    } else {
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub u: f64,
    pub v: f64,
    pub r: f64,
}

impl Command {
    pub fn forward(u: f64) -> Self {
        Command { u, v: 0.0, r: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub gait_phase: f64,
    pub step_count: usize,
    pub command: Command,
    pub prev_action: [f64; D_ACT],
    /// Consecutive steps outside the fall band.
    pub violation_steps: usize,
    pub fallen: bool,
}

impl EnvState {
    /// Walking at the commanded speed with the given gait phase.
    pub fn walking(command: Command, phase: f64) -> Self {
        EnvState {
            u: command.u,
            v: command.v,
            r: command.r,
            gait_phase: wrap_phase(phase),
            step_count: 0,
            command,
            prev_action: [0.0; D_ACT],
            violation_steps: 0,
            fallen: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub velocity: [f64; 3],
    pub command: [f64; 3],
    pub prev_action: [f64; D_ACT],
    pub gates: [f64; 2],
}

impl Observation {
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(D_OBS);
        v.extend_from_slice(&self.velocity);
        v.extend_from_slice(&self.command);
        v.extend_from_slice(&self.prev_action);
        v.extend_from_slice(&self.gates);
        DVector::from_vec(v)
    }

    pub fn from_vector(v: &DVector<f64>) -> Result<Self> {
        check_dim("observation", D_OBS, v.len())?;
        Ok(Observation {
            velocity: [v[0], v[1], v[2]],
            command: [v[3], v[4], v[5]],
            prev_action: [v[6], v[7], v[8], v[9]],
            gates: [v[10], v[11]],
        })
    }
}

/// Lateral/forward external force in newtons.
pub type Force = [f64; 2];

#[derive(Debug, Clone)]
pub struct ToyEnv {
    pub cfg: EnvConfig,
}

impl ToyEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ToyEnv { cfg })
    }

    /// The observation without sensor noise.
    pub fn observe_exact(&self, state: &EnvState) -> Observation {
        Observation {
            velocity: [state.u, state.v, state.r],
            command: [state.command.u, state.command.v, state.command.r],
            prev_action: state.prev_action,
            gates: [
                contact_gate(state.gait_phase),
                contact_gate(state.gait_phase + PI),
            ],
        }
    }

    pub fn observe(&self, state: &EnvState, rng: &mut Rng) -> Observation {
        let mut obs = self.observe_exact(state);
        if !self.cfg.obs_noise_std.is_empty() {
            let std = &self.cfg.obs_noise_std;
            let channels = obs
                .velocity
                .iter_mut()
                .chain(obs.command.iter_mut())
                .chain(obs.prev_action.iter_mut())
                .chain(obs.gates.iter_mut());
            for (value, &sd) in channels.zip(std.iter()) {
                if sd > 0.0 {
                    *value += Normal::new(0.0, sd).expect("valid std").sample(rng);
                }
            }
        }
        obs
    }

    /// Advances one control step. `rng` drives observation noise and phase
    /// slip; neither draws when the corresponding std is zero.
    pub fn step(
        &self,
        state: &EnvState,
        action: &Action,
        force: Force,
        rng: &mut Rng,
    ) -> Result<(EnvState, Observation)> {
        check_dim("action", D_ACT, action.len())?;
        check_finite("action", action.as_slice())?;
        check_finite("external force", &force)?;
        let cfg = &self.cfg;
        let a = action.as_slice();
        let dt = cfg.dt;
        let phase = state.gait_phase;

        let du = -cfg.damping * state.u
            + cfg.thrust_gain * contact_gate(phase) * cfg.saturate(a[0])
            + force[0] / cfg.mass;
        let dv = -cfg.damping * state.v
            + cfg.lateral_gain * contact_gate(phase + PI) * cfg.saturate(a[1])
            + force[1] / cfg.mass;
        let dr = -cfg.damping * state.r + cfg.turn_gain * cfg.saturate(a[2]);

        let mut next = state.clone();
        next.u = state.u + dt * du;
        next.v = state.v + dt * dv;
        next.r = state.r + dt * dr;

        let mut phase_next =
            phase + dt * (cfg.stride_rate(state.command.u) + cfg.cadence_gain * cfg.saturate(a[3]));
        if cfg.phase_noise_std > 0.0 {
            phase_next += Normal::new(0.0, cfg.phase_noise_std)
                .expect("valid std")
                .sample(rng);
        }
        next.gait_phase = wrap_phase(phase_next);
        next.step_count += 1;
        next.prev_action = [a[0], a[1], a[2], a[3]];

        if self.violates(&next) {
            next.violation_steps += 1;
        } else {
            next.violation_steps = 0;
        }
        next.fallen = state.fallen || next.violation_steps >= cfg.fall_steps;

        let obs = self.observe(&next, rng);
        Ok((next, obs))
    }

    fn violates(&self, s: &EnvState) -> bool {
        s.v.abs() > self.cfg.v_fall || (s.u - s.command.u).abs() > self.cfg.u_fall
    }

    /// Fall predicate: the fall band has been violated for at least
    /// `fall_steps` consecutive steps (latched once reached).
    pub fn is_fallen(&self, state: &EnvState) -> bool {
        state.fallen || state.violation_steps >= self.cfg.fall_steps
    }
}

#[cfg(test)]
mod tests;
