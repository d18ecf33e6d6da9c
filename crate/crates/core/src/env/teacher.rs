use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{wrap_phase, EnvConfig, Observation};
use crate::policy::Action;

/// Hand-designed walking controller used as the imitation target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherGains {
    pub k_forward: f64,
    pub k_lateral: f64,
    pub k_turn: f64,
    /// Rhythmic thrust amplitude per m/s of commanded speed.
    pub rhythm_per_speed: f64,
    /// Cadence correction toward the internal phase.
    pub k_phase: f64,
    /// Entrainment of the internal oscillator by the observed gait (rad/s).
    pub phase_coupling: f64,
}

impl Default for TeacherGains {
    fn default() -> Self {
        TeacherGains {
            k_forward: 2.0,
            k_lateral: 4.0,
            k_turn: 1.0,
            rhythm_per_speed: 1.0 / 3.0,
            k_phase: 1.0,
            phase_coupling: 5.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Teacher {
    pub gains: TeacherGains,
}

impl Teacher {
    pub fn new(gains: TeacherGains) -> Self {
        Teacher { gains }
    }

    /// Proportional velocity tracking plus rhythmic thrust locked to the
    /// teacher's own phase oscillator, and a cadence term that pulls the
    /// gait phase toward it. The teacher reads the true gait phase.
    pub fn action(&self, obs: &Observation, internal_phase: f64, gait_phase: f64) -> Action {
        let g = &self.gains;
        let [u, v, r] = obs.velocity;
        let [u_cmd, v_cmd, r_cmd] = obs.command;
        let rhythm = g.rhythm_per_speed * u_cmd * (1.0 + internal_phase.cos());
        let thrust = g.k_forward * (u_cmd - u) + rhythm;
        let lateral = g.k_lateral * (v_cmd - v);
        let turn = g.k_turn * (r_cmd - r);
        let cadence = g.k_phase * (internal_phase - gait_phase).sin();
        Action(DVector::from_vec(vec![thrust, lateral, turn, cadence]))
    }

    /// Oscillator update: commanded stride rate plus a weak pull toward the
    /// gait phase, so the internal phase is a low-pass filtered copy of it.
    pub fn advance_phase(
        &self,
        internal_phase: f64,
        gait_phase: f64,
        u_cmd: f64,
        cfg: &EnvConfig,
    ) -> f64 {
        let pull = self.gains.phase_coupling * (gait_phase - internal_phase).sin();
        wrap_phase(internal_phase + cfg.dt * (cfg.stride_rate(u_cmd) + pull))
    }
}
