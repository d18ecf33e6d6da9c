use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    /// Probability per inactive step that a push starts.
    pub p_start: f64,
    /// Probability per active step that the push ends.
    pub p_stop: f64,
    /// Per-axis force bound in body-weight multiples, `[x, y, z]`.
    pub magnitude_bw: [f64; 3],
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            p_start: 0.01,
            p_stop: 0.02,
            magnitude_bw: [0.23; 3],
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |p: f64| p > 0.0 && p < 1.0;
        if !open(self.p_start) || !open(self.p_stop) {
            return Err(Error::Config(
                "scheduler probabilities must lie in (0, 1)".into(),
            ));
        }
        if self
            .magnitude_bw
            .iter()
            .any(|m| !(m.is_finite() && *m >= 0.0))
        {
            return Err(Error::Config(
                "scheduler magnitudes must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleState {
    Inactive,
    /// A push in progress with its frozen force (newtons).
    Active([f64; 3]),
}

/// Random training-time pushes: a two-state Markov chain whose active state
/// holds a force drawn once per episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPerturbSchedule {
    pub cfg: SchedulerConfig,
    pub body_weight: f64,
    pub state: ScheduleState,
}

impl TrainingPerturbSchedule {
    /// Unvalidated; use [`SchedulerConfig::validate`] at configuration time.
    /// `p_start = 0` is accepted here and simply never fires.
    pub fn new(cfg: SchedulerConfig, body_weight: f64) -> Self {
        TrainingPerturbSchedule {
            cfg,
            body_weight,
            state: ScheduleState::Inactive,
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self.state, ScheduleState::Active(_))
    }

    /// Advances one step and returns the force to apply during it.
    /// A push applies on the step it starts; the stop test runs on every
    /// later step.
    pub fn step(&mut self, rng: &mut Rng) -> [f64; 3] {
        match self.state {
            ScheduleState::Inactive => {
                if rng.random::<f64>() < self.cfg.p_start {
                    let mut force = [0.0; 3];
                    for (f, &m) in force.iter_mut().zip(&self.cfg.magnitude_bw) {
                        *f = if m > 0.0 {
                            rng.random_range(-m..=m) * self.body_weight
                        } else {
                            0.0
                        };
                    }
                    self.state = ScheduleState::Active(force);
                    force
                } else {
                    [0.0; 3]
                }
            }
            ScheduleState::Active(force) => {
                if rng.random::<f64>() < self.cfg.p_stop {
                    self.state = ScheduleState::Inactive;
                    [0.0; 3]
                } else {
                    force
                }
            }
        }
    }
}

/// Functional form of [`TrainingPerturbSchedule::step`].
pub fn scheduler_step(
    sched: &TrainingPerturbSchedule,
    rng: &mut Rng,
) -> ([f64; 3], TrainingPerturbSchedule) {
    let mut next = sched.clone();
    let f = next.step(rng);
    (f, next)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    #[test]
    fn never_fires_with_zero_start_probability() {
        let cfg = SchedulerConfig {
            p_start: 0.0,
            ..SchedulerConfig::default()
        };
        let mut s = TrainingPerturbSchedule::new(cfg, 100.0);
        let mut rng = Rng::seed_from_u64(1);
        for _ in 0..100_000 {
            assert_eq!(s.step(&mut rng), [0.0; 3]);
        }
    }

    #[test]
    fn force_is_frozen_within_an_episode() {
        let mut s = TrainingPerturbSchedule::new(SchedulerConfig::default(), 294.3);
        let mut rng = Rng::seed_from_u64(2);
        let mut current: Option<[f64; 3]> = None;
        let mut episodes = 0;
        for _ in 0..200_000 {
            let was_active = s.is_active();
            let f = s.step(&mut rng);
            match (was_active, s.is_active()) {
                (false, true) => {
                    episodes += 1;
                    current = Some(f);
                }
                (true, true) => assert_eq!(Some(f), current),
                (_, false) => assert_eq!(f, [0.0; 3]),
            }
        }
        assert!(episodes > 100);
    }

    #[test]
    fn validation_rejects_degenerate_probabilities() {
        for (a, b) in [(0.0, 0.5), (0.5, 1.0), (-0.1, 0.2)] {
            let cfg = SchedulerConfig {
                p_start: a,
                p_stop: b,
                ..SchedulerConfig::default()
            };
            assert!(cfg.validate().is_err());
        }
        assert!(SchedulerConfig::default().validate().is_ok());
    }
}
