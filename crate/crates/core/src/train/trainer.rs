use std::f64::consts::TAU;

use nalgebra::DVector;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::tbptt::{tbptt_gradients, Window, WindowGradients};
use crate::env::{Command, EnvConfig, EnvState, Observation, Teacher, TeacherGains, ToyEnv};
use crate::error::{Error, Result};
use crate::perturb::{SchedulerConfig, TrainingPerturbSchedule};
use crate::policy::{Dims, PolicyNet, RecurrentState};
use crate::seed::{rng_for, stream, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// BPTT truncation length in steps.
    pub k_trunc: usize,
    pub epochs: usize,
    /// Steps each parallel rollout advances per epoch.
    pub rollout_len: usize,
    /// Number of parallel rollouts.
    pub batch: usize,
    /// Steps per optimizer update; must be a multiple of `k_trunc`.
    pub segment_len: usize,
    /// Episodes reset after this many steps, or after a fall.
    pub episode_len: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub speed_range: [f64; 2],
    /// The executed action blends teacher and student; the teacher's share
    /// decays linearly from 1 to 0 over this many epochs.
    pub teacher_mix_epochs: usize,
    pub perturb_during_training: bool,
    pub scheduler: SchedulerConfig,
    /// Per-step gait phase slip during training rollouts (rad).
    pub phase_noise_std: f64,
    /// Observation noise during training, per channel; empty keeps the
    /// environment's own setting.
    pub obs_noise_std: Vec<f64>,
    /// Global gradient-norm clip; zero disables.
    pub grad_clip: f64,
    pub teacher: TeacherGains,
    /// Held-out evaluation: number of rollouts and their length.
    pub eval_rollouts: usize,
    pub eval_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k_trunc: 16,
            epochs: 120,
            rollout_len: 512,
            batch: 8,
            segment_len: 16,
            episode_len: 1024,
            adam: AdamConfig::default(),
            seed: 0,
            speed_range: [0.8, 2.0],
            teacher_mix_epochs: 20,
            perturb_during_training: false,
            scheduler: SchedulerConfig::default(),
            phase_noise_std: 0.05,
            obs_noise_std: Vec::new(),
            grad_clip: 1.0,
            teacher: TeacherGains::default(),
            eval_rollouts: 4,
            eval_len: 512,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: &str| Err(Error::Config(m.to_string()));
        if self.k_trunc == 0 {
            return cfg_err("train.k_trunc must be at least 1");
        }
        if !(self.adam.lr > 0.0) {
            return cfg_err("train.adam.lr must be positive");
        }
        if self.batch == 0 || self.segment_len == 0 || self.rollout_len == 0 {
            return cfg_err("train.batch, segment_len and rollout_len must be positive");
        }
        if !self.segment_len.is_multiple_of(self.k_trunc) {
            return cfg_err("train.segment_len must be a multiple of k_trunc");
        }
        if !self.rollout_len.is_multiple_of(self.segment_len) {
            return cfg_err("train.rollout_len must be a multiple of segment_len");
        }
        let [lo, hi] = self.speed_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return cfg_err("train.speed_range must satisfy 0 <= lo <= hi");
        }
        if !(self.phase_noise_std >= 0.0) || !(self.grad_clip >= 0.0) {
            return cfg_err("train noise and clip levels must be nonnegative");
        }
        if self.perturb_during_training {
            self.scheduler.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub k_trunc: usize,
    /// Mean training MSE per epoch.
    pub loss_curve: Vec<f64>,
    /// Held-out closed-loop imitation loss before and after training.
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
    /// Mean |u - u*| over the held-out rollouts after training.
    pub final_tracking_error: f64,
    pub checkpoints: Vec<String>,
}

/// One parallel rollout: environment, teacher oscillator, student state.
struct Worker {
    index: usize,
    rng: Rng,
    env_state: EnvState,
    obs: Observation,
    teacher_phase: f64,
    recurrent: RecurrentState,
    schedule: Option<TrainingPerturbSchedule>,
    episode_steps: usize,
    needs_reset: bool,
}

impl Worker {
    fn new(index: usize, master: u64, env: &ToyEnv, cfg: &TrainConfig, net: &PolicyNet) -> Self {
        let rng = rng_for(master, stream::TRAIN, index as u64);
        let schedule = cfg
            .perturb_during_training
            .then(|| TrainingPerturbSchedule::new(cfg.scheduler.clone(), env.cfg.body_weight()));
        let mut w = Worker {
            index,
            rng,
            env_state: EnvState::walking(Command::default(), 0.0),
            obs: Observation {
                velocity: [0.0; 3],
                command: [0.0; 3],
                prev_action: [0.0; 4],
                gates: [0.0; 2],
            },
            teacher_phase: 0.0,
            recurrent: net.zero_state(),
            schedule,
            episode_steps: 0,
            needs_reset: true,
        };
        w.reset(env, cfg, net);
        w
    }

    fn reset(&mut self, env: &ToyEnv, cfg: &TrainConfig, net: &PolicyNet) {
        let [lo, hi] = cfg.speed_range;
        let u_cmd = if hi > lo {
            self.rng.random_range(lo..=hi)
        } else {
            lo
        };
        let phase = self.rng.random_range(0.0..TAU);
        self.env_state = EnvState::walking(Command::forward(u_cmd), phase);
        self.obs = env.observe(&self.env_state, &mut self.rng);
        self.teacher_phase = phase;
        self.recurrent = net.zero_state();
        if let Some(s) = self.schedule.as_mut() {
            *s = TrainingPerturbSchedule::new(s.cfg.clone(), s.body_weight);
        }
        self.episode_steps = 0;
        self.needs_reset = false;
    }

    /// Rolls `steps` steps with the blended action and returns the windows
    /// that cover them.
    fn collect(
        &mut self,
        net: &PolicyNet,
        env: &ToyEnv,
        teacher: &Teacher,
        mix: f64,
        steps: usize,
        k_trunc: usize,
    ) -> Result<Vec<Window>> {
        let mut windows = Vec::with_capacity(steps / k_trunc);
        for _ in 0..steps / k_trunc {
            let mut window = Window {
                state0: self.recurrent.clone(),
                obs: Vec::with_capacity(k_trunc),
                targets: Vec::with_capacity(k_trunc),
            };
            for _ in 0..k_trunc {
                let obs_vec = self.obs.to_vector();
                let exact = env.observe_exact(&self.env_state);
                let target = teacher.action(&exact, self.teacher_phase, self.env_state.gait_phase);
                let (student, next) = net.policy_step(&obs_vec, &self.recurrent)?;
                let executed = crate::policy::Action(&target.0 * mix + &student.0 * (1.0 - mix));
                let force = match self.schedule.as_mut() {
                    Some(s) => {
                        let f = s.step(&mut self.rng);
                        [f[0], f[1]]
                    }
                    None => [0.0, 0.0],
                };
                let (env_next, obs_next) =
                    env.step(&self.env_state, &executed, force, &mut self.rng)?;
                window.obs.push(obs_vec);
                window.targets.push(target.0);
                self.teacher_phase = teacher.advance_phase(
                    self.teacher_phase,
                    self.env_state.gait_phase,
                    self.env_state.command.u,
                    &env.cfg,
                );
                self.env_state = env_next;
                self.obs = obs_next;
                self.recurrent = next;
                self.episode_steps += 1;
            }
            windows.push(window);
        }
        if self.env_state.fallen {
            self.needs_reset = true;
        }
        Ok(windows)
    }
}

fn training_env(env: &ToyEnv, cfg: &TrainConfig) -> Result<ToyEnv> {
    let obs_noise_std = if cfg.obs_noise_std.is_empty() {
        env.cfg.obs_noise_std.clone()
    } else {
        cfg.obs_noise_std.clone()
    };
    ToyEnv::new(EnvConfig {
        phase_noise_std: cfg.phase_noise_std,
        obs_noise_std,
        ..env.cfg.clone()
    })
}

/// Closed-loop imitation loss of the student driving alone, on rollouts
/// seeded from the evaluation stream.
pub fn evaluate(net: &PolicyNet, env: &ToyEnv, cfg: &TrainConfig) -> Result<(f64, f64)> {
    let env = training_env(env, cfg)?;
    let teacher = Teacher::new(cfg.teacher.clone());
    let mut sq = 0.0;
    let mut track = 0.0;
    let mut count = 0usize;
    let results: Vec<Result<(f64, f64, usize)>> = (0..cfg.eval_rollouts)
        .into_par_iter()
        .map(|k| {
            let mut w = Worker::new(k, cfg.seed, &env, cfg, net);
            w.rng = rng_for(cfg.seed, stream::EVAL, k as u64);
            w.reset(&env, cfg, net);
            let mut sq = 0.0;
            let mut track = 0.0;
            let mut n = 0usize;
            for _ in 0..cfg.eval_len {
                let obs_vec = w.obs.to_vector();
                let exact = env.observe_exact(&w.env_state);
                let target = teacher.action(&exact, w.teacher_phase, w.env_state.gait_phase);
                let (a, next) = net.policy_step(&obs_vec, &w.recurrent)?;
                sq += (&a.0 - &target.0).norm_squared() / a.len() as f64;
                let (s, o) = env.step(&w.env_state, &a, [0.0, 0.0], &mut w.rng)?;
                w.teacher_phase = teacher.advance_phase(
                    w.teacher_phase,
                    w.env_state.gait_phase,
                    w.env_state.command.u,
                    &env.cfg,
                );
                track += (s.u - s.command.u).abs();
                w.env_state = s;
                w.obs = o;
                w.recurrent = next;
                n += 1;
                if w.env_state.fallen {
                    w.reset(&env, cfg, net);
                }
            }
            Ok((sq, track, n))
        })
        .collect();
    for r in results {
        let (s, t, n) = r?;
        sq += s;
        track += t;
        count += n;
    }
    let count = count.max(1) as f64;
    Ok((sq / count, track / count))
}

/// Behavior cloning of the teacher with truncated BPTT. `on_epoch` runs
/// after every epoch and may return a checkpoint reference to record.
pub fn train_with<F>(
    init: PolicyNet,
    env: &ToyEnv,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<(PolicyNet, TrainReport)>
where
    F: FnMut(usize, &PolicyNet, f64) -> Result<Option<String>>,
{
    cfg.validate()?;
    init.validate()?;
    if init.dims.d_obs != crate::env::D_OBS || init.dims.d_act != crate::env::D_ACT {
        return Err(Error::Config(format!(
            "policy must map {} observations to {} actions",
            crate::env::D_OBS,
            crate::env::D_ACT
        )));
    }
    let train_env = training_env(env, cfg)?;
    let teacher = Teacher::new(cfg.teacher.clone());
    let mut net = init;
    let mut adam = Adam::new(cfg.adam, net.num_params());
    let (initial_eval_loss, _) = evaluate(&net, env, cfg)?;

    let mut workers: Vec<Worker> = (0..cfg.batch)
        .map(|k| Worker::new(k, cfg.seed, &train_env, cfg, &net))
        .collect();
    let mut report = TrainReport {
        k_trunc: cfg.k_trunc,
        loss_curve: Vec::with_capacity(cfg.epochs),
        initial_eval_loss,
        final_eval_loss: f64::NAN,
        final_tracking_error: f64::NAN,
        checkpoints: Vec::new(),
    };
    let total_steps = (cfg.segment_len * cfg.batch) as f64;

    for epoch in 0..cfg.epochs {
        let mix = if cfg.teacher_mix_epochs == 0 {
            0.0
        } else {
            (1.0 - epoch as f64 / cfg.teacher_mix_epochs as f64).max(0.0)
        };
        let mut epoch_loss = 0.0;
        let mut segments = 0usize;
        for _ in 0..cfg.rollout_len / cfg.segment_len {
            let per_worker: Vec<Result<Vec<WindowGradients>>> = workers
                .par_iter_mut()
                .map(|w| {
                    if w.needs_reset || w.episode_steps >= cfg.episode_len {
                        w.reset(&train_env, cfg, &net);
                    }
                    let windows = w.collect(
                        &net,
                        &train_env,
                        &teacher,
                        mix,
                        cfg.segment_len,
                        cfg.k_trunc,
                    )?;
                    windows
                        .iter()
                        .map(|win| tbptt_gradients(&net, win))
                        .collect()
                })
                .collect();

            // Ordered reduction: worker index, then window order.
            let mut grad = vec![0.0; net.num_params()];
            let mut seg_loss = 0.0;
            for (worker, result) in workers.iter().zip(per_worker) {
                debug_assert!(worker.index < cfg.batch);
                for wg in result? {
                    let weight = cfg.k_trunc as f64 / total_steps;
                    seg_loss += weight * wg.loss;
                    let mut offset = 0;
                    for slice in wg.grads.param_slices() {
                        for (g, v) in grad[offset..offset + slice.len()].iter_mut().zip(slice) {
                            *g += weight * v;
                        }
                        offset += slice.len();
                    }
                }
            }
            if !seg_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    loss: seg_loss,
                });
            }
            if cfg.grad_clip > 0.0 {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > cfg.grad_clip {
                    let s = cfg.grad_clip / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            let mut params = net.params_flat();
            adam.step(&mut params, &grad);
            net.set_params_flat(&params)?;
            epoch_loss += seg_loss;
            segments += 1;
        }
        let epoch_loss = epoch_loss / segments as f64;
        report.loss_curve.push(epoch_loss);
        if let Some(reference) = on_epoch(epoch, &net, epoch_loss)? {
            report.checkpoints.push(reference);
        }
    }

    let (final_eval_loss, tracking) = evaluate(&net, env, cfg)?;
    report.final_eval_loss = final_eval_loss;
    report.final_tracking_error = tracking;
    Ok((net, report))
}

pub fn train(init: PolicyNet, env: &ToyEnv, cfg: &TrainConfig) -> Result<(PolicyNet, TrainReport)> {
    train_with(init, env, cfg, |_, _, _| Ok(None))
}

/// Squared-error gradient of a sequence, used to test that truncation
/// cuts credit assignment exactly at window boundaries.
pub fn observation_sensitivity(
    net: &PolicyNet,
    state0: &RecurrentState,
    obs: &[DVector<f64>],
    targets: &[DVector<f64>],
    k_trunc: usize,
    loss_step: usize,
) -> Result<Vec<DVector<f64>>> {
    if loss_step >= obs.len() {
        return Err(Error::Config("loss_step outside the sequence".into()));
    }
    // Only the target at `loss_step` carries error: every other target is
    // replaced by the network's own output so its residual is zero.
    let mut masked = Vec::with_capacity(obs.len());
    let mut s = state0.clone();
    for (t, o) in obs.iter().enumerate() {
        let (a, next) = net.policy_step(o, &s)?;
        masked.push(if t == loss_step {
            targets[t].clone()
        } else {
            a.0
        });
        s = next;
    }
    let windows = super::tbptt::sequence_gradients(net, state0, obs, &masked, k_trunc)?;
    Ok(windows.into_iter().flat_map(|w| w.d_obs).collect())
}

/// The untrained network used by `train` runs with this seed.
pub fn initial_net(dims: Dims, seed: u64) -> Result<PolicyNet> {
    PolicyNet::random(dims, &mut rng_for(seed, stream::INIT, 0))
}
