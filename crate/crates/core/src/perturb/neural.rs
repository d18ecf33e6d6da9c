use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::DVector;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{autocorrelation_period, phase_shift, plane_alignment, tangentiality};
use crate::env::{Command, EnvState, ToyEnv};
use crate::error::{Error, Result};
use crate::pca::PcBasis;
use crate::policy::{PolicyNet, RecurrentState};
use crate::rollout::{ClosedLoop, RolloutTrace};
use crate::seed::{rng_for, stream};

/// A state jump along one principal component, in units of that
/// component's standard deviation. `pc_index` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralPerturbationSpec {
    pub pc_index: usize,
    pub magnitude: f64,
    pub t_apply: usize,
    pub sign: f64,
}

impl NeuralPerturbationSpec {
    pub fn validate(&self, basis: &PcBasis, warmup: usize) -> Result<()> {
        if self.pc_index == 0 || self.pc_index > basis.dim() {
            return Err(Error::Config(format!(
                "pc_index must be in 1..={}, got {}",
                basis.dim(),
                self.pc_index
            )));
        }
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(Error::Config(format!(
                "sign must be +1 or -1, got {}",
                self.sign
            )));
        }
        if !self.magnitude.is_finite() {
            return Err(Error::Config(
                "perturbation magnitude must be finite".into(),
            ));
        }
        if self.t_apply < warmup {
            return Err(Error::Config(format!(
                "t_apply {} precedes the warmup of {warmup} steps",
                self.t_apply
            )));
        }
        Ok(())
    }

    /// The displacement added to the flat state.
    pub fn displacement(&self, basis: &PcBasis) -> DVector<f64> {
        let pc = self.pc_index - 1;
        basis.component(pc) * (self.sign * self.magnitude * basis.std_dev(pc))
    }
}

pub fn apply_neural_perturbation(
    s: &RecurrentState,
    basis: &PcBasis,
    spec: &NeuralPerturbationSpec,
) -> Result<RecurrentState> {
    if spec.pc_index == 0 || spec.pc_index > basis.dim() {
        return Err(Error::Config(format!(
            "pc_index {} out of range",
            spec.pc_index
        )));
    }
    let flat = s.to_flat();
    crate::error::check_dim("recurrent state", basis.dim(), flat.len())?;
    RecurrentState::from_flat(&(flat + spec.displacement(basis)))
}

pub fn zero_recurrent_state_perturbation(s: &RecurrentState) -> RecurrentState {
    RecurrentState::zeros(s.n_cells())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuralExperimentConfig {
    pub speed: f64,
    pub steps: usize,
    pub warmup: usize,
    /// Steps skipped after the jump before phase is compared; one gait
    /// period measured from the nominal trace when absent.
    pub settle_steps: Option<usize>,
    pub phase_radius_threshold: f64,
}

impl Default for NeuralExperimentConfig {
    fn default() -> Self {
        NeuralExperimentConfig {
            speed: 2.0,
            steps: 1000,
            warmup: 200,
            settle_steps: None,
            phase_radius_threshold: 1e-6,
        }
    }
}

impl NeuralExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(Error::Config("speed must be finite and >= 0".into()));
        }
        if self.warmup >= self.steps {
            return Err(Error::Config("warmup must be shorter than steps".into()));
        }
        if !(self.phase_radius_threshold >= 0.0) {
            return Err(Error::Config("phase_radius_threshold must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMetrics {
    /// None when the limit cycle is too small to define a phase.
    pub phase_shift_rad: Option<f64>,
    pub max_deviation: f64,
    pub settle_steps: usize,
    pub tangentiality_at_apply: f64,
    /// Share of the jump lying in the PC1-PC2 plane.
    pub plane_alignment: f64,
    pub nominal_fell: bool,
    pub perturbed_fell: bool,
}

/// Paired rollouts with and without a state jump. Record `t` holds the
/// state after step `t`; the jump replaces the state entering step
/// `t_apply`, so records before `t_apply` are shared exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePair {
    pub nominal: RolloutTrace,
    pub perturbed: RolloutTrace,
    pub spec: NeuralPerturbationSpec,
    pub metrics: PairMetrics,
}

impl TracePair {
    /// `t, pc1..pc4 nominal, pc1..pc4 perturbed, applied_force`, where the
    /// applied force is the lateral push on the perturbed run.
    pub fn write_csv<W: Write>(&self, basis: &PcBasis, out: W) -> Result<()> {
        write_pair_csv(basis, &self.nominal, &self.perturbed, out)
    }
}

pub fn write_pair_csv<W: Write>(
    basis: &PcBasis,
    nominal: &RolloutTrace,
    perturbed: &RolloutTrace,
    out: W,
) -> Result<()> {
    let k = basis.dim().min(4);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("pc{i}_nominal")));
    header.extend((1..=k).map(|i| format!("pc{i}_perturbed")));
    header.push("applied_force".into());
    w.write_record(&header)?;
    for (n, p) in nominal.records.iter().zip(&perturbed.records) {
        let pn = basis.project(&n.state.to_flat(), k)?;
        let pp = basis.project(&p.state.to_flat(), k)?;
        let mut row = vec![n.t.to_string()];
        row.extend(pn.iter().map(|v| v.to_string()));
        row.extend(pp.iter().map(|v| v.to_string()));
        row.push(p.force[1].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn analysis_loop<'a>(net: &'a PolicyNet, env: &'a ToyEnv, speed: f64, seed: u64) -> ClosedLoop<'a> {
    let mut rng = rng_for(seed, stream::NEURAL, 0);
    let phase = rng.random_range(0.0..TAU);
    ClosedLoop::new(
        net,
        env,
        EnvState::walking(Command::forward(speed), phase),
        rng,
    )
}

/// Noise-free rollout at the analysis speed, as used for the nominal arm.
pub fn nominal_rollout(
    net: &PolicyNet,
    env: &ToyEnv,
    cfg: &NeuralExperimentConfig,
    seed: u64,
) -> Result<RolloutTrace> {
    cfg.validate()?;
    let env = ToyEnv::new(env.cfg.noise_free())?;
    analysis_loop(net, &env, cfg.speed, seed).run(cfg.steps, |_| [0.0, 0.0])
}

/// One gait period of the nominal trace, from PC1 autocorrelation.
pub fn nominal_period(basis: &PcBasis, nominal: &RolloutTrace, from: usize) -> Result<usize> {
    let pc1: Vec<f64> = nominal.records[from.min(nominal.len())..]
        .iter()
        .map(|r| basis.project(&r.state.to_flat(), 1).map(|p| p[0]))
        .collect::<Result<_>>()?;
    autocorrelation_period(&pc1)
        .ok_or_else(|| Error::Analysis("nominal trace shows no periodic PC1 component".into()))
}

pub fn neural_perturbation_experiment(
    net: &PolicyNet,
    env: &ToyEnv,
    basis: &PcBasis,
    spec: &NeuralPerturbationSpec,
    cfg: &NeuralExperimentConfig,
    seed: u64,
) -> Result<TracePair> {
    cfg.validate()?;
    spec.validate(basis, cfg.warmup)?;
    if spec.t_apply >= cfg.steps {
        return Err(Error::Config(format!(
            "t_apply {} must precede the end of the {}-step rollout",
            spec.t_apply, cfg.steps
        )));
    }
    let env = ToyEnv::new(env.cfg.noise_free())?;
    let nominal = analysis_loop(net, &env, cfg.speed, seed).run(cfg.steps, |_| [0.0, 0.0])?;

    let mut lp = analysis_loop(net, &env, cfg.speed, seed);
    let mut perturbed = lp.run(spec.t_apply, |_| [0.0, 0.0])?;
    let jumped = apply_neural_perturbation(lp.recurrent_state(), basis, spec)?;
    lp.set_recurrent_state(jumped);
    perturbed
        .records
        .extend(lp.run(cfg.steps - spec.t_apply, |_| [0.0, 0.0])?.records);

    let settle_steps = match cfg.settle_steps {
        Some(s) => s,
        None => nominal_period(basis, &nominal, cfg.warmup)?,
    };
    let ns = nominal.flat_states();
    let ps = perturbed.flat_states();
    let from = spec.t_apply.saturating_sub(1);
    let max_deviation = ns[from..]
        .iter()
        .zip(&ps[from..])
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let direction = spec.displacement(basis);
    let t_vel = spec.t_apply.clamp(1, ns.len() - 1);
    let tangentiality_at_apply = tangentiality(&ns, t_vel, &direction)?;
    let phase_shift_rad = match phase_shift(
        basis,
        &ns,
        &ps,
        spec.t_apply + settle_steps,
        cfg.phase_radius_threshold,
    ) {
        Ok(v) => Some(v),
        Err(Error::UndefinedPhase { .. }) => None,
        Err(e) => return Err(e),
    };
    let metrics = PairMetrics {
        phase_shift_rad,
        max_deviation,
        settle_steps,
        tangentiality_at_apply,
        plane_alignment: plane_alignment(basis, &direction),
        nominal_fell: nominal.fell(),
        perturbed_fell: perturbed.fell(),
    };
    Ok(TracePair {
        nominal,
        perturbed,
        spec: *spec,
        metrics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseClass {
    Tangential,
    Orthogonal,
    Unclassified,
}

pub const TANGENTIAL_MIN: f64 = 0.5;
pub const ORTHOGONAL_MAX: f64 = 0.2;

pub fn classify_tangentiality(value: f64) -> PhaseClass {
    if value >= TANGENTIAL_MIN {
        PhaseClass::Tangential
    } else if value <= ORTHOGONAL_MAX {
        PhaseClass::Orthogonal
    } else {
        PhaseClass::Unclassified
    }
}

/// Application steps in `from..to` where the nominal velocity is most and
/// least aligned with `direction`, as `(tangential, orthogonal)`.
pub fn extreme_application_steps(
    nominal: &RolloutTrace,
    direction: &DVector<f64>,
    from: usize,
    to: usize,
) -> Result<(usize, usize)> {
    let states = nominal.flat_states();
    let lo = from.max(1);
    let hi = to.min(states.len());
    if lo >= hi {
        return Err(Error::Config(format!(
            "empty application window {from}..{to}"
        )));
    }
    let mut best = (lo, f64::NEG_INFINITY);
    let mut worst = (lo, f64::INFINITY);
    for t in lo..hi {
        let v = tangentiality(&states, t, direction)?;
        if v > best.1 {
            best = (t, v);
        }
        if v < worst.1 {
            worst = (t, v);
        }
    }
    Ok((best.0, worst.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResponsePoint {
    pub t_apply: usize,
    pub tangentiality: f64,
    pub phase_shift_rad: Option<f64>,
    pub max_deviation: f64,
}

/// Phase response of the closed loop to the same jump applied at each of
/// `count` consecutive steps starting at `spec.t_apply`.
pub fn phase_response_curve(
    net: &PolicyNet,
    env: &ToyEnv,
    basis: &PcBasis,
    spec: &NeuralPerturbationSpec,
    count: usize,
    cfg: &NeuralExperimentConfig,
    seed: u64,
) -> Result<Vec<ResponsePoint>> {
    let mut cfg = cfg.clone();
    if cfg.settle_steps.is_none() {
        let nominal = nominal_rollout(net, env, &cfg, seed)?;
        cfg.settle_steps = Some(nominal_period(basis, &nominal, cfg.warmup)?);
    }
    (spec.t_apply..spec.t_apply + count)
        .into_par_iter()
        .map(|t| {
            let sp = NeuralPerturbationSpec {
                t_apply: t,
                ..*spec
            };
            let pair = neural_perturbation_experiment(net, env, basis, &sp, &cfg, seed)?;
            Ok(ResponsePoint {
                t_apply: t,
                tangentiality: pair.metrics.tangentiality_at_apply,
                phase_shift_rad: pair.metrics.phase_shift_rad,
                max_deviation: pair.metrics.max_deviation,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassContrast {
    pub n_tangential: usize,
    pub n_orthogonal: usize,
    pub tangential_mean_abs_shift: f64,
    pub orthogonal_mean_abs_shift: f64,
}

impl ClassContrast {
    pub fn ratio(&self) -> f64 {
        self.tangential_mean_abs_shift / self.orthogonal_mean_abs_shift
    }
}

/// Mean |phase shift| of the tangential and orthogonal application steps;
/// unclassified steps and steps without a defined phase are ignored.
pub fn class_contrast(points: &[ResponsePoint]) -> ClassContrast {
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for p in points {
        let Some(shift) = p.phase_shift_rad else {
            continue;
        };
        let slot = match classify_tangentiality(p.tangentiality) {
            PhaseClass::Tangential => 0,
            PhaseClass::Orthogonal => 1,
            PhaseClass::Unclassified => continue,
        };
        sums[slot] += shift.abs();
        counts[slot] += 1;
    }
    let mean = |k: usize| {
        if counts[k] == 0 {
            f64::NAN
        } else {
            sums[k] / counts[k] as f64
        }
    };
    ClassContrast {
        n_tangential: counts[0],
        n_orthogonal: counts[1],
        tangential_mean_abs_shift: mean(0),
        orthogonal_mean_abs_shift: mean(1),
    }
}
