use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::pca::PcBasis;

/// |cos| of the angle between `direction` and the state velocity
/// `states[t] - states[t - 1]`; zero when either vector vanishes.
pub fn tangentiality(states: &[DVector<f64>], t: usize, direction: &DVector<f64>) -> Result<f64> {
    if t == 0 || t >= states.len() {
        return Err(Error::Config(format!(
            "tangentiality needs 1 <= t < {}, got {t}",
            states.len()
        )));
    }
    let velocity = &states[t] - &states[t - 1];
    let denom = velocity.norm() * direction.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((velocity.dot(direction).abs() / denom).min(1.0))
}

/// Fraction of `direction`'s norm lying in the PC1-PC2 plane.
pub fn plane_alignment(basis: &PcBasis, direction: &DVector<f64>) -> f64 {
    let norm = direction.norm();
    if norm == 0.0 || basis.dim() < 2 {
        return 0.0;
    }
    let a = basis.component(0).dot(direction);
    let b = basis.component(1).dot(direction);
    (a * a + b * b).sqrt() / norm
}

fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        PI
    } else {
        w
    }
}

/// Steady offset of the PC1-PC2 phase of `perturbed` relative to
/// `nominal`, as the circular mean of the per-step angle differences over
/// `from..len`. Angles are measured around the nominal window's centroid.
pub fn phase_shift(
    basis: &PcBasis,
    nominal: &[DVector<f64>],
    perturbed: &[DVector<f64>],
    from: usize,
    radius_threshold: f64,
) -> Result<f64> {
    let len = nominal.len().min(perturbed.len());
    if from + 2 > len {
        return Err(Error::Config(format!(
            "phase window starts at {from} but traces have {len} steps"
        )));
    }
    let project = |s: &DVector<f64>| basis.project(s, 2);
    let nom: Vec<DVector<f64>> = nominal[from..len]
        .iter()
        .map(project)
        .collect::<Result<_>>()?;
    let per: Vec<DVector<f64>> = perturbed[from..len]
        .iter()
        .map(project)
        .collect::<Result<_>>()?;
    let count = nom.len() as f64;
    let centre = nom.iter().fold(DVector::zeros(2), |acc, p| acc + p) / count;
    let radius = nom.iter().map(|p| (p - &centre).norm()).sum::<f64>() / count;
    if !(radius >= radius_threshold) {
        return Err(Error::UndefinedPhase {
            radius,
            threshold: radius_threshold,
        });
    }
    let (mut sin_sum, mut cos_sum) = (0.0, 0.0);
    for (n, p) in nom.iter().zip(&per) {
        let tn = (n[1] - centre[1]).atan2(n[0] - centre[0]);
        let tp = (p[1] - centre[1]).atan2(p[0] - centre[0]);
        let d = wrap_pi(tp - tn);
        sin_sum += d.sin();
        cos_sum += d.cos();
    }
    Ok(wrap_pi(sin_sum.atan2(cos_sum)))
}

/// Dominant period (in steps) of a scalar series: the highest
/// autocorrelation peak after the first negative lobe.
pub fn autocorrelation_period(series: &[f64]) -> Option<usize> {
    let n = series.len();
    if n < 4 {
        return None;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return None;
    }
    let ac = |lag: usize| -> f64 { (0..n - lag).map(|t| x[t] * x[t + lag]).sum::<f64>() / energy };
    let max_lag = n / 2;
    let first_negative = (1..max_lag).find(|&lag| ac(lag) < 0.0)?;
    let (best, value) = (first_negative..max_lag)
        .map(|lag| (lag, ac(lag)))
        .fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
    (value > 0.0).then_some(best)
}
