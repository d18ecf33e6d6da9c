use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::finder::speed;
use crate::error::{check_dim, Error, Result};
use crate::policy::{PolicyNet, RecurrentState};

/// Discrete-time stability from eigenvalue moduli relative to the unit
/// circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "class")]
pub enum StabilityClass {
    Attractor,
    Saddle { k_unstable: usize },
    Marginal,
}

impl StabilityClass {
    pub fn name(&self) -> &'static str {
        match self {
            StabilityClass::Attractor => "attractor",
            StabilityClass::Saddle { .. } => "saddle",
            StabilityClass::Marginal => "marginal",
        }
    }

    pub fn k_unstable(&self) -> usize {
        match self {
            StabilityClass::Saddle { k_unstable } => *k_unstable,
            _ => 0,
        }
    }
}

/// Attractor if every modulus is below `1 - tol`; marginal if the largest
/// lies within `[1 - tol, 1 + tol]`; otherwise a saddle with one unstable
/// direction per modulus above `1 + tol`.
pub fn classify_moduli(moduli: &[f64], tol_marginal: f64) -> StabilityClass {
    let max = moduli.iter().copied().fold(0.0f64, f64::max);
    if max < 1.0 - tol_marginal {
        StabilityClass::Attractor
    } else if max <= 1.0 + tol_marginal {
        StabilityClass::Marginal
    } else {
        StabilityClass::Saddle {
            k_unstable: moduli.iter().filter(|&&m| m > 1.0 + tol_marginal).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub state: DVector<f64>,
    pub speed: f64,
    /// Sorted by descending modulus.
    pub eigenvalues: Vec<Complex64>,
    pub class: StabilityClass,
    /// Smallest distance between two eigenvalues; near zero flags a
    /// possibly defective Jacobian whose eigenvectors are ill-conditioned.
    pub min_eigen_gap: f64,
}

impl FixedPointReport {
    pub fn moduli(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|z| z.norm()).collect()
    }

    pub fn k_unstable(&self) -> usize {
        self.class.k_unstable()
    }
}

pub(crate) fn eigenvalues_sorted(jac: DMatrix<f64>) -> Result<Vec<Complex64>> {
    let schur = Schur::try_new(jac, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Analysis("eigensolver did not converge".into()))?;
    let mut eig: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
    Ok(eig)
}

/// Linearizes the recurrent map at `fp_state` and classifies it.
pub fn classify(
    net: &PolicyNet,
    x: &DVector<f64>,
    fp_state: &DVector<f64>,
    tol_marginal: f64,
) -> Result<FixedPointReport> {
    check_dim("fixed point", net.dims.state_len(), fp_state.len())?;
    let state = RecurrentState::from_flat(fp_state)?;
    let jac = net.recurrent_jacobian(&state, x)?;
    let eigenvalues = eigenvalues_sorted(jac)?;
    let moduli: Vec<f64> = eigenvalues.iter().map(|z| z.norm()).collect();
    let mut min_gap = f64::INFINITY;
    for i in 0..eigenvalues.len() {
        for j in (i + 1)..eigenvalues.len() {
            min_gap = min_gap.min((eigenvalues[i] - eigenvalues[j]).norm());
        }
    }
    Ok(FixedPointReport {
        state: fp_state.clone(),
        speed: speed(net, fp_state, x),
        class: classify_moduli(&moduli, tol_marginal),
        eigenvalues,
        min_eigen_gap: min_gap,
    })
}

/// Unit eigenvector for a real eigenvalue by shifted inverse iteration.
pub fn real_eigenvector(jac: &DMatrix<f64>, lambda: f64) -> Option<DVector<f64>> {
    let n = jac.nrows();
    let shift = lambda + 1e-10 * lambda.abs().max(1.0);
    let lu = (jac - DMatrix::identity(n, n) * shift).lu();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    for _ in 0..50 {
        let mut w = lu.solve(&v)?;
        let norm = w.norm();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        w /= norm;
        let pivot = w.iamax();
        if w[pivot] < 0.0 {
            w = -w;
        }
        let done = (&w - &v).amax() < 1e-13;
        v = w;
        if done {
            break;
        }
    }
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_bands() {
        let tol = 0.005;
        assert_eq!(classify_moduli(&[0.5, 0.2], tol), StabilityClass::Attractor);
        assert_eq!(
            classify_moduli(&[0.999, 0.2], tol),
            StabilityClass::Marginal
        );
        assert_eq!(
            classify_moduli(&[1.004, 0.2], tol),
            StabilityClass::Marginal
        );
        assert_eq!(
            classify_moduli(&[1.2, 0.2, 1.01], tol),
            StabilityClass::Saddle { k_unstable: 2 }
        );
    }

    #[test]
    fn classification_ignores_order() {
        let m = [0.3, 1.5, 0.9, 1.1];
        let mut r = m;
        r.reverse();
        assert_eq!(classify_moduli(&m, 0.005), classify_moduli(&r, 0.005));
    }

    #[test]
    fn inverse_iteration_finds_known_vector() {
        let jac = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 0.5]);
        let v = real_eigenvector(&jac, 2.0).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-10 && v[1].abs() < 1e-10);
    }
}
