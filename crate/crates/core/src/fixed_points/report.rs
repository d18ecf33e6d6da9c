use std::io::Write;

use nalgebra::DVector;
use serde_json::json;

use super::classify::{classify, FixedPointReport};
use super::cluster::cluster_candidates;
use super::field::FieldSample;
use super::finder::{find_fixed_points, FixedPointOptions};
use crate::error::{Error, Result};
use crate::pca::PcBasis;
use crate::policy::PolicyNet;

/// Output of the find → cluster → classify pipeline.
#[derive(Debug, Clone)]
pub struct FixedPointAnalysis {
    pub input_vector: DVector<f64>,
    pub n_inits: usize,
    pub n_converged: usize,
    pub n_diverged: usize,
    pub reports: Vec<FixedPointReport>,
    /// Candidate count behind each report.
    pub members: Vec<usize>,
    /// Clusters whose linearization failed, with the reason.
    pub failures: Vec<(DVector<f64>, String)>,
}

pub fn analyze(
    net: &PolicyNet,
    x: &DVector<f64>,
    n_inits: usize,
    opts: &FixedPointOptions,
    merge_radius: f64,
    tol_marginal: f64,
    seed: u64,
) -> Result<FixedPointAnalysis> {
    if !(merge_radius > 0.0) {
        return Err(Error::Config("merge_radius must be positive".into()));
    }
    if !(tol_marginal >= 0.0) {
        return Err(Error::Config("tol_marginal must be nonnegative".into()));
    }
    let cands = find_fixed_points(net, x, n_inits, opts, seed)?;
    let clusters = cluster_candidates(&cands, merge_radius);
    let mut reports = Vec::with_capacity(clusters.len());
    let mut members = Vec::with_capacity(clusters.len());
    let mut failures = Vec::new();
    for c in clusters {
        match classify(net, x, &c.state, tol_marginal) {
            Ok(r) => {
                reports.push(r);
                members.push(c.members);
            }
            Err(e) => failures.push((c.state, e.to_string())),
        }
    }
    Ok(FixedPointAnalysis {
        input_vector: x.clone(),
        n_inits,
        n_converged: cands.iter().filter(|c| c.converged).count(),
        n_diverged: cands.iter().filter(|c| c.diverged).count(),
        reports,
        members,
        failures,
    })
}

impl FixedPointAnalysis {
    pub fn to_json_value(&self) -> serde_json::Value {
        let fps: Vec<_> = self
            .reports
            .iter()
            .zip(&self.members)
            .map(|(r, m)| {
                json!({
                    "state": r.state.as_slice(),
                    "speed": r.speed,
                    "eigenvalues": r.eigenvalues.iter().map(|z| json!({"re": z.re, "im": z.im})).collect::<Vec<_>>(),
                    "class": r.class.name(),
                    "k_unstable": r.k_unstable(),
                    "members": m,
                    "min_eigen_gap": r.min_eigen_gap,
                })
            })
            .collect();
        json!({
            "input_vector": self.input_vector.as_slice(),
            "candidates_summary": {
                "n_inits": self.n_inits,
                "converged": self.n_converged,
                "diverged": self.n_diverged,
                "clusters": self.reports.len() + self.failures.len(),
                "analysis_failures": self.failures.iter().map(|(_, e)| e.clone()).collect::<Vec<_>>(),
            },
            "fixed_points": fps,
        })
    }
}

/// `fp, k, re, im, modulus` for every eigenvalue of every fixed point.
pub fn write_eigen_csv<W: Write>(reports: &[FixedPointReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fp", "k", "re", "im", "modulus"])?;
    for (i, r) in reports.iter().enumerate() {
        for (k, z) in r.eigenvalues.iter().enumerate() {
            w.write_record([
                i.to_string(),
                k.to_string(),
                z.re.to_string(),
                z.im.to_string(),
                z.norm().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `pc1, pc2, dpc1, dpc2`.
pub fn write_field_csv<W: Write>(samples: &[FieldSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pc1", "pc2", "dpc1", "dpc2"])?;
    for s in samples {
        w.write_record([
            s.pc1.to_string(),
            s.pc2.to_string(),
            s.dpc1.to_string(),
            s.dpc2.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `t, pc1..pc4, dist_to_fp` for an unforced trajectory.
pub fn write_decay_csv<W: Write>(
    trajectory: &[DVector<f64>],
    basis: &PcBasis,
    fp_state: &DVector<f64>,
    out: W,
) -> Result<()> {
    let k = basis.dim().min(4);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("pc{i}")));
    header.push("dist_to_fp".into());
    w.write_record(&header)?;
    for (t, s) in trajectory.iter().enumerate() {
        let p = basis.project(s, k)?;
        let mut row = vec![t.to_string()];
        row.extend(p.iter().map(|v| v.to_string()));
        row.push((s - fp_state).norm().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
