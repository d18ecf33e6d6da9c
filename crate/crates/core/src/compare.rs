//! Trains one model per truncation length under otherwise identical
//! settings and runs the same push-recovery grid on each.

use std::io::Write;

use serde::Serialize;

use crate::env::ToyEnv;
use crate::error::{Error, Result};
use crate::perturb::{robustness_grid, GridConfig, GridResult};
use crate::policy::{Dims, PolicyNet};
use crate::train::{initial_net, train, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationRow {
    pub k_trunc: usize,
    pub final_eval_loss: f64,
    pub final_tracking_error: f64,
    pub summed_fraction: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone)]
pub struct TruncationRun {
    pub row: TruncationRow,
    pub net: PolicyNet,
    pub report: TrainReport,
    pub grid: GridResult,
}

/// Every model starts from the same initial weights and training seed, so
/// `k_trunc` is the only difference between runs.
pub fn compare_truncations(
    env: &ToyEnv,
    dims: &Dims,
    base: &TrainConfig,
    k_values: &[usize],
    grid: &GridConfig,
    grid_seed: u64,
) -> Result<Vec<TruncationRun>> {
    if k_values.is_empty() {
        return Err(Error::Config("no truncation lengths to compare".into()));
    }
    grid.validate()?;
    let mut runs = Vec::with_capacity(k_values.len());
    for &k_trunc in k_values {
        let cfg = TrainConfig {
            k_trunc,
            ..base.clone()
        };
        cfg.validate()?;
        let (net, report) = train(initial_net(dims.clone(), cfg.seed)?, env, &cfg)?;
        let result = robustness_grid(&net, env, grid, grid_seed)?;
        runs.push(TruncationRun {
            row: TruncationRow {
                k_trunc,
                final_eval_loss: report.final_eval_loss,
                final_tracking_error: report.final_tracking_error,
                summed_fraction: result.summed_fraction(),
                n_cells: result.cells.len(),
            },
            net,
            report,
            grid: result,
        });
    }
    Ok(runs)
}

pub fn write_comparison_csv<W: Write>(rows: &[TruncationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "k_trunc",
        "final_eval_loss",
        "final_tracking_error",
        "summed_fraction",
        "n_cells",
    ])?;
    for r in rows {
        w.write_record([
            r.k_trunc.to_string(),
            r.final_eval_loss.to_string(),
            r.final_tracking_error.to_string(),
            r.summed_fraction.to_string(),
            r.n_cells.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
