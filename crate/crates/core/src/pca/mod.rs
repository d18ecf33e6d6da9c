//! Recurrent-state datasets across commanded speeds and the principal
//! component basis fitted on them.

mod basis;
mod dataset;

pub use basis::{
    explained_variance_report, fit_pca, PcBasis, PcaFit, VarianceRow, SIGN_CONVENTION,
};
pub use dataset::{collect_rollouts, speed_sweep, RolloutConfig, RolloutDataset, RowMeta};
