//! Fixed points of the recurrent map under a constant input: search by
//! minimizing the speed function, clustering, linearization and
//! classification, and the unforced dynamics around them.

mod classify;
mod cluster;
mod field;
mod finder;
mod report;

pub use classify::{classify, classify_moduli, real_eigenvector, FixedPointReport, StabilityClass};
pub use cluster::{cluster_candidates, FixedPointCluster};
pub use field::{local_gradient_field, unforced_rollout, FieldSample, GridSpec};
pub use finder::{
    find_fixed_points, speed, speed_gradient, zero_input_vector, FixedPointCandidate,
    FixedPointOptions, InitScheme,
};
pub use report::{analyze, write_decay_csv, write_eigen_csv, write_field_csv, FixedPointAnalysis};
