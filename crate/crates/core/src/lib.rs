//! Recurrent locomotion policies in a toy closed loop, and the tools to
//! reverse-engineer them: fixed points of the recurrent map, PCA of the
//! recurrent population, targeted state perturbations and push-recovery
//! grids.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compare;
pub mod env;
pub mod error;
pub mod fixed_points;
pub mod pca;
pub mod perturb;
pub mod policy;
pub mod rollout;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
pub use policy::{Action, Dims, PolicyNet, RecurrentState};
