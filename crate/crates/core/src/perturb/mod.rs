//! Targeted neural perturbations, physical push trials and grids, the
//! training-time push scheduler, and the metrics that go with them.

mod metrics;
mod neural;
mod physical;
mod scheduler;

pub use metrics::{autocorrelation_period, phase_shift, plane_alignment, tangentiality};
pub use neural::{
    apply_neural_perturbation, class_contrast, classify_tangentiality, extreme_application_steps,
    neural_perturbation_experiment, nominal_period, nominal_rollout, phase_response_curve,
    write_pair_csv, zero_recurrent_state_perturbation, ClassContrast, NeuralExperimentConfig,
    NeuralPerturbationSpec, PairMetrics, PhaseClass, ResponsePoint, TracePair, ORTHOGONAL_MAX,
    TANGENTIAL_MIN,
};
pub use physical::{
    agent_seed, physical_perturbation_trial, robustness_grid, GridCell, GridConfig, GridResult,
    PhysicalPerturbationSpec, PhysicalTrialConfig, RecoveryCriterion, TrialOutcome,
};
pub use scheduler::{scheduler_step, ScheduleState, SchedulerConfig, TrainingPerturbSchedule};
