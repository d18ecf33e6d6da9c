//! Closed-loop imitation of the teacher with truncated backpropagation
//! through time.

mod adam;
mod tbptt;
mod trainer;

pub use adam::{adam_update, Adam, AdamConfig};
pub use tbptt::{sequence_gradients, tbptt_gradients, Window, WindowGradients};
pub use trainer::{
    evaluate, initial_net, observation_sensitivity, train, train_with, TrainConfig, TrainReport,
};
