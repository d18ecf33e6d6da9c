//! The MLP → LSTM → FC policy, its forward dynamics, recurrent Jacobians
//! and the JSON weight file.

mod io;
mod jacobian;
mod net;

pub use io::{load_weights, save_weights, weights_from_json, weights_to_json, FORMAT_VERSION};
pub use net::{Action, Dense, Dims, Gate, Lstm, LstmCache, PolicyNet, RecurrentState};
