//! Reverse-mode autodiff and the neural-network building blocks on top of it.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;

pub use checkpoint::Checkpoint;
pub use layers::{Conv1d, Embedding, Linear, Lstm, LstmState};
pub use optim::{Adam, AdamConfig};
pub use params::{Ctx, Gradients, ParamId, ParamStore};
pub use tape::{Matrix, Tape, Var};
