//! Dense f64 tensors with tape-based reverse-mode autodiff, plus the
//! optimizers and learning-rate schedule used by the training loop.

pub mod checkpoint;
pub mod ema;
pub mod optim;
pub mod params;
pub mod schedule;
pub mod tape;
pub mod tensor;

pub use ema::ema_update;
pub use optim::{OptimizerHyper, OptimizerKind, OptimizerState};
pub use params::Params;
pub use schedule::LrSchedule;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
