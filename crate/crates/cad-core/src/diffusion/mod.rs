//! Forward corruption, training losses, guidance rules and the
//! DDPM/DDIM sampler family.

pub mod guidance;
pub mod loss;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use guidance::{guided_eps, GuidanceMode, GuidanceSpec};
pub use loss::{corrupt, diffusion_loss, LossNorm};
pub use sampler::{sample, sampler_step};
pub use schedule::NoiseSchedule;
pub use train::{train, TrainConfig, TrainResult};
