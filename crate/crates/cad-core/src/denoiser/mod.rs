//! Small conditional denoiser: sinusoidal time features, a class embedding
//! table (with a reserved null row for CFG), a learned coherence embedding
//! and the merged condition h(y, c), feeding a plain MLP trunk.

pub mod embed;
pub mod model;
pub mod probe;

pub use embed::embed_time;
pub use model::{Denoiser, DenoiserConfig};
pub use probe::{collapse_probe, trunk_lipschitz_estimate};
