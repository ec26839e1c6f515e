use std::f64::consts::PI;

/// Clamp bounds keeping γ away from {0,1} so sampling never divides by zero.
pub const GAMMA_MIN: f64 = 1e-5;
pub const GAMMA_MAX: f64 = 1.0 - 1e-5;

/// Signal-retention schedule γ(t) on t ∈ [0,1], strictly decreasing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseSchedule {
    /// γ(t) = cos²(π·t/2), clamped.
    Cosine,
    /// Affine between the same clamps.
    Linear,
}

impl NoiseSchedule {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cosine" => Some(NoiseSchedule::Cosine),
            "linear" => Some(NoiseSchedule::Linear),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseSchedule::Cosine => "cosine",
            NoiseSchedule::Linear => "linear",
        }
    }

    pub fn gamma(&self, t: f64) -> f64 {
        assert!((0.0..=1.0).contains(&t), "t = {t} outside [0,1]");
        let raw = match self {
            NoiseSchedule::Cosine => {
                let c = (PI * t / 2.0).cos();
                c * c
            }
            NoiseSchedule::Linear => GAMMA_MAX + t * (GAMMA_MIN - GAMMA_MAX),
        };
        raw.clamp(GAMMA_MIN, GAMMA_MAX)
    }
}
