use std::f64::consts::PI;

/// Linear warmup to the peak rate followed by cosine decay to zero.
#[derive(Clone, Copy, Debug)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup: u64,
    pub total: u64,
}

impl LrSchedule {
    pub fn new(peak: f64, warmup: u64, total: u64) -> Self {
        assert!(peak > 0.0, "peak learning rate must be positive");
        assert!(total > warmup, "total steps must exceed warmup");
        LrSchedule { peak, warmup, total }
    }

    /// Learning rate at `step`; steps past `total` clamp to the final value.
    pub fn lr_at(&self, step: u64) -> f64 {
        let step = step.min(self.total);
        if self.warmup > 0 && step <= self.warmup {
            return self.peak * step as f64 / self.warmup as f64;
        }
        let progress = (step - self.warmup) as f64 / (self.total - self.warmup) as f64;
        self.peak * 0.5 * (1.0 + (PI * progress).cos())
    }
}
