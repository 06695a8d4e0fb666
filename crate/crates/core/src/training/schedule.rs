use serde::{Deserialize, Serialize};

/// Linear KL annealing: `beta(step) = cap * min(1, step / total_steps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub cap: f64,
    pub total_steps: u64,
}

impl AnnealSchedule {
    pub fn new(cap: f64, total_steps: u64) -> Self {
        AnnealSchedule { cap, total_steps }
    }

    pub fn beta(&self, step: u64) -> f64 {
        if self.total_steps == 0 {
            return self.cap;
        }
        self.cap * (step as f64 / self.total_steps as f64).min(1.0)
    }
}
