use serde::{Deserialize, Serialize};

/// Linear interpolation from `initial` to `final` over `duration` steps,
/// then constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_value: f64,
    pub duration: u64,
}

impl LinearSchedule {
    pub const fn new(initial: f64, final_value: f64, duration: u64) -> Self {
        Self { initial, final_value, duration }
    }

    pub fn value(&self, step: u64) -> f64 {
        if self.duration == 0 {
            return self.final_value;
        }
        let mix = (step as f64 / self.duration as f64).min(1.0);
        (1.0 - mix) * self.initial + mix * self.final_value
    }
}
