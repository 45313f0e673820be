use crate::error::{Error, Result};

/// Global learning rate `t^(k)` as a function of the iteration index.
#[derive(Debug, Clone, PartialEq)]
pub enum LrSchedule {
    Constant { t0: f64 },
    /// `t0 / (1 + γk)^p`
    InverseTime { t0: f64, gamma: f64, power: f64 },
    /// `t0 · factor^m` where `m` counts milestones `≤ k`.
    StepDecay {
        t0: f64,
        milestones: Vec<u64>,
        factor: f64,
    },
}

impl LrSchedule {
    pub fn constant(t0: f64) -> Self {
        LrSchedule::Constant { t0 }
    }

    pub fn initial_rate(&self) -> f64 {
        match *self {
            LrSchedule::Constant { t0 }
            | LrSchedule::InverseTime { t0, .. }
            | LrSchedule::StepDecay { t0, .. } => t0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t0 = self.initial_rate();
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(Error::Config(format!("initial learning rate must be positive, got {t0}")));
        }
        match self {
            LrSchedule::Constant { .. } => Ok(()),
            LrSchedule::InverseTime { gamma, power, .. } => {
                if !(*gamma >= 0.0 && *power >= 0.0 && gamma.is_finite() && power.is_finite()) {
                    return Err(Error::Config(format!(
                        "inverse-time schedule needs gamma >= 0 and p >= 0, got {gamma}, {power}"
                    )));
                }
                Ok(())
            }
            LrSchedule::StepDecay { milestones, factor, .. } => {
                if !(*factor > 0.0 && factor.is_finite()) {
                    return Err(Error::Config(format!("step-decay factor must be positive, got {factor}")));
                }
                if milestones.windows(2).any(|w| w[0] > w[1]) {
                    return Err(Error::Config(format!("milestones must be sorted: {milestones:?}")));
                }
                Ok(())
            }
        }
    }

    pub fn rate(&self, k: u64) -> f64 {
        match self {
            LrSchedule::Constant { t0 } => *t0,
            LrSchedule::InverseTime { t0, gamma, power } => {
                t0 / (1.0 + gamma * k as f64).powf(*power)
            }
            LrSchedule::StepDecay {
                t0,
                milestones,
                factor,
            } => {
                let drops = milestones.iter().filter(|&&m| m <= k).count();
                t0 * factor.powi(drops as i32)
            }
        }
    }
}

pub fn schedule_rate(schedule: &LrSchedule, k: u64) -> f64 {
    schedule.rate(k)
}
