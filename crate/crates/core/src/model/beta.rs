use serde::{Deserialize, Serialize};

/// Linear KL-weight ramp: `beta(step) = cap * min(1, step / total_anneal_steps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub total_anneal_steps: u64,
    pub cap: f64,
    pub current_step: u64,
}

impl BetaSchedule {
    pub fn new(total_anneal_steps: u64, cap: f64) -> Self {
        Self {
            total_anneal_steps,
            cap,
            current_step: 0,
        }
    }

    pub fn at(&self, step: u64) -> f64 {
        if self.total_anneal_steps == 0 {
            return self.cap;
        }
        self.cap * (step as f64 / self.total_anneal_steps as f64).min(1.0)
    }

    pub fn value(&self) -> f64 {
        self.at(self.current_step)
    }

    pub fn advance(&mut self) {
        self.current_step += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramps_then_saturates() {
        let s = BetaSchedule::new(4, 1.0);
        let values: Vec<f64> = (0..7).map(|t| s.at(t)).collect();
        assert_eq!(values, vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0]);
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zero_length_ramp_is_the_cap() {
        assert_eq!(BetaSchedule::new(0, 0.3).at(0), 0.3);
    }

    #[test]
    fn advance_moves_the_cursor() {
        let mut s = BetaSchedule::new(2, 0.5);
        s.advance();
        assert_eq!(s.value(), 0.25);
    }
}
