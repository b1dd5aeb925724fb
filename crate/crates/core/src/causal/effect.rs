use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;

/// Point estimate with normal-approximation inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub point: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

impl EffectEstimate {
    pub fn new(point: f64, std_error: f64) -> Self {
        let std_error = std_error.max(0.0);
        let half = Z95 * std_error;
        Self {
            point,
            std_error,
            ci_low: point - half,
            ci_high: point + half,
            p_value: two_sided_p(point, std_error),
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// `P(|Z| >= |point / se|)` under a standard normal.
pub fn two_sided_p(point: f64, se: f64) -> f64 {
    if se == 0.0 {
        return if point == 0.0 { 1.0 } else { 0.0 };
    }
    let z = (point / se).abs();
    erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_and_p_value() {
        let e = EffectEstimate::new(157.0, 10.0);
        assert!((e.ci_high - e.point - 19.59964).abs() < 1e-12);
        assert!(e.ci_low <= e.point && e.point <= e.ci_high);
        assert!(e.p_value < 1e-3);
        let z = EffectEstimate::new(1.959964, 1.0);
        assert!((z.p_value - 0.05).abs() < 1e-6);
        assert_eq!(EffectEstimate::new(0.0, 1.0).p_value, 1.0);
        assert_eq!(EffectEstimate::new(0.0, 0.0).p_value, 1.0);
        assert_eq!(EffectEstimate::new(1.0, 0.0).p_value, 0.0);
    }
}
