use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cumulative signal ratios `ᾱ_0 = 1 > ᾱ_1 > … > ᾱ_T > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// `ᾱ_t = cos²(π/2 · t/(T+1))`.
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("noise schedule needs T ≥ 1".into()));
        }
        let denom = (steps + 1) as f64;
        let alpha_bar = (0..=steps)
            .map(|t| {
                if t == 0 {
                    1.0
                } else {
                    (std::f64::consts::FRAC_PI_2 * t as f64 / denom)
                        .cos()
                        .powi(2)
                }
            })
            .collect();
        Self::from_alpha_bar(alpha_bar)
    }

    /// Explicit schedule; entry `t` is `ᾱ_t`, starting with `ᾱ_0 = 1`.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 || alpha_bar[0] != 1.0 {
            return Err(Error::Config(
                "schedule must start at ᾱ_0 = 1 with T ≥ 1".into(),
            ));
        }
        let last = alpha_bar[alpha_bar.len() - 1];
        if !(last > 0.0) || alpha_bar.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config(
                "ᾱ must be strictly decreasing and stay positive".into(),
            ));
        }
        Ok(Self { alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar.get(t).copied().ok_or(Error::OutOfRange {
            index: t,
            len: self.alpha_bar.len(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.alpha_bar
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_is_strictly_decreasing() {
        for steps in 1..=16 {
            let s = NoiseSchedule::cosine(steps).unwrap();
            assert_eq!(s.steps(), steps);
            assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
            assert!(s.alpha_bar(steps).unwrap() > 0.0);
            assert!(s.values().windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn one_step_value() {
        // cos²(π/4) = 1/2
        let s = NoiseSchedule::cosine(1).unwrap();
        assert!((s.alpha_bar(1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn explicit_schedules_validated() {
        assert!(NoiseSchedule::from_alpha_bar(vec![1.0, 0.5, 0.1]).is_ok());
        assert!(NoiseSchedule::from_alpha_bar(vec![0.9, 0.5]).is_err());
        assert!(NoiseSchedule::from_alpha_bar(vec![1.0, 0.5, 0.5]).is_err());
        assert!(NoiseSchedule::from_alpha_bar(vec![1.0, 0.0]).is_err());
        assert!(NoiseSchedule::from_alpha_bar(vec![1.0]).is_err());
        assert!(NoiseSchedule::cosine(0).is_err());
    }
}
