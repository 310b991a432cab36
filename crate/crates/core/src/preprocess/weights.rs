use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Inverse class-frequency weights: `w_y = 1 / f_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w0: f64,
    pub w1: f64,
}

impl ClassWeights {
    pub fn from_labels(labels: &[u8]) -> Result<Self> {
        let n = labels.len();
        let n1 = labels.iter().filter(|&&y| y == 1).count();
        let n0 = n - n1;
        if n0 == 0 || n1 == 0 {
            return Err(Error::Stratification(
                "class weights need both outcome classes".into(),
            ));
        }
        Ok(Self {
            w0: n as f64 / n0 as f64,
            w1: n as f64 / n1 as f64,
        })
    }

    /// Weights implied by a positive-class frequency.
    pub fn from_event_rate(f1: f64) -> Result<Self> {
        if !(f1 > 0.0 && f1 < 1.0) {
            return Err(Error::Config(format!("event rate {f1} outside (0, 1)")));
        }
        Ok(Self {
            w0: 1.0 / (1.0 - f1),
            w1: 1.0 / f1,
        })
    }

    pub fn uniform() -> Self {
        Self { w0: 1.0, w1: 1.0 }
    }

    pub fn weight(&self, label: u8) -> f64 {
        if label == 1 {
            self.w1
        } else {
            self.w0
        }
    }

    pub fn sample_weights(&self, labels: &[u8]) -> Vec<f64> {
        labels.iter().map(|&y| self.weight(y)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn balanced_labels() {
        let w = ClassWeights::from_labels(&[0, 1, 0, 1]).unwrap();
        assert_eq!((w.w0, w.w1), (2.0, 2.0));
    }

    #[test]
    fn reference_event_rate() {
        let w = ClassWeights::from_event_rate(0.196).unwrap();
        assert!((w.w1 - 5.102).abs() < 1e-3);
        assert!((w.w0 - 1.244).abs() < 1e-3);
    }

    #[test]
    fn ten_percent_positives() {
        let labels: Vec<u8> = (0..10).map(|i| u8::from(i == 0)).collect();
        let w = ClassWeights::from_labels(&labels).unwrap();
        assert_eq!(w.w1, 10.0);
        assert!((w.w0 - 10.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(ClassWeights::from_labels(&[1, 1, 1]).is_err());
    }

    proptest! {
        #[test]
        fn weight_times_frequency_is_one(labels in proptest::collection::vec(0u8..2, 2..400)) {
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let w = ClassWeights::from_labels(&labels).unwrap();
            let n = labels.len() as f64;
            let f1 = labels.iter().filter(|&&y| y == 1).count() as f64 / n;
            let f0 = labels.iter().filter(|&&y| y == 0).count() as f64 / n;
            prop_assert!((w.w1 * f1 - 1.0).abs() < 1e-12);
            prop_assert!((w.w0 * f0 - 1.0).abs() < 1e-12);
        }
    }
}
