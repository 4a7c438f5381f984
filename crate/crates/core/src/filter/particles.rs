use nalgebra::{Vector2, Vector4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::log_sum_exp;
use crate::motion::SensorState;

/// Weighted particle approximation of the sensor state density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleBelief {
    pub states: Vec<Vector4<f64>>,
    /// Normalized log-weights.
    pub log_weights: Vec<f64>,
}

impl ParticleBelief {
    pub fn uniform(states: Vec<Vector4<f64>>) -> Self {
        let n = states.len();
        Self {
            states,
            log_weights: vec![-(n as f64).ln(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// Renormalize the log-weights; fails when no weight is finite and positive.
    pub fn normalize(&mut self, time_index: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::NumericalFailure {
                time_index,
                reason: "empty particle set".into(),
            });
        }
        if self.log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::NumericalFailure {
                time_index,
                reason: "non-finite particle weight".into(),
            });
        }
        let total = log_sum_exp(self.log_weights.iter().copied());
        if !total.is_finite() {
            return Err(Error::NumericalFailure {
                time_index,
                reason: "all particle weights are zero".into(),
            });
        }
        self.log_weights.iter_mut().for_each(|w| *w -= total);
        Ok(())
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.log_weights.iter().map(|w| (2.0 * w).exp()).sum::<f64>()
    }

    pub fn mean(&self) -> Vector4<f64> {
        self.states
            .iter()
            .zip(&self.log_weights)
            .map(|(s, w)| s * w.exp())
            .sum()
    }

    pub fn mean_state(&self) -> SensorState {
        SensorState::from_vector(&self.mean())
    }

    pub fn mean_position(&self) -> Vector2<f64> {
        let m = self.mean();
        Vector2::new(m[0], m[1])
    }
}

/// Number of copies of each particle under systematic resampling with
/// offset `u ∈ [0, 1)`.
pub fn systematic_counts(weights: &[f64], u: f64) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::NumericalFailure {
            time_index: 0,
            reason: "resampling needs non-negative weights with positive sum".into(),
        });
    }
    let n = weights.len();
    let mut counts = vec![0usize; n];
    let mut cumulative = 0.0;
    let mut index = 0;
    for slot in 0..n {
        let target = (slot as f64 + u) / n as f64 * total;
        while index + 1 < n && cumulative + weights[index] <= target {
            cumulative += weights[index];
            index += 1;
        }
        counts[index] += 1;
    }
    Ok(counts)
}

/// Systematic resampling to equal weights.
pub fn resample(belief: &ParticleBelief, rng: &mut impl Rng) -> Result<ParticleBelief> {
    let counts = systematic_counts(&belief.weights(), rng.random::<f64>())?;
    let states = counts
        .iter()
        .zip(&belief.states)
        .flat_map(|(&c, s)| std::iter::repeat_n(*s, c))
        .collect();
    Ok(ParticleBelief::uniform(states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn systematic_counts_example() {
        for u in [0.0, 0.3, 0.99] {
            assert_eq!(systematic_counts(&[0.75, 0.25, 0.0, 0.0], u).unwrap(), vec![3, 1, 0, 0]);
        }
    }

    #[test]
    fn zero_weights_fail() {
        assert!(matches!(
            systematic_counts(&[0.0, 0.0], 0.5),
            Err(Error::NumericalFailure { .. })
        ));
    }

    #[test]
    fn normalize_rejects_nan() {
        let mut b = ParticleBelief::uniform(vec![Vector4::zeros(); 2]);
        b.log_weights[0] = f64::NAN;
        assert!(matches!(b.normalize(7), Err(Error::NumericalFailure { time_index: 7, .. })));
    }

    proptest! {
        #[test]
        fn counts_track_weights(raw in prop::collection::vec(0.0..1.0f64, 1..50), u in 0.0..1.0f64) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-6);
            let counts = systematic_counts(&raw, u).unwrap();
            let n = raw.len();
            prop_assert_eq!(counts.iter().sum::<usize>(), n);
            let total: f64 = raw.iter().sum();
            for (c, w) in counts.iter().zip(&raw) {
                let expected = w / total * n as f64;
                prop_assert!((*c as f64 - expected).abs() < 1.0 + 1e-9);
            }
        }
    }
}
