use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{c, Real};

/// Uniform time grid `t_i = i T / n`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GridSpec<S: Real> {
    #[serde(rename = "T")]
    horizon: S,
    n: usize,
}

/// Steps per unit time used when a caller gives only the horizon.
pub const DEFAULT_STEPS_PER_UNIT: usize = 20;

impl<S: Real> GridSpec<S> {
    pub fn new(horizon: S, n: usize) -> Result<Self> {
        if !(horizon > S::zero()) || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!("horizon must be positive and finite, got {horizon}")));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 steps, got {n}")));
        }
        Ok(Self { horizon, n })
    }

    /// Grid with `steps_per_unit` steps per unit of time (at least 2 steps).
    pub fn with_density(horizon: S, steps_per_unit: usize) -> Result<Self> {
        let n = (horizon * S::from_count(steps_per_unit)).round().to_usize().unwrap_or(0).max(2);
        Self::new(horizon, n)
    }

    #[inline]
    pub fn horizon(&self) -> S {
        self.horizon
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn delta(&self) -> S {
        self.horizon / S::from_count(self.n)
    }

    #[inline]
    pub fn time(&self, i: usize) -> S {
        // exact endpoint, no accumulated rounding
        if i == self.n {
            self.horizon
        } else {
            self.horizon * S::from_count(i) / S::from_count(self.n)
        }
    }

    /// Midpoint of step `i`, `(t_i + t_{i+1}) / 2`.
    #[inline]
    pub fn midpoint(&self, i: usize) -> S {
        self.horizon * (S::from_count(i) + c(0.5)) / S::from_count(self.n)
    }

    pub fn times(&self) -> Vec<S> {
        (0..=self.n).map(|i| self.time(i)).collect()
    }

    pub fn midpoints(&self) -> Vec<S> {
        (0..self.n).map(|i| self.midpoint(i)).collect()
    }

    /// Same horizon with twice as many steps.
    pub fn refined(&self) -> Self {
        Self { horizon: self.horizon, n: 2 * self.n }
    }

    pub fn ensure_same(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.horizon != other.horizon {
            return Err(Error::GridMismatch(format!(
                "grid (T={}, n={}) vs (T={}, n={})",
                self.horizon, self.n, other.horizon, other.n
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(0.0_f64, 10).is_err());
        assert!(GridSpec::new(1.0_f64, 1).is_err());
        assert!(GridSpec::new(f64::NAN, 10).is_err());
    }

    #[test]
    fn nodes_and_midpoints() {
        let g = GridSpec::new(10.0_f64, 200).unwrap();
        assert_eq!(g.delta(), 0.05);
        assert_eq!(g.time(200), 10.0);
        assert!((g.midpoint(0) - 0.025).abs() < 1e-15);
        assert_eq!(g.times().len(), 201);
    }

    #[test]
    fn density_constructor() {
        let g = GridSpec::with_density(100.0_f64, DEFAULT_STEPS_PER_UNIT).unwrap();
        assert_eq!(g.steps(), 2000);
    }
}
