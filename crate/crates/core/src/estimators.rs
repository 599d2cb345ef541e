//! Drift estimators from a sampled trajectory and the asymptotic constants
//! of their central limit theorems.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{c, Real};
use crate::simulate::{IncrementGram, Trajectory};
use crate::special::gamma;

/// One replication's estimator outputs. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub seed: u64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n: usize,
    #[serde(rename = "H")]
    pub hurst: f64,
    pub theta_true: f64,
    pub theta_tilde: f64,
    pub theta_hat_naive: f64,
    pub theta_hat_skorohod: f64,
    pub int_x2: f64,
}

impl EstimateRecord {
    pub const CSV_COLUMNS: [&'static str; 9] =
        ["seed", "T", "n", "H", "theta_true", "theta_tilde", "theta_hat_naive", "theta_hat_skorohod", "int_x2"];
}

fn check_hurst<S: Real>(h: S) -> Result<()> {
    if h > S::zero() && h < S::one() {
        Ok(())
    } else {
        Err(Error::Domain(format!("H must lie in (0, 1), got {h}")))
    }
}

/// Moment estimator from the time average of `X^2`:
/// `(m / (sigma^2 H Gamma(2H)))^{-1/(2H)}`.
pub fn me_from_int_x2<S: Real>(int_x2: S, hurst: S, sigma: S) -> Result<S> {
    check_hurst(hurst)?;
    if !(int_x2 > S::zero()) || !int_x2.is_finite() {
        return Err(Error::Degenerate(format!("time average of X^2 must be positive, got {int_x2}")));
    }
    if !(sigma > S::zero()) {
        return Err(Error::Degenerate(format!("sigma must be positive, got {sigma}")));
    }
    let two_h = c::<S>(2.0) * hurst;
    let scale = sigma * sigma * hurst * gamma(two_h);
    Ok((int_x2 / scale).powf(-two_h.recip()))
}

pub fn estimate_me<S: Real>(trajectory: &Trajectory<S>, hurst: S) -> Result<S> {
    me_from_int_x2(trajectory.int_x2(), hurst, trajectory.sigma)
}

fn denominator<S: Real>(trajectory: &Trajectory<S>) -> Result<S> {
    let d = trajectory.int_x2() * trajectory.grid.horizon();
    if !(d > S::zero()) || !d.is_finite() {
        return Err(Error::Degenerate("trajectory is identically zero".into()));
    }
    Ok(d)
}

/// Pathwise least squares `-sum X_i (X_{i+1} - X_i) / int X^2 dt`.
pub fn estimate_lse_naive<S: Real>(trajectory: &Trajectory<S>) -> Result<S> {
    let den = denominator(trajectory)?;
    Ok(-trajectory.forward_sum() / den)
}

/// Expected noise part of the forward sum under drift `theta0`:
/// `sum_{d>=1} e^{-theta0 d dt} sum_i C_{i, i-d}`.
pub fn skorohod_correction<S: Real>(gram: &IncrementGram<S>, theta0: S) -> S {
    let rho = (-theta0 * gram.grid().delta()).exp();
    let mut weight = S::one();
    let mut acc = S::zero();
    for &sd in &gram.diagonal_sums()[1..] {
        weight = weight * rho;
        if weight < c(1e-300) {
            break;
        }
        acc = acc + weight * sd;
    }
    acc
}

/// Least squares with the forward sum recentred to a zero-mean integral:
/// the moment estimator is the pilot drift for the correction.
pub fn estimate_lse_skorohod<S: Real>(trajectory: &Trajectory<S>, gram: &IncrementGram<S>, hurst: S) -> Result<S> {
    gram.grid().ensure_same(&trajectory.grid)?;
    let den = denominator(trajectory)?;
    let s2 = trajectory.sigma * trajectory.sigma;
    let correction = if s2 == S::zero() {
        S::zero()
    } else {
        skorohod_correction(gram, estimate_me(trajectory, hurst)?)
    };
    Ok(-(trajectory.forward_sum() - s2 * correction) / den)
}

/// All three estimators for one trajectory.
pub fn estimate_all<S: Real>(
    trajectory: &Trajectory<S>,
    gram: &IncrementGram<S>,
    hurst: S,
    theta_true: Option<S>,
) -> Result<EstimateRecord> {
    let f = |x: S| x.to_f64_lossy();
    Ok(EstimateRecord {
        seed: trajectory.seed,
        horizon: f(trajectory.grid.horizon()),
        n: trajectory.grid.steps(),
        hurst: f(hurst),
        theta_true: theta_true.map_or(f64::NAN, f),
        theta_tilde: f(estimate_me(trajectory, hurst)?),
        theta_hat_naive: f(estimate_lse_naive(trajectory)?),
        theta_hat_skorohod: f(estimate_lse_skorohod(trajectory, gram, hurst)?),
        int_x2: f(trajectory.int_x2()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct AsymptoticConstants<S: Real> {
    #[serde(rename = "sigma_H2")]
    pub sigma_h2: S,
    pub lse_var: S,
    pub me_var: S,
    /// Berry-Esseen exponent, defined for `H < 3/8` only.
    pub delta: Option<S>,
    pub h_quarter_flag: bool,
}

/// `(4H - 1) + 2 Gamma(2 - 4H) Gamma(4H) / (Gamma(2H) Gamma(1 - 2H))`,
/// with its limit `2/pi` used within `1e-6` of `4H = 1`.
pub fn sigma_h2<S: Real>(hurst: S) -> Result<S> {
    if !(hurst > S::zero() && hurst < c(0.5)) {
        return Err(Error::Domain(format!(
            "the limiting variance requires H in (0, 1/2), got {hurst}"
        )));
    }
    let four_h = c::<S>(4.0) * hurst;
    if (four_h - S::one()).abs() < c(1e-6) {
        return Ok(c::<S>(2.0) / S::PI());
    }
    let two_h = c::<S>(2.0) * hurst;
    Ok(four_h - S::one()
        + c::<S>(2.0) * gamma(c::<S>(2.0) - four_h) * gamma(four_h) / (gamma(two_h) * gamma(S::one() - two_h)))
}

/// Berry-Esseen exponent: `1/2` on `(0, 1/4]`, `3/2 - 4H` on `(1/4, 3/8)`.
pub fn berry_esseen_delta<S: Real>(hurst: S) -> Result<S> {
    if !(hurst > S::zero() && hurst < c(0.375)) {
        return Err(Error::Domain(format!("the Berry-Esseen bound assumes H in (0, 3/8), got {hurst}")));
    }
    if hurst <= c(0.25) {
        Ok(c(0.5))
    } else {
        Ok(c::<S>(1.5) - c::<S>(4.0) * hurst)
    }
}

pub fn asymptotic_constants<S: Real>(theta: S, hurst: S) -> Result<AsymptoticConstants<S>> {
    if !(theta > S::zero()) || !theta.is_finite() {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    let s2 = sigma_h2(hurst)?;
    let lse_var = theta * s2;
    Ok(AsymptoticConstants {
        sigma_h2: s2,
        lse_var,
        me_var: lse_var / (c::<S>(4.0) * hurst * hurst),
        delta: berry_esseen_delta(hurst).ok(),
        h_quarter_flag: (hurst - c(0.25)).abs() < c(1e-9),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn me_fixed_point() {
        let h = 0.3_f64;
        let a = h * gamma(2.0 * h);
        assert!((me_from_int_x2(a, h, 1.0).unwrap() - 1.0).abs() < 1e-14);
        let h = 0.25_f64;
        let a = h * gamma(0.5);
        assert!((me_from_int_x2(4.0 * a, h, 1.0).unwrap() - 1.0 / 16.0).abs() < 1e-14);
        assert!(me_from_int_x2(0.0, h, 1.0).is_err());
    }

    #[test]
    fn me_is_decreasing() {
        let a = me_from_int_x2(0.4_f64, 0.3, 1.0).unwrap();
        let b = me_from_int_x2(0.4_f64 + 1e-9, 0.3, 1.0).unwrap();
        assert!(b < a);
    }

    #[test]
    fn quarter_constants() {
        let k = asymptotic_constants(1.0_f64, 0.25).unwrap();
        assert!((k.sigma_h2 - 2.0 / std::f64::consts::PI).abs() < 1e-15);
        assert!((k.me_var - 8.0 / std::f64::consts::PI).abs() < 1e-14);
        assert!(k.h_quarter_flag);
        assert_eq!(k.delta, Some(0.5));
    }

    #[test]
    fn sigma_h2_reference_values() {
        // closed forms: H = 0.3 gives 0.2 + 2 Gamma(0.8) Gamma(1.2) / (Gamma(0.6) Gamma(0.4))
        assert!((sigma_h2(0.3_f64).unwrap() - 0.847_213_595_499_957_9).abs() < 1e-12);
        assert!((sigma_h2(0.2_f64).unwrap() - 0.447_213_595_499_957_9).abs() < 1e-12);
    }

    #[test]
    fn continuity_at_quarter() {
        // the slope at 1/4 is 4, so one-sided values sit 4e-5 away
        let lim = 2.0 / std::f64::consts::PI;
        let (lo, hi) = (sigma_h2(0.25 - 1e-5_f64).unwrap(), sigma_h2(0.25 + 1e-5_f64).unwrap());
        assert!((lo - lim).abs() < 5e-5 && (hi - lim).abs() < 5e-5);
        assert!(lo < lim && lim < hi);
        assert!((0.5 * (lo + hi) - lim).abs() < 1e-6);
    }

    #[test]
    fn delta_pieces() {
        assert_eq!(berry_esseen_delta(0.2_f64).unwrap(), 0.5);
        assert!((berry_esseen_delta(0.3_f64).unwrap() - 0.3).abs() < 1e-15);
        assert!(berry_esseen_delta(0.4_f64).is_err());
        assert!(asymptotic_constants(1.0_f64, 0.45).unwrap().delta.is_none());
        assert!(asymptotic_constants(1.0_f64, 0.55).is_err());
    }
}
