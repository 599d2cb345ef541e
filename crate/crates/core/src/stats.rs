//! Sample statistics used by the Monte Carlo harness and the oracle sweeps.

use serde::Serialize;
use libm::erfc;

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for a single sample.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Jackknife standard error of the sample variance.
pub fn variance_jackknife_se(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 3 {
        return 0.0;
    }
    let m = mean(xs);
    let d: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let s2: f64 = d.iter().map(|x| x * x).sum();
    let nf = n as f64;
    // leave-one-out variance with the deviations already centred (sum d = 0)
    let loo: Vec<f64> = d.iter().map(|&di| (s2 - di * di - di * di / (nf - 1.0)) / (nf - 2.0)).collect();
    let lm = mean(&loo);
    ((nf - 1.0) / nf * loo.iter().map(|v| (v - lm) * (v - lm)).sum::<f64>()).sqrt()
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Minimum sample size accepted by [`ks_distance`].
pub const KS_MIN_SAMPLES: usize = 20;

/// One-sample Kolmogorov statistic against `N(0, target_sd^2)`.
pub fn ks_distance(samples: &[f64], target_sd: f64) -> Result<f64> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples { needed: KS_MIN_SAMPLES, got: samples.len() });
    }
    if !(target_sd > 0.0) || !target_sd.is_finite() {
        return Err(Error::Domain(format!("target standard deviation must be positive, got {target_sd}")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("non-finite sample".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = normal_cdf(x / target_sd);
        let hi = (i + 1) as f64 / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    Ok(d.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares; `r2 = 1` when the response is constant.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<Fit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: x.len().min(y.len()) });
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("predictor has zero variance".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).min(1.0) } else { 1.0 };
    Ok(Fit { slope, intercept: my - slope * mx, r2 })
}

/// Slope and `R^2` of `log y` against `log x`.
pub fn rate_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateFit("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(&lx, &ly)?;
    Ok((fit.slope, fit.r2))
}
