//! Covariance families of the driving Gaussian noise.
//!
//! Every family has a covariance `R(t, s)` whose mixed derivative splits as
//! `c * H'(2H' - 1)|t - s|^{2H' - 2} + Psi(t, s)` where `H'` is the effective
//! Hurst exponent and `c` the principal scale (1 except for bi-fBm, where it
//! is `2^{1-K}`). The fBm covariance at `H'` multiplied by `c` is called the
//! principal part below.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::linalg::Matrix;
use crate::scalar::{c, Real};

#[derive(Debug, Clone, PartialEq)]
pub enum Family<S> {
    Fbm { h: S },
    SubFbm { h: S },
    BiFbm { h: S, k: S },
    GenSubFbm { h: S, k: S },
    /// Independent components, `G = sum w_i G_i`.
    Mixture(Vec<(S, CovarianceModel<S>)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel<S> {
    family: Family<S>,
    hurst_eff: S,
}

fn check_unit<S: Real>(name: &str, x: S) -> Result<()> {
    if x > S::zero() && x < S::one() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must lie in (0, 1), got {x}")))
    }
}

#[inline]
fn pw<S: Real>(x: S, e: S) -> S {
    x.powf(e)
}

#[inline]
fn two<S: Real>() -> S {
    c(2.0)
}

/// fBm covariance `(t^{2H} + s^{2H} - |t - s|^{2H}) / 2`.
pub fn fbm_cov<S: Real>(h: S, t: S, s: S) -> S {
    let e = two::<S>() * h;
    c::<S>(0.5) * (pw(t, e) + pw(s, e) - pw((t - s).abs(), e))
}

/// `dR/dt` of the fBm covariance; `t > 0`, `t != s`.
pub fn fbm_dcov_dt<S: Real>(h: S, t: S, s: S) -> S {
    let e = two::<S>() * h - S::one();
    let d = t - s;
    h * (pw(t, e) - d.signum() * pw(d.abs(), e))
}

/// Mixed derivative of the fBm covariance, `H(2H - 1)|t - s|^{2H - 2}`.
pub fn fbm_d2cov<S: Real>(h: S, t: S, s: S) -> S {
    h * (two::<S>() * h - S::one()) * pw((t - s).abs(), two::<S>() * h - two::<S>())
}

impl<S: Real> CovarianceModel<S> {
    pub fn fbm(h: S) -> Result<Self> {
        check_unit("H", h)?;
        Ok(Self { family: Family::Fbm { h }, hurst_eff: h })
    }

    pub fn subfbm(h: S) -> Result<Self> {
        check_unit("H", h)?;
        Ok(Self { family: Family::SubFbm { h }, hurst_eff: h })
    }

    pub fn bifbm(h: S, k: S) -> Result<Self> {
        check_unit("H", h)?;
        check_unit("K", k)?;
        Ok(Self { family: Family::BiFbm { h, k }, hurst_eff: h * k })
    }

    pub fn gensubfbm(h: S, k: S) -> Result<Self> {
        check_unit("H", h)?;
        if !(k >= S::one() && k < two()) {
            return Err(Error::InvalidModel(format!("K must lie in [1, 2), got {k}")));
        }
        check_unit("HK", h * k)?;
        Ok(Self { family: Family::GenSubFbm { h, k }, hurst_eff: h * k })
    }

    /// Mixture of independent components with weights `w_i`; all components
    /// must share the effective Hurst exponent.
    pub fn mixture(components: Vec<(S, CovarianceModel<S>)>) -> Result<Self> {
        let Some((_, first)) = components.first() else {
            return Err(Error::InvalidModel("mixture needs at least one component".into()));
        };
        let hurst = first.hurst_eff;
        for (w, m) in &components {
            if !w.is_finite() || *w == S::zero() {
                return Err(Error::InvalidModel(format!("mixture weight must be finite and nonzero, got {w}")));
            }
            if (m.hurst_eff - hurst).abs() > c(1e-12) {
                return Err(Error::InvalidModel(format!(
                    "mixture components must share the effective Hurst exponent ({} vs {})",
                    m.hurst_eff, hurst
                )));
            }
        }
        Ok(Self { family: Family::Mixture(components), hurst_eff: hurst })
    }

    pub fn family(&self) -> &Family<S> {
        &self.family
    }

    pub fn hurst_eff(&self) -> S {
        self.hurst_eff
    }

    pub fn is_fbm(&self) -> bool {
        matches!(self.family, Family::Fbm { .. })
    }

    /// Coefficient of the fBm part in the mixed derivative.
    pub fn principal_scale(&self) -> S {
        match &self.family {
            Family::BiFbm { k, .. } => pw(two::<S>(), S::one() - *k),
            Family::Mixture(parts) => parts.iter().map(|(w, m)| *w * *w * m.principal_scale()).sum(),
            _ => S::one(),
        }
    }

    /// `R(t, s)` for `t, s >= 0`.
    pub fn cov(&self, t: S, s: S) -> S {
        let half = c::<S>(0.5);
        match &self.family {
            Family::Fbm { h } => fbm_cov(*h, t, s),
            Family::SubFbm { h } => {
                let e = two::<S>() * *h;
                pw(t, e) + pw(s, e) - half * (pw(t + s, e) + pw((t - s).abs(), e))
            }
            Family::BiFbm { h, k } => {
                let e = two::<S>() * *h;
                let base = pw(t, e) + pw(s, e);
                pw(two::<S>(), -*k) * (pw(base, *k) - pw((t - s).abs(), e * *k))
            }
            Family::GenSubFbm { h, k } => {
                let e = two::<S>() * *h;
                let ek = e * *k;
                pw(pw(t, e) + pw(s, e), *k) - half * (pw(t + s, ek) + pw((t - s).abs(), ek))
            }
            Family::Mixture(parts) => parts.iter().map(|(w, m)| *w * *w * m.cov(t, s)).sum(),
        }
    }

    /// `R(u, u)`.
    pub fn variance(&self, u: S) -> S {
        match &self.family {
            Family::Fbm { h } => pw(u, two::<S>() * *h),
            Family::SubFbm { h } => (two::<S>() - pw(two(), two::<S>() * *h - S::one())) * pw(u, two::<S>() * *h),
            Family::BiFbm { h, k } => pw(u, two::<S>() * *h * *k),
            Family::GenSubFbm { h, k } => {
                let ek = two::<S>() * *h * *k;
                (pw(two(), *k) - pw(two(), ek - S::one())) * pw(u, ek)
            }
            Family::Mixture(parts) => parts.iter().map(|(w, m)| *w * *w * m.variance(u)).sum(),
        }
    }

    /// `E (G_u - G_v)^2 = R(u,u) + R(v,v) - 2 R(u,v)`, in closed forms that
    /// avoid cancellation near the diagonal.
    pub fn variogram(&self, u: S, v: S) -> S {
        let d = (u - v).abs();
        match &self.family {
            Family::Fbm { h } => pw(d, two::<S>() * *h),
            Family::SubFbm { h } => {
                let e = two::<S>() * *h;
                pw(u + v, e) + pw(d, e) - pw(two(), e - S::one()) * (pw(u, e) + pw(v, e))
            }
            Family::BiFbm { h, k } => {
                let e = two::<S>() * *h;
                let ek = e * *k;
                let sc = pw(two(), S::one() - *k);
                pw(u, ek) + pw(v, ek) - sc * pw(pw(u, e) + pw(v, e), *k) + sc * pw(d, ek)
            }
            Family::GenSubFbm { h, k } => {
                let e = two::<S>() * *h;
                let ek = e * *k;
                (pw(two(), *k) - pw(two(), ek - S::one())) * (pw(u, ek) + pw(v, ek))
                    - two::<S>() * pw(pw(u, e) + pw(v, e), *k)
                    + pw(u + v, ek)
                    + pw(d, ek)
            }
            Family::Mixture(parts) => parts.iter().map(|(w, m)| *w * *w * m.variogram(u, v)).sum(),
        }
    }

    /// Principal part `c * R^B_{H'}(t, s)`.
    pub fn principal_cov(&self, t: S, s: S) -> S {
        self.principal_scale() * fbm_cov(self.hurst_eff, t, s)
    }

    /// `dR/dt (t, s)`; refuses `t <= 0` and the diagonal.
    pub fn dcov_dt(&self, t: S, s: S) -> Result<S> {
        if !(t > S::zero()) || t == s || s < S::zero() {
            return Err(Error::Singularity { t: t.to_f64_lossy(), s: s.to_f64_lossy() });
        }
        Ok(self.dcov_dt_unchecked(t, s))
    }

    pub(crate) fn dcov_dt_unchecked(&self, t: S, s: S) -> S {
        let d = t - s;
        let sg = d.signum();
        match &self.family {
            Family::Fbm { h } => fbm_dcov_dt(*h, t, s),
            Family::SubFbm { h } => {
                let e = two::<S>() * *h - S::one();
                two::<S>() * *h * pw(t, e) - *h * (pw(t + s, e) + sg * pw(d.abs(), e))
            }
            Family::BiFbm { h, k } => {
                let e = two::<S>() * *h;
                let ek = e * *k;
                let base = pw(t, e) + pw(s, e);
                pw(two::<S>(), -*k)
                    * (*k * pw(base, *k - S::one()) * e * pw(t, e - S::one())
                        - ek * sg * pw(d.abs(), ek - S::one()))
            }
            Family::GenSubFbm { h, k } => {
                let e = two::<S>() * *h;
                let ek = e * *k;
                let base = pw(t, e) + pw(s, e);
                *k * pw(base, *k - S::one()) * e * pw(t, e - S::one())
                    - c::<S>(0.5) * ek * (pw(t + s, ek - S::one()) + sg * pw(d.abs(), ek - S::one()))
            }
            Family::Mixture(parts) => parts.iter().map(|(w, m)| *w * *w * m.dcov_dt_unchecked(t, s)).sum(),
        }
    }

    /// Mixed derivative `d^2 R / dt ds`; refuses the axes and the diagonal.
    pub fn d2cov_dtds(&self, t: S, s: S) -> Result<S> {
        self.check_off_singular(t, s)?;
        let hp = self.hurst_eff;
        Ok(self.principal_scale() * fbm_d2cov(hp, t, s) + self.psi_unchecked(t, s))
    }

    /// Remainder `Psi = d^2 R/dt ds - c H'(2H'-1)|t-s|^{2H'-2}`, evaluated by
    /// its own closed form.
    pub fn psi(&self, t: S, s: S) -> Result<S> {
        self.check_off_singular(t, s)?;
        Ok(self.psi_unchecked(t, s))
    }

    fn check_off_singular(&self, t: S, s: S) -> Result<()> {
        if !(t > S::zero()) || !(s > S::zero()) || t == s {
            return Err(Error::Singularity { t: t.to_f64_lossy(), s: s.to_f64_lossy() });
        }
        Ok(())
    }

    fn psi_unchecked(&self, t: S, s: S) -> S {
        let four = c::<S>(4.0);
        match &self.family {
            Family::Fbm { .. } => S::zero(),
            Family::SubFbm { h } => -*h * (two::<S>() * *h - S::one()) * pw(t + s, two::<S>() * *h - two::<S>()),
            Family::BiFbm { h, k } => {
                let e = two::<S>() * *h;
                let base = pw(t, e) + pw(s, e);
                pw(two::<S>(), -*k)
                    * *k
                    * (*k - S::one())
                    * four
                    * *h
                    * *h
                    * pw(base, *k - two::<S>())
                    * pw(t * s, e - S::one())
            }
            Family::GenSubFbm { h, k } => {
                let e = two::<S>() * *h;
                let hk = *h * *k;
                let base = pw(t, e) + pw(s, e);
                *k * (*k - S::one()) * four * *h * *h * pw(base, *k - two::<S>()) * pw(t * s, e - S::one())
                    - hk * (two::<S>() * hk - S::one()) * pw(t + s, two::<S>() * hk - two::<S>())
            }
            Family::Mixture(parts) => parts.iter().map(|(w, m)| *w * *w * m.psi_unchecked(t, s)).sum(),
        }
    }

    pub fn to_spec(&self) -> ModelSpec {
        let f = |x: S| x.to_f64_lossy();
        match &self.family {
            Family::Fbm { h } => ModelSpec::Fbm { h: f(*h) },
            Family::SubFbm { h } => ModelSpec::Subfbm { h: f(*h) },
            Family::BiFbm { h, k } => ModelSpec::Bifbm { h: f(*h), k: f(*k) },
            Family::GenSubFbm { h, k } => ModelSpec::Gensubfbm { h: f(*h), k: f(*k) },
            Family::Mixture(parts) => ModelSpec::Mixture {
                components: parts
                    .iter()
                    .map(|(w, m)| Component { weight: f(*w), model: m.to_spec() })
                    .collect(),
            },
        }
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let s = |x: f64| S::from_f64(x).ok_or_else(|| Error::InvalidModel(format!("parameter {x} not representable")));
        match spec {
            ModelSpec::Fbm { h } => Self::fbm(s(*h)?),
            ModelSpec::Subfbm { h } => Self::subfbm(s(*h)?),
            ModelSpec::Bifbm { h, k } => Self::bifbm(s(*h)?, s(*k)?),
            ModelSpec::Gensubfbm { h, k } => Self::gensubfbm(s(*h)?, s(*k)?),
            ModelSpec::Mixture { components } => Self::mixture(
                components
                    .iter()
                    .map(|comp| Ok((s(comp.weight)?, Self::from_spec(&comp.model)?)))
                    .collect::<Result<Vec<_>>>()?,
            ),
        }
    }

    /// Parses the JSON model description, e.g. `{"family":"subfbm","H":0.3}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidModel(format!("model JSON: {e}")))?;
        Self::from_spec(&spec)
    }
}

impl<S: Real> fmt::Display for CovarianceModel<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Fbm { h } => write!(f, "fbm(H={h})"),
            Family::SubFbm { h } => write!(f, "subfbm(H={h})"),
            Family::BiFbm { h, k } => write!(f, "bifbm(H={h},K={k})"),
            Family::GenSubFbm { h, k } => write!(f, "gensubfbm(H={h},K={k})"),
            Family::Mixture(parts) => {
                write!(f, "mixture[")?;
                for (i, (w, m)) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    write!(f, "{w}*{m}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Covariance of the grid increments,
/// `C_ij = R(t_{i+1}, t_{j+1}) - R(t_{i+1}, t_j) - R(t_i, t_{j+1}) + R(t_i, t_j)`,
/// assembled from variogram values (same quantity, less cancellation).
pub fn increment_covariance<S: Real>(model: &CovarianceModel<S>, grid: &GridSpec<S>) -> Matrix<S> {
    let n = grid.steps();
    let t = grid.times();
    let half = c::<S>(0.5);
    let mut data = vec![S::zero(); n * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, out) in row.iter_mut().enumerate().take(i + 1) {
            *out = half
                * (model.variogram(t[i + 1], t[j]) + model.variogram(t[i], t[j + 1])
                    - model.variogram(t[i + 1], t[j + 1])
                    - model.variogram(t[i], t[j]));
        }
    });
    for i in 0..n {
        for j in 0..i {
            data[j * n + i] = data[i * n + j];
        }
    }
    Matrix::from_rows(n, n, data).expect("square data")
}

/// Serialized model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelSpec {
    Fbm {
        #[serde(rename = "H")]
        h: f64,
    },
    Subfbm {
        #[serde(rename = "H")]
        h: f64,
    },
    Bifbm {
        #[serde(rename = "H")]
        h: f64,
        #[serde(rename = "K")]
        k: f64,
    },
    Gensubfbm {
        #[serde(rename = "H")]
        h: f64,
        #[serde(rename = "K")]
        k: f64,
    },
    Mixture {
        components: Vec<Component>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    #[serde(flatten)]
    pub model: ModelSpec,
}

/// Outcome of the grid check of the remainder bound
/// `|Psi(t, s)| <= C' (ts)^{H'-1}`.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "")]
pub struct HypothesisReport<S: Real> {
    pub model: ModelSpec,
    pub grid: GridSpec<S>,
    pub margin: S,
    /// Largest `|Psi(t, s)| (ts)^{1-H'}` over admissible nodes.
    pub sup_ratio: S,
    pub c_prime_estimate: S,
    /// Node `(t, s)` where the supremum is attained.
    pub argmax: Option<(S, S)>,
    pub nodes_checked: usize,
    pub violations: usize,
}

/// Ratios beyond this are treated as blow-ups.
const EXPLOSION: f64 = 1e8;

/// Scans the grid nodes `(t_i, t_j)` at least `margin` cells away from the
/// axes and the diagonal.
pub fn check_hypothesis<S: Real>(
    model: &CovarianceModel<S>,
    grid: &GridSpec<S>,
    margin: S,
) -> Result<HypothesisReport<S>> {
    if !(margin >= S::one()) {
        return Err(Error::Domain(format!("margin must be at least one cell, got {margin}")));
    }
    let delta = grid.delta();
    let gap = margin * delta * c(1.0 - 1e-9);
    let exponent = S::one() - model.hurst_eff();
    let mut sup = S::zero();
    let mut argmax = None;
    let mut nodes = 0usize;
    let mut violations = 0usize;
    for i in 1..=grid.steps() {
        let t = grid.time(i);
        if t < gap {
            continue;
        }
        for j in 1..i {
            let s = grid.time(j);
            if s < gap || t - s < gap {
                continue;
            }
            nodes += 1;
            let ratio = match model.psi(t, s) {
                Ok(p) => p.abs() * pw(t * s, exponent),
                Err(_) => S::nan(),
            };
            if !ratio.is_finite() || ratio > c(EXPLOSION) {
                violations += 1;
                continue;
            }
            if ratio > sup || argmax.is_none() {
                sup = ratio;
                argmax = Some((t, s));
            }
        }
    }
    Ok(HypothesisReport {
        model: model.to_spec(),
        grid: *grid,
        margin,
        sup_ratio: sup,
        c_prime_estimate: sup,
        argmax,
        nodes_checked: nodes,
        violations,
    })
}
