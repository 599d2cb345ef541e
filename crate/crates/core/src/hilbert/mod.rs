//! Inner products on the Hilbert space of the noise.
//!
//! A function `f` supported in `[0, T)` with bounded variation is represented
//! by its signed Lebesgue-Stieltjes measure `nu_f` (jumps as atoms,
//! exponential pieces as densities). Since `nu_f` has total mass zero,
//!
//! ```text
//! <f, g> = int int R d nu_f d nu_g = -1/2 int int V d nu_f d nu_g,
//! ```
//!
//! where `V(u, v) = E (G_u - G_v)^2` is the variogram. The variogram form is
//! bounded and only has a kink on the diagonal, so no singular derivative of
//! `R` is ever evaluated. Pure step functions use the exact double sum over
//! `R` at the breakpoints.

pub mod kernel;

use serde::Serialize;

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_nested, Domain, Estimate, QuadOptions};
use crate::scalar::{c, Real};

pub use kernel::{contraction1, kernel_norm_h, Kernel2D, TensorOptions};

/// Right-continuous step function, `values[k]` on `[breakpoints[k], breakpoints[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct StepFunction<S: Real> {
    breakpoints: Vec<S>,
    values: Vec<S>,
}

impl<S: Real> StepFunction<S> {
    pub fn new(breakpoints: Vec<S>, values: Vec<S>) -> Result<Self> {
        if breakpoints.len() < 2 || values.len() + 1 != breakpoints.len() {
            return Err(Error::Domain(format!(
                "step function needs n+1 breakpoints for n values, got {} and {}",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints[0] < S::zero() || breakpoints.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::Domain("step function breakpoints must be finite and nonnegative".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("step function breakpoints must be strictly increasing".into()));
        }
        Ok(Self { breakpoints, values })
    }

    /// `1_[a, b)`.
    pub fn indicator(a: S, b: S) -> Result<Self> {
        Self::new(vec![a, b], vec![S::one()])
    }

    pub fn breakpoints(&self) -> &[S] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn eval(&self, x: S) -> S {
        let b = &self.breakpoints;
        if x < b[0] || x >= b[b.len() - 1] {
            return S::zero();
        }
        let k = b.partition_point(|&p| p <= x) - 1;
        self.values[k]
    }

    /// `alpha f + beta g` on the merged breakpoints.
    pub fn combine(alpha: S, f: &Self, beta: S, g: &Self) -> Result<Self> {
        let mut pts: Vec<S> = f.breakpoints.iter().chain(&g.breakpoints).copied().collect();
        pts.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
        pts.dedup();
        let values = pts
            .windows(2)
            .map(|w| alpha * f.eval(w[0]) + beta * g.eval(w[0]))
            .collect();
        Self::new(pts, values)
    }

    /// Jumps of the function, as atoms of its Stieltjes measure.
    fn jumps(&self) -> Vec<(S, S)> {
        let mut out = Vec::with_capacity(self.breakpoints.len());
        let mut prev = S::zero();
        for (k, &x) in self.breakpoints.iter().enumerate() {
            let cur = self.values.get(k).copied().unwrap_or(S::zero());
            if cur != prev {
                out.push((x, cur - prev));
            }
            prev = cur;
        }
        out
    }

    /// Total variation of the induced measure.
    pub fn total_variation(&self) -> S {
        self.jumps().iter().map(|(_, m)| m.abs()).sum()
    }

    fn abs_mu(&self, hurst: S) -> S {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, v)| v.abs() * (w[1].powf(hurst) - w[0].powf(hurst)))
            .sum::<S>()
            / hurst
    }
}

/// Exponential integrands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "")]
pub enum ExpKernelFunction<S: Real> {
    /// `u -> exp(-theta (t - u)) 1_[0, t)(u)`
    OuSegment { theta: S, t: S },
    /// `u -> c 1_[a, b)(u)`
    ConstSegment { a: S, b: S, c: S },
}

impl<S: Real> ExpKernelFunction<S> {
    pub fn ou_segment(theta: S, t: S) -> Result<Self> {
        if !(theta > S::zero()) || !(t >= S::zero()) || !t.is_finite() {
            return Err(Error::Domain(format!("OU segment needs theta > 0 and t >= 0, got theta={theta}, t={t}")));
        }
        Ok(Self::OuSegment { theta, t })
    }

    pub fn eval(&self, u: S) -> S {
        match *self {
            Self::OuSegment { theta, t } => {
                if u >= S::zero() && u < t {
                    (-theta * (t - u)).exp()
                } else {
                    S::zero()
                }
            }
            Self::ConstSegment { a, b, c } => {
                if u >= a && u < b {
                    c
                } else {
                    S::zero()
                }
            }
        }
    }
}

/// Element of the Hilbert space accepted by the inner products.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub enum HFunction<S: Real> {
    Step(StepFunction<S>),
    Exp(ExpKernelFunction<S>),
}

impl<S: Real> From<StepFunction<S>> for HFunction<S> {
    fn from(f: StepFunction<S>) -> Self {
        Self::Step(f)
    }
}

impl<S: Real> From<ExpKernelFunction<S>> for HFunction<S> {
    fn from(f: ExpKernelFunction<S>) -> Self {
        Self::Exp(f)
    }
}

impl<S: Real> HFunction<S> {
    pub fn eval(&self, u: S) -> S {
        match self {
            Self::Step(f) => f.eval(u),
            Self::Exp(f) => f.eval(u),
        }
    }

    fn measure(&self) -> Measure<S> {
        match self {
            Self::Step(f) => Measure { atoms: f.jumps(), densities: Vec::new() },
            Self::Exp(ExpKernelFunction::ConstSegment { a, b, c }) => {
                if b > a && *c != S::zero() {
                    Measure { atoms: vec![(*a, *c), (*b, -*c)], densities: Vec::new() }
                } else {
                    Measure::default()
                }
            }
            Self::Exp(ExpKernelFunction::OuSegment { theta, t }) => {
                if *t == S::zero() {
                    return Measure::default();
                }
                Measure {
                    atoms: vec![(S::zero(), (-*theta * *t).exp()), (*t, -S::one())],
                    densities: vec![Density { start: S::zero(), end: *t, amp: *theta, rate: *theta }],
                }
            }
        }
    }
}

/// Density `amp * exp(rate (u - end))` on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Density<S> {
    start: S,
    end: S,
    amp: S,
    rate: S,
}

impl<S: Real> Density<S> {
    #[inline]
    fn at(&self, u: S) -> S {
        self.amp * (self.rate * (u - self.end)).exp()
    }
}

#[derive(Debug, Clone, Default)]
struct Measure<S> {
    atoms: Vec<(S, S)>,
    densities: Vec<Density<S>>,
}

fn inner_opts<S: Real>(opts: &QuadOptions<S>) -> QuadOptions<S> {
    QuadOptions { rel_tol: opts.rel_tol * c(0.1), abs_tol: opts.abs_tol * c(0.1), ..*opts }
}

/// `int V(x, u) rho(u) du`.
fn atom_density<S: Real>(
    model: &CovarianceModel<S>,
    x: S,
    d: &Density<S>,
    opts: &QuadOptions<S>,
) -> Result<Estimate<S>> {
    let alpha = c::<S>(2.0) * model.hurst_eff();
    let mut dom = Domain::new(d.start, d.end).singular(x, alpha);
    if d.start == S::zero() {
        dom = dom.singular(S::zero(), alpha);
    }
    integrate(|u| model.variogram(x, u) * d.at(u), &dom, opts)
}

/// `int int V(u, v) rho1(u) rho2(v) du dv`.
fn density_density<S: Real>(
    model: &CovarianceModel<S>,
    d1: &Density<S>,
    d2: &Density<S>,
    opts: &QuadOptions<S>,
) -> Result<Estimate<S>> {
    let alpha = c::<S>(2.0) * model.hurst_eff();
    let inner = inner_opts(opts);
    if d1 == d2 {
        // symmetric: twice the lower triangle v < u
        let outer_dom = Domain::new(d1.start, d1.end).singular(d1.start, alpha + S::one());
        let tri = integrate_nested(
            |u| {
                let mut dom = Domain::new(d1.start, u).singular(u, alpha);
                if d1.start == S::zero() {
                    dom = dom.singular(S::zero(), alpha);
                }
                integrate(|v| model.variogram(u, v) * d1.at(v), &dom, &inner).map(|e| e.scale(d1.at(u)))
            },
            &outer_dom,
            opts,
        )?;
        return Ok(tri.scale(c(2.0)));
    }
    let mut outer_dom = Domain::new(d1.start, d1.end).knot(d2.start).knot(d2.end);
    if d1.start == S::zero() {
        outer_dom = outer_dom.singular(S::zero(), alpha);
    }
    integrate_nested(
        |u| {
            let mut dom = Domain::new(d2.start, d2.end).singular(u, alpha);
            if d2.start == S::zero() {
                dom = dom.singular(S::zero(), alpha);
            }
            integrate(|v| model.variogram(u, v) * d2.at(v), &dom, &inner).map(|e| e.scale(d1.at(u)))
        },
        &outer_dom,
        opts,
    )
}

fn inner_measures<S: Real>(
    model: &CovarianceModel<S>,
    fm: &Measure<S>,
    gm: &Measure<S>,
    opts: &QuadOptions<S>,
) -> Result<Estimate<S>> {
    if fm.densities.is_empty() && gm.densities.is_empty() {
        let mut acc = S::zero();
        for &(x, m) in &fm.atoms {
            for &(y, w) in &gm.atoms {
                acc = acc + m * w * model.cov(x, y);
            }
        }
        return Ok(Estimate::exact(acc));
    }
    let mut acc = Estimate::exact(S::zero());
    for &(x, m) in &fm.atoms {
        for &(y, w) in &gm.atoms {
            acc = acc + Estimate::exact(m * w * model.variogram(x, y));
        }
        for d in &gm.densities {
            acc = acc + atom_density(model, x, d, opts)?.scale(m);
        }
    }
    for d in &fm.densities {
        for &(y, w) in &gm.atoms {
            acc = acc + atom_density(model, y, d, opts)?.scale(w);
        }
        for d2 in &gm.densities {
            acc = acc + density_density(model, d, d2, opts)?;
        }
    }
    Ok(acc.scale(c(-0.5)))
}

/// `<f, g>` in the Hilbert space of `model`.
pub fn inner_h<S: Real>(
    model: &CovarianceModel<S>,
    f: &HFunction<S>,
    g: &HFunction<S>,
    opts: &QuadOptions<S>,
) -> Result<Estimate<S>> {
    inner_measures(model, &f.measure(), &g.measure(), opts)
}

/// Inner product of the principal (fBm) part of `model`.
pub fn inner_h1<S: Real>(
    model: &CovarianceModel<S>,
    f: &HFunction<S>,
    g: &HFunction<S>,
    opts: &QuadOptions<S>,
) -> Result<Estimate<S>> {
    let principal = CovarianceModel::fbm(model.hurst_eff())?;
    Ok(inner_h(&principal, f, g, opts)?.scale(model.principal_scale()))
}

/// `mu(|f|) = int |f(x)| x^{H-1} dx`.
pub fn mu_abs<S: Real>(f: &HFunction<S>, hurst: S, opts: &QuadOptions<S>) -> Result<Estimate<S>> {
    match f {
        HFunction::Step(s) => Ok(Estimate::exact(s.abs_mu(hurst))),
        HFunction::Exp(ExpKernelFunction::ConstSegment { a, b, c }) => {
            Ok(Estimate::exact(c.abs() * (b.powf(hurst) - a.powf(hurst)) / hurst))
        }
        HFunction::Exp(ExpKernelFunction::OuSegment { theta, t }) => {
            let dom = Domain::new(S::zero(), *t).singular(S::zero(), hurst - S::one());
            integrate(|u| (-*theta * (*t - u)).exp() * u.powf(hurst - S::one()), &dom, opts)
        }
    }
}

/// Comparison product `C' mu(|f|) mu(|g|)`.
pub fn inner_h2<S: Real>(
    f: &HFunction<S>,
    g: &HFunction<S>,
    c_prime: S,
    hurst: S,
    opts: &QuadOptions<S>,
) -> Result<Estimate<S>> {
    if !(hurst > S::zero() && hurst < S::one()) {
        return Err(Error::Domain(format!("H must lie in (0, 1), got {hurst}")));
    }
    if !(c_prime >= S::zero()) {
        return Err(Error::Domain(format!("C' must be nonnegative, got {c_prime}")));
    }
    let mf = mu_abs(f, hurst, opts)?;
    let mg = mu_abs(g, hurst, opts)?;
    Ok((mf * mg).scale(c_prime))
}

/// `|| exp(-theta (t - .)) 1_[0, t) ||^2`, the variance of the OU solution at `t`.
pub fn ou_norm<S: Real>(model: &CovarianceModel<S>, theta: S, t: S, opts: &QuadOptions<S>) -> Result<Estimate<S>> {
    let f = HFunction::Exp(ExpKernelFunction::ou_segment(theta, t)?);
    inner_h(model, &f, &f, opts)
}

/// `b_T = (1/T) int_0^T || exp(-theta (t - .)) 1_[0, t) ||^2 dt`.
pub fn b_t<S: Real>(model: &CovarianceModel<S>, theta: S, horizon: S, opts: &QuadOptions<S>) -> Result<Estimate<S>> {
    if !(theta > S::zero()) {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    if !(horizon > S::zero()) || !horizon.is_finite() {
        return Err(Error::Domain(format!("T must be positive and finite, got {horizon}")));
    }
    let alpha = c::<S>(2.0) * model.hurst_eff();
    let inner = inner_opts(opts);
    // the norm grows like t^{2H} from the origin and flattens after a few
    // relaxation times
    let mut dom = Domain::new(S::zero(), horizon).singular(S::zero(), alpha);
    let mut knot = theta.recip();
    while knot < horizon {
        dom = dom.knot(knot);
        knot = knot * c(4.0);
    }
    let total = integrate_nested(|t| ou_norm(model, theta, t, &inner), &dom, opts)?;
    Ok(total.scale(horizon.recip()))
}
