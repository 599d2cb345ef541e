//! Two-variable kernels of the OU chaos decomposition and their norms in the
//! tensor square space.
//!
//! Norms are computed as Riemann-Stieltjes tensor sums over the increment
//! covariance of a uniform grid: for a symmetric kernel `k` sampled at step
//! midpoints into the matrix `K`,
//!
//! ```text
//! ||k||^2 ~ sum_{ijkl} K_ij K_kl C_ik C_jl = tr(K C K C).
//! ```
//!
//! The sum is evaluated at mesh `delta` and `delta / 2` and extrapolated with
//! the error order `1 + 2H` of the midpoint rule against the rough
//! increments. Products with the exponential Toeplitz matrix of `f_T` cost
//! `O(n)` per vector, so the norm costs `O(n^2)` overall.

use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::{increment_covariance, CovarianceModel};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::linalg::Matrix;
use crate::quadrature::{Estimate, QuadOptions};
use crate::scalar::{c, Real};

use super::ou_norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "")]
pub enum Kernel2D<S: Real> {
    /// `exp(-theta |u - v|)` on `[0, T]^2`
    F { theta: S, horizon: S },
    /// `exp(-theta (T - u) - theta (T - v))` on `[0, T]^2`
    H { theta: S, horizon: S },
    /// `(F - H) / (2 theta T)`
    G { theta: S, horizon: S },
    Zero { horizon: S },
}

fn check_params<S: Real>(theta: S, horizon: S) -> Result<()> {
    if !(theta > S::zero()) || !theta.is_finite() {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    if !(horizon > S::zero()) || !horizon.is_finite() {
        return Err(Error::Domain(format!("T must be positive, got {horizon}")));
    }
    Ok(())
}

impl<S: Real> Kernel2D<S> {
    pub fn f(theta: S, horizon: S) -> Result<Self> {
        check_params(theta, horizon)?;
        Ok(Self::F { theta, horizon })
    }

    pub fn h(theta: S, horizon: S) -> Result<Self> {
        check_params(theta, horizon)?;
        Ok(Self::H { theta, horizon })
    }

    pub fn g(theta: S, horizon: S) -> Result<Self> {
        check_params(theta, horizon)?;
        Ok(Self::G { theta, horizon })
    }

    pub fn horizon(&self) -> S {
        match *self {
            Self::F { horizon, .. } | Self::H { horizon, .. } | Self::G { horizon, .. } | Self::Zero { horizon } => {
                horizon
            }
        }
    }

    pub fn eval(&self, u: S, v: S) -> S {
        let inside = |t: S| -> bool { t >= S::zero() && t <= self.horizon() };
        if !(inside(u) && inside(v)) {
            return S::zero();
        }
        match *self {
            Self::F { theta, .. } => (-theta * (u - v).abs()).exp(),
            Self::H { theta, horizon } => (-theta * (horizon - u) - theta * (horizon - v)).exp(),
            Self::G { theta, horizon } => {
                let f = (-theta * (u - v).abs()).exp();
                let h = (-theta * (horizon - u) - theta * (horizon - v)).exp();
                (f - h) / (c::<S>(2.0) * theta * horizon)
            }
            Self::Zero { .. } => S::zero(),
        }
    }

    /// Weights `exp(-theta (T - t_i*))` of the rank-one factor at midpoints.
    pub fn terminal_weights(theta: S, grid: &GridSpec<S>) -> Vec<S> {
        let horizon = grid.horizon();
        (0..grid.steps()).map(|i| (-theta * (horizon - grid.midpoint(i))).exp()).collect()
    }

    /// `K x` for the kernel sampled at the step midpoints of `grid`.
    pub fn apply(&self, grid: &GridSpec<S>, x: &[S]) -> Vec<S> {
        let n = grid.steps();
        assert_eq!(x.len(), n, "vector does not match grid");
        match *self {
            Self::F { theta, .. } => toeplitz_exp_apply((-theta * grid.delta()).exp(), x),
            Self::H { theta, .. } => {
                let a = Self::terminal_weights(theta, grid);
                let ax: S = crate::linalg::dot(&a, x);
                a.iter().map(|&ai| ai * ax).collect()
            }
            Self::G { theta, horizon } => {
                let a = Self::terminal_weights(theta, grid);
                let ax: S = crate::linalg::dot(&a, x);
                let scale = (c::<S>(2.0) * theta * horizon).recip();
                toeplitz_exp_apply((-theta * grid.delta()).exp(), x)
                    .into_iter()
                    .zip(&a)
                    .map(|(fx, &ai)| (fx - ai * ax) * scale)
                    .collect()
            }
            Self::Zero { .. } => vec![S::zero(); n],
        }
    }

    /// Dense matrix of midpoint samples.
    pub fn matrix(&self, grid: &GridSpec<S>) -> Matrix<S> {
        let m = grid.midpoints();
        Matrix::from_fn(m.len(), m.len(), |i, j| self.eval(m[i], m[j]))
    }

    fn theta(&self) -> Option<S> {
        match *self {
            Self::F { theta, .. } | Self::H { theta, .. } | Self::G { theta, .. } => Some(theta),
            Self::Zero { .. } => None,
        }
    }
}

/// `y_i = sum_j rho^{|i-j|} x_j` by a forward and a backward sweep.
pub fn toeplitz_exp_apply<S: Real>(rho: S, x: &[S]) -> Vec<S> {
    let n = x.len();
    let mut y = vec![S::zero(); n];
    let mut acc = S::zero();
    for i in 0..n {
        acc = rho * acc + x[i];
        y[i] = acc;
    }
    acc = S::zero();
    for i in (0..n).rev() {
        acc = rho * acc + x[i];
        y[i] = y[i] + acc - x[i];
    }
    y
}

#[derive(Debug, Clone, Copy)]
pub struct TensorOptions<S> {
    /// Steps per unit time of the coarse grid; a grid twice as fine is also used.
    pub steps_per_unit: usize,
    /// Refuse grids finer than this many steps.
    pub max_steps: usize,
    /// Options for the one-dimensional integrals of the rank-one kernel.
    pub quad: QuadOptions<S>,
}

impl<S: Real> Default for TensorOptions<S> {
    fn default() -> Self {
        Self { steps_per_unit: 20, max_steps: 4000, quad: QuadOptions::default() }
    }
}

impl<S: Real> TensorOptions<S> {
    /// Defaults for the cubic-cost contraction.
    pub fn contraction() -> Self {
        Self { steps_per_unit: 10, max_steps: 2000, quad: QuadOptions::default() }
    }

    fn grids(&self, horizon: S) -> Result<(GridSpec<S>, GridSpec<S>)> {
        let coarse = GridSpec::with_density(horizon, self.steps_per_unit)?;
        let fine = coarse.refined();
        if fine.steps() > self.max_steps {
            return Err(Error::Budget(format!(
                "tensor grid of {} steps exceeds the limit of {}",
                fine.steps(),
                self.max_steps
            )));
        }
        Ok((coarse, fine))
    }
}

/// Rows `K C_j` for every row `C_j` of the symmetric `C`, i.e. `(K C)^T`.
fn apply_rows<S: Real>(kernel: &Kernel2D<S>, grid: &GridSpec<S>, m: &Matrix<S>) -> Matrix<S> {
    let n = m.rows();
    let mut data = vec![S::zero(); n * m.cols()];
    data.par_chunks_mut(m.cols()).enumerate().for_each(|(j, out)| {
        out.copy_from_slice(&kernel.apply(grid, m.row(j)));
    });
    Matrix::from_rows(n, m.cols(), data).expect("shape preserved")
}

/// `sum_ij A_ij A_ji`.
fn trace_square<S: Real>(a: &Matrix<S>) -> S {
    let n = a.rows();
    (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| a.get(i, j) * a.get(j, i)).sum::<S>())
        .collect::<Vec<S>>()
        .into_iter()
        .sum()
}

/// Discrete `||k||^2 = tr(K C K C)` on `grid`, `C` the increment covariance.
pub fn discrete_norm_sq<S: Real>(kernel: &Kernel2D<S>, grid: &GridSpec<S>, gram: &Matrix<S>) -> Result<S> {
    if gram.rows() != grid.steps() {
        return Err(Error::GridMismatch(format!(
            "covariance has {} rows, grid has {} steps",
            gram.rows(),
            grid.steps()
        )));
    }
    if let Kernel2D::Zero { .. } = kernel {
        return Ok(S::zero());
    }
    let mt = apply_rows(kernel, grid, gram);
    Ok(trace_square(&mt))
}

fn richardson<S: Real>(coarse: S, fine: S, hurst: S) -> Estimate<S> {
    let factor = c::<S>(2.0).powf(S::one() + c::<S>(2.0) * hurst) - S::one();
    let correction = (fine - coarse) / factor;
    Estimate::new(fine + correction, correction.abs())
}

fn sqrt_estimate<S: Real>(sq: Estimate<S>) -> Estimate<S> {
    let v = sq.value.max(S::zero()).sqrt();
    let err = if v > S::zero() { sq.error / (c::<S>(2.0) * v) } else { sq.error.sqrt() };
    Estimate::new(v, err)
}

/// Norm of `kernel` in the tensor square of the Hilbert space of `model`.
///
/// The rank-one kernel `h_T` is exact through one-dimensional quadrature;
/// the others use the extrapolated tensor sums.
pub fn kernel_norm_h<S: Real>(
    kernel: &Kernel2D<S>,
    model: &CovarianceModel<S>,
    opts: &TensorOptions<S>,
) -> Result<Estimate<S>> {
    match *kernel {
        Kernel2D::Zero { .. } => Ok(Estimate::exact(S::zero())),
        Kernel2D::H { theta, horizon } => ou_norm(model, theta, horizon, &opts.quad),
        _ => {
            let (coarse, fine) = opts.grids(kernel.horizon())?;
            let sq_c = discrete_norm_sq(kernel, &coarse, &increment_covariance(model, &coarse))?;
            let sq_f = discrete_norm_sq(kernel, &fine, &increment_covariance(model, &fine))?;
            let theta = kernel.theta().expect("non-zero kernel");
            log::debug!("tensor norm theta={theta} T={}: coarse {sq_c}, fine {sq_f}", kernel.horizon());
            Ok(sqrt_estimate(richardson(sq_c, sq_f, model.hurst_eff())))
        }
    }
}

/// Discrete `|| a (x)_1 b ||^2` on `grid`: with `X = A C B`, the sum
/// `sum_ij X_ij X_kl C_ik C_jl`.
pub fn discrete_contraction_sq<S: Real>(
    a: &Kernel2D<S>,
    b: &Kernel2D<S>,
    grid: &GridSpec<S>,
    gram: &Matrix<S>,
) -> Result<S> {
    if gram.rows() != grid.steps() {
        return Err(Error::GridMismatch(format!(
            "covariance has {} rows, grid has {} steps",
            gram.rows(),
            grid.steps()
        )));
    }
    if matches!(a, Kernel2D::Zero { .. }) || matches!(b, Kernel2D::Zero { .. }) {
        return Ok(S::zero());
    }
    // rows of C B, then columns of X = A (C B)
    let cb = apply_rows(b, grid, gram);
    let xt = apply_rows(a, grid, &cb.transpose());
    let x = xt.transpose();
    let xc = x.matmul(gram);
    let cx = gram.matmul(&x);
    Ok(xc.frobenius_dot(&cx))
}

/// Norm of the first contraction `a (x)_1 b`, a diagnostic with cubic cost in
/// the grid size. The value on the finer grid is returned, with the change
/// from the coarse grid as its error.
pub fn contraction1<S: Real>(
    a: &Kernel2D<S>,
    b: &Kernel2D<S>,
    model: &CovarianceModel<S>,
    opts: &TensorOptions<S>,
) -> Result<Estimate<S>> {
    if a.horizon() != b.horizon() {
        return Err(Error::Domain("contracted kernels must share the horizon".into()));
    }
    if matches!(a, Kernel2D::Zero { .. }) || matches!(b, Kernel2D::Zero { .. }) {
        return Ok(Estimate::exact(S::zero()));
    }
    let (coarse, fine) = opts.grids(a.horizon())?;
    let sq_c = discrete_contraction_sq(a, b, &coarse, &increment_covariance(model, &coarse))?;
    let sq_f = discrete_contraction_sq(a, b, &fine, &increment_covariance(model, &fine))?;
    let (vc, vf) = (sq_c.max(S::zero()).sqrt(), sq_f.max(S::zero()).sqrt());
    Ok(Estimate::new(vf, (vf - vc).abs()))
}
