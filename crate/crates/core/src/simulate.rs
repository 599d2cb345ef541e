//! Exact sampling of the noise on a grid, the OU solution driven by it, and
//! discrete double Wiener-Ito integrals.
//!
//! The increment covariance `C` is built from covariance values only and
//! factored once; every sample is `L z` with `z` standard normal. Double
//! integrals are realized as centered quadratic forms
//! `sum_ij k(t_i*, t_j*) (dG_i dG_j - C_ij)` with midpoints `t_i*`, diagonal
//! included.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::{increment_covariance, CovarianceModel, ModelSpec};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::hilbert::{b_t, Kernel2D};
use crate::linalg::{cholesky_jittered, dot, lower_mul_vec, Matrix};
use crate::quadrature::QuadOptions;
use crate::scalar::{c, Real};

/// Increment covariance `C` on a grid with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct IncrementGram<S: Real> {
    grid: GridSpec<S>,
    cov: Matrix<S>,
    chol: Matrix<S>,
    jitter: S,
    /// `sum_i C_{i, i-d}` for `d = 0..n`
    diagonal_sums: Vec<S>,
}

/// Assembles and factors the increment covariance of `model` on `grid`.
pub fn build_gram<S: Real>(model: &CovarianceModel<S>, grid: &GridSpec<S>) -> Result<IncrementGram<S>> {
    let cov = increment_covariance(model, grid);
    let (chol, jitter) = cholesky_jittered(&cov)?;
    let n = grid.steps();
    let diagonal_sums = (0..n).map(|d| (d..n).map(|i| cov.get(i, i - d)).sum()).collect();
    Ok(IncrementGram { grid: *grid, cov, chol, jitter, diagonal_sums })
}

impl<S: Real> IncrementGram<S> {
    pub fn grid(&self) -> &GridSpec<S> {
        &self.grid
    }

    pub fn cov(&self) -> &Matrix<S> {
        &self.cov
    }

    pub fn chol(&self) -> &Matrix<S> {
        &self.chol
    }

    /// Diagonal shift that was needed for the factorization.
    pub fn jitter(&self) -> S {
        self.jitter
    }

    /// Sums along the `d`-th subdiagonal of `C`.
    pub fn diagonal_sums(&self) -> &[S] {
        &self.diagonal_sums
    }

    /// `||L L^T - C||_F / ||C||_F`.
    pub fn factor_residual(&self) -> S {
        let back = self.chol.matmul(&self.chol.transpose());
        let n = self.cov.rows();
        let diff = Matrix::from_fn(n, n, |i, j| back.get(i, j) - self.cov.get(i, j));
        diff.frobenius() / self.cov.frobenius()
    }

    /// Increments `L z`.
    pub fn correlate(&self, z: &[S]) -> Vec<S> {
        lower_mul_vec(&self.chol, z)
    }
}

/// Noise path on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct GaussianPath<S: Real> {
    pub grid: GridSpec<S>,
    pub increments: Vec<S>,
    pub path: Vec<S>,
    pub seed: u64,
}

impl<S: Real> GaussianPath<S> {
    pub fn from_increments(grid: GridSpec<S>, increments: Vec<S>, seed: u64) -> Result<Self> {
        if increments.len() != grid.steps() {
            return Err(Error::GridMismatch(format!(
                "{} increments for a grid of {} steps",
                increments.len(),
                grid.steps()
            )));
        }
        let mut path = Vec::with_capacity(increments.len() + 1);
        let mut acc = S::zero();
        path.push(acc);
        for &d in &increments {
            acc = acc + d;
            path.push(acc);
        }
        Ok(Self { grid, increments, path, seed })
    }
}

/// Standard normal vector from a seeded ChaCha8 stream.
pub fn standard_normals<S: Real>(seed: u64, n: usize) -> Vec<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            c::<S>(z)
        })
        .collect()
}

/// Exact sample `dG = L z`, deterministic in `seed`.
pub fn sample_path<S: Real>(gram: &IncrementGram<S>, seed: u64) -> GaussianPath<S> {
    let z = standard_normals(seed, gram.grid.steps());
    GaussianPath::from_increments(gram.grid, gram.correlate(&z), seed).expect("increments match grid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuScheme {
    /// `X[k+1] = e^{-theta dt} X[k] + sigma e^{-theta dt / 2} dG_k`
    #[default]
    Recursive,
    /// `X[k] = sum_{i<k} e^{-theta (t_k - t_i*)} sigma dG_i`
    Sum,
}

/// OU sample path with its provenance.
#[derive(Debug, Clone)]
pub struct Trajectory<S: Real> {
    pub grid: GridSpec<S>,
    pub x: Vec<S>,
    pub model: CovarianceModel<S>,
    pub theta: S,
    pub sigma: S,
    pub seed: u64,
    /// The driving noise, when the trajectory was simulated.
    pub noise: Option<GaussianPath<S>>,
}

fn check_theta_sigma<S: Real>(theta: S, sigma: S) -> Result<()> {
    if !(theta > S::zero()) || !theta.is_finite() {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    if !(sigma >= S::zero()) || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma must be nonnegative, got {sigma}")));
    }
    Ok(())
}

/// OU path driven by a given noise sample.
pub fn ou_from_path<S: Real>(
    model: &CovarianceModel<S>,
    noise: GaussianPath<S>,
    theta: S,
    sigma: S,
    scheme: OuScheme,
) -> Result<Trajectory<S>> {
    check_theta_sigma(theta, sigma)?;
    let grid = noise.grid;
    let n = grid.steps();
    let dt = grid.delta();
    let mut x = vec![S::zero(); n + 1];
    match scheme {
        OuScheme::Recursive => {
            let rho = (-theta * dt).exp();
            let gain = sigma * (-theta * dt * c(0.5)).exp();
            for k in 0..n {
                x[k + 1] = rho * x[k] + gain * noise.increments[k];
            }
        }
        OuScheme::Sum => {
            for (k, xk) in x.iter_mut().enumerate().skip(1) {
                let tk = grid.time(k);
                *xk = (0..k)
                    .map(|i| (-theta * (tk - grid.midpoint(i))).exp() * sigma * noise.increments[i])
                    .sum();
            }
        }
    }
    Ok(Trajectory { grid, x, model: model.clone(), theta, sigma, seed: noise.seed, noise: Some(noise) })
}

/// Simulates the OU solution with the default recursive scheme. Factors the
/// covariance; use [`build_gram`] with [`sample_path`] and [`ou_from_path`]
/// to reuse a factorization.
pub fn ou_trajectory<S: Real>(
    model: &CovarianceModel<S>,
    theta: S,
    sigma: S,
    grid: &GridSpec<S>,
    seed: u64,
) -> Result<Trajectory<S>> {
    check_theta_sigma(theta, sigma)?;
    let gram = build_gram(model, grid)?;
    ou_from_path(model, sample_path(&gram, seed), theta, sigma, OuScheme::Recursive)
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model: ModelSpec,
    theta: f64,
    sigma: f64,
    seed: u64,
    #[serde(rename = "T")]
    horizon: f64,
    n: usize,
}

/// JSON form: the header fields plus the columns `t`, `X` and `G`
/// (`G` is null where no noise was recorded).
#[derive(Debug, Serialize, Deserialize)]
struct JsonTrajectory {
    #[serde(flatten)]
    header: Header,
    t: Vec<f64>,
    #[serde(rename = "X")]
    x: Vec<f64>,
    #[serde(rename = "G")]
    g: Vec<Option<f64>>,
}

impl<S: Real> Trajectory<S> {
    /// `(1/T) int_0^T X^2 dt` by the trapezoid rule.
    pub fn int_x2(&self) -> S {
        let n = self.grid.steps();
        let half = c::<S>(0.5);
        let inner: S = self.x[1..n].iter().map(|&v| v * v).sum();
        let ends = half * (self.x[0] * self.x[0] + self.x[n] * self.x[n]);
        (inner + ends) * self.grid.delta() / self.grid.horizon()
    }

    /// Left-point sum `sum_i X_i (X_{i+1} - X_i)`.
    pub fn forward_sum(&self) -> S {
        self.x.windows(2).map(|w| w[0] * (w[1] - w[0])).sum()
    }

    /// Writes `#<json header>` and rows `t,X,G` (full round-trip precision).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "#{}", serde_json::to_string(&self.header())?)?;
        writeln!(out, "t,X,G")?;
        for (k, xk) in self.x.iter().enumerate() {
            let g = self.noise_at(k).unwrap_or(f64::NAN);
            writeln!(out, "{},{},{}", self.grid.time(k).to_f64_lossy(), xk.to_f64_lossy(), g)?;
        }
        Ok(())
    }

    /// Writes a single JSON object (full round-trip precision).
    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        let doc = JsonTrajectory {
            header: self.header(),
            t: self.grid.times().into_iter().map(|t| t.to_f64_lossy()).collect(),
            x: self.x.iter().map(|v| v.to_f64_lossy()).collect(),
            g: (0..self.x.len()).map(|k| self.noise_at(k)).collect(),
        };
        serde_json::to_writer(&mut out, &doc)?;
        writeln!(out)?;
        Ok(())
    }

    /// Reads the format of [`Trajectory::write_json`].
    pub fn read_json<R: std::io::Read>(input: R) -> Result<Self> {
        let doc: JsonTrajectory =
            serde_json::from_reader(input).map_err(|e| Error::Parse(format!("trajectory JSON: {e}")))?;
        let g = doc.g.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        Self::assemble(doc.header, doc.x, g)
    }

    fn header(&self) -> Header {
        Header {
            model: self.model.to_spec(),
            theta: self.theta.to_f64_lossy(),
            sigma: self.sigma.to_f64_lossy(),
            seed: self.seed,
            horizon: self.grid.horizon().to_f64_lossy(),
            n: self.grid.steps(),
        }
    }

    fn noise_at(&self, k: usize) -> Option<f64> {
        self.noise.as_ref().map(|p| p.path[k].to_f64_lossy())
    }

    fn assemble(header: Header, x: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        let model = CovarianceModel::from_spec(&header.model)?;
        let grid = GridSpec::new(c::<S>(header.horizon), header.n)?;
        if x.len() != header.n + 1 || g.len() != x.len() {
            return Err(Error::Parse(format!("expected {} rows, found {}", header.n + 1, x.len())));
        }
        let noise = if g.iter().all(|v| v.is_finite()) {
            let inc = g.windows(2).map(|w| c::<S>(w[1] - w[0])).collect();
            Some(GaussianPath::from_increments(grid, inc, header.seed)?)
        } else {
            None
        };
        Ok(Self {
            grid,
            x: x.into_iter().map(c::<S>).collect(),
            model,
            theta: c(header.theta),
            sigma: c(header.sigma),
            seed: header.seed,
            noise,
        })
    }

    /// Reads the format of [`Trajectory::write_csv`]. The noise column is
    /// restored when present.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines.next().ok_or_else(|| Error::Parse("empty trajectory file".into()))??;
        let json = first
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("trajectory file must start with a '#' JSON header".into()))?;
        let header: Header =
            serde_json::from_str(json).map_err(|e| Error::Parse(format!("trajectory header: {e}")))?;
        let columns = lines.next().ok_or_else(|| Error::Parse("missing column line".into()))??;
        if columns.trim() != "t,X,G" {
            return Err(Error::Parse(format!("unexpected columns '{columns}'")));
        }
        let mut x = Vec::with_capacity(header.n + 1);
        let mut g = Vec::with_capacity(header.n + 1);
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("row {}: expected 3 fields", row + 1)));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))
            };
            x.push(parse(fields[1])?);
            g.push(parse(fields[2])?);
        }
        Self::assemble(header, x, g)
    }
}

/// Centered quadratic form of a kernel with the centering `tr(K C)` precomputed.
#[derive(Debug, Clone)]
pub struct ChaosFunctional<S: Real> {
    kernel: Kernel2D<S>,
    grid: GridSpec<S>,
    centering: S,
}

impl<S: Real> ChaosFunctional<S> {
    pub fn new(kernel: Kernel2D<S>, gram: &IncrementGram<S>) -> Result<Self> {
        let grid = *gram.grid();
        if kernel.horizon() != grid.horizon() {
            return Err(Error::GridMismatch(format!(
                "kernel horizon {} differs from grid horizon {}",
                kernel.horizon(),
                grid.horizon()
            )));
        }
        let n = grid.steps();
        let centering = (0..n).map(|j| kernel.apply(&grid, gram.cov().row(j))[j]).sum();
        Ok(Self { kernel, grid, centering })
    }

    pub fn centering(&self) -> S {
        self.centering
    }

    pub fn eval(&self, path: &GaussianPath<S>) -> Result<S> {
        self.grid.ensure_same(&path.grid)?;
        let kx = self.kernel.apply(&self.grid, &path.increments);
        Ok(dot(&kx, &path.increments) - self.centering)
    }
}

/// Discrete double Wiener-Ito integral of `kernel` along `path`.
pub fn chaos_i2<S: Real>(kernel: &Kernel2D<S>, path: &GaussianPath<S>, gram: &IncrementGram<S>) -> Result<S> {
    gram.grid().ensure_same(&path.grid)?;
    ChaosFunctional::new(*kernel, gram)?.eval(path)
}

/// Same quadratic form from an explicit kernel matrix.
pub fn chaos_i2_dense<S: Real>(k: &Matrix<S>, path: &GaussianPath<S>, gram: &IncrementGram<S>) -> Result<S> {
    gram.grid().ensure_same(&path.grid)?;
    if k.rows() != path.increments.len() || k.cols() != path.increments.len() {
        return Err(Error::GridMismatch("kernel matrix does not match the grid".into()));
    }
    let kx = k.mul_vec(&path.increments);
    Ok(dot(&kx, &path.increments) - k.frobenius_dot(gram.cov()))
}

/// `|(1/T) int X^2 - sigma^2 (I_2(g_T) + b_T)|` for a given `b_T`.
pub fn decomposition_residual<S: Real>(
    trajectory: &Trajectory<S>,
    gram: &IncrementGram<S>,
    theta: S,
    b_t_value: S,
) -> Result<S> {
    trajectory.grid.ensure_same(gram.grid())?;
    let noise = trajectory
        .noise
        .as_ref()
        .ok_or_else(|| Error::Degenerate("trajectory carries no noise path".into()))?;
    let g = Kernel2D::g(theta, trajectory.grid.horizon())?;
    let chaos = chaos_i2(&g, noise, gram)?;
    let s2 = trajectory.sigma * trajectory.sigma;
    Ok((trajectory.int_x2() - s2 * (chaos + b_t_value)).abs())
}

/// As [`decomposition_residual`], computing `b_T` by quadrature.
pub fn decomposition_check<S: Real>(trajectory: &Trajectory<S>, gram: &IncrementGram<S>, theta: S) -> Result<S> {
    let b = b_t(&trajectory.model, theta, trajectory.grid.horizon(), &QuadOptions::default())?;
    decomposition_residual(trajectory, gram, theta, b.value)
}
