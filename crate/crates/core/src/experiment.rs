//! Monte Carlo harness: replication scheduling, aggregation and persistence.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceModel, ModelSpec};
use crate::error::{Error, Result};
use crate::estimators::{asymptotic_constants, estimate_lse_naive, estimate_lse_skorohod, estimate_me, EstimateRecord};
use crate::grid::{GridSpec, DEFAULT_STEPS_PER_UNIT};
use crate::hilbert::{b_t, Kernel2D};
use crate::quadrature::QuadOptions;
use crate::simulate::{build_gram, ou_from_path, sample_path, ChaosFunctional, OuScheme};
use crate::special::gamma;
use crate::stats::{ks_distance, mean, median, rate_fit, variance, variance_jackknife_se, KS_MIN_SAMPLES};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "GFOU_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Me,
    LseNaive,
    LseSkorohod,
}

fn all_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Me, EstimatorKind::LseNaive, EstimatorKind::LseSkorohod]
}

fn default_sigma() -> f64 {
    1.0
}

fn default_density() -> usize {
    DEFAULT_STEPS_PER_UNIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub theta_true: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Optional cross-check of the model's effective Hurst exponent.
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub hurst: Option<f64>,
    #[serde(rename = "T_list")]
    pub t_list: Vec<f64>,
    #[serde(default = "default_density")]
    pub steps_per_unit_time: usize,
    pub n_reps: usize,
    pub master_seed: u64,
    #[serde(default = "all_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, theta_true: f64, t_list: Vec<f64>, n_reps: usize, master_seed: u64) -> Self {
        Self {
            model,
            theta_true,
            sigma: 1.0,
            hurst: None,
            t_list,
            steps_per_unit_time: DEFAULT_STEPS_PER_UNIT,
            n_reps,
            master_seed,
            estimators: all_estimators(),
            output: None,
            workers: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Checks every domain up front and returns the covariance model.
    pub fn validate(&self) -> Result<CovarianceModel<f64>> {
        let model: CovarianceModel<f64> = CovarianceModel::from_spec(&self.model)?;
        if !(self.theta_true > 0.0) || !self.theta_true.is_finite() {
            return Err(Error::Domain(format!("theta_true must be positive, got {}", self.theta_true)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if let Some(h) = self.hurst {
            if (h - model.hurst_eff()).abs() > 1e-12 {
                return Err(Error::Experiment(format!(
                    "H = {h} does not match the model's effective Hurst exponent {}",
                    model.hurst_eff()
                )));
            }
        }
        if self.n_reps == 0 {
            return Err(Error::Experiment("n_reps must be at least 1".into()));
        }
        if self.t_list.is_empty() {
            return Err(Error::Experiment("T_list is empty".into()));
        }
        if self.t_list.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::Experiment("T_list entries must be positive".into()));
        }
        if self.t_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Experiment("T_list must be strictly ascending".into()));
        }
        if self.steps_per_unit_time == 0 {
            return Err(Error::Experiment("steps_per_unit_time must be positive".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Experiment("no estimators selected".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Experiment("workers must be positive".into()));
        }
        for &t in &self.t_list {
            GridSpec::with_density(t, self.steps_per_unit_time)?;
        }
        Ok(model)
    }

    fn runs(&self, kind: EstimatorKind) -> bool {
        self.estimators.contains(&kind)
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep`. The same stream is used at every horizon, so
/// cells are coupled through common random numbers.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    splitmix64(splitmix64(master) ^ (rep as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Worker count from the config, capped by `GFOU_THREADS` when set.
pub fn worker_count(requested: Option<usize>) -> usize {
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|n| *n > 0);
    let base = requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.map_or(base, |c| base.min(c)).max(1)
}

/// One replication: the estimator record plus chaos statistics of the noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replication {
    #[serde(flatten)]
    pub record: EstimateRecord,
    /// `(F_T - J_T) / sqrt(T)` with the true drift.
    pub q_t: f64,
    /// `F_T / sqrt(T)`.
    #[serde(skip)]
    pub f_scaled: f64,
}

/// Sample variance with its jackknife standard error and the limiting target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceStat {
    pub value: f64,
    pub se: f64,
    pub target: Option<f64>,
}

impl VarianceStat {
    fn of(xs: &[f64], target: Option<f64>) -> Self {
        Self { value: variance(xs), se: variance_jackknife_se(xs), target }
    }

    /// Relative deviation from the target.
    pub fn rel_error(&self) -> Option<f64> {
        self.target.map(|t| (self.value / t - 1.0).abs())
    }

    /// Whether the `k` standard-error band contains the target.
    pub fn band_covers(&self, k: f64) -> Option<bool> {
        self.target.map(|t| (self.value - t).abs() <= k * self.se)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorStats {
    pub mean: f64,
    pub median: f64,
    pub variance: f64,
    pub bias: f64,
    pub median_abs_error: f64,
}

impl EstimatorStats {
    fn of(xs: &[f64], truth: f64) -> Option<Self> {
        if xs.is_empty() || xs.iter().any(|x| x.is_nan()) {
            return None;
        }
        let m = mean(xs);
        let abs: Vec<f64> = xs.iter().map(|x| (x - truth).abs()).collect();
        Some(Self { mean: m, median: median(xs), variance: variance(xs), bias: m - truth, median_abs_error: median(&abs) })
    }
}

/// Aggregates of one horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n: usize,
    pub replications: usize,
    pub failures: usize,
    pub jitter: f64,
    pub theta_tilde: Option<EstimatorStats>,
    pub theta_hat_naive: Option<EstimatorStats>,
    pub theta_hat_skorohod: Option<EstimatorStats>,
    /// `Var(sqrt(T) (theta_tilde - theta))` against the ME limit.
    pub var_me_scaled: Option<VarianceStat>,
    /// `Var(sqrt(T) (theta_hat_skorohod - theta))` against the LSE limit.
    pub var_lse_scaled: Option<VarianceStat>,
    /// `Var(F_T) / T` against `4 theta a^2 sigma_H^2`.
    pub var_f: VarianceStat,
    /// `Var(Q_T)` against `4 theta a^2 sigma_H^2`.
    pub var_q: VarianceStat,
    /// KS distance of `sqrt(T) (theta_tilde - theta)` to its normal limit.
    pub ks_me: Option<f64>,
    /// KS distance of `Q_T` normalized with `a = H Gamma(2H) theta^{-2H}`.
    pub ks_q: Option<f64>,
    /// KS distance of `Q_T` normalized with the finite-horizon `b_T`.
    pub ks_q_bt: Option<f64>,
    pub b_t: Option<f64>,
    pub small_sample: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub config: ExperimentConfig,
    #[serde(rename = "H")]
    pub hurst: f64,
    /// Limiting constant `a = H Gamma(2H) theta^{-2H}`.
    pub a: f64,
    pub sigma_h2: Option<f64>,
    pub cells: Vec<CellSummary>,
    /// Log-log fit of `ks_me` against `T`.
    pub ks_me_rate: Option<RateFit>,
    pub ks_q_rate: Option<RateFit>,
    pub small_sample: bool,
    pub version: String,
}

/// Summary plus every record, cell by cell.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub summary: McSummary,
    pub records: Vec<Vec<Replication>>,
}

struct CellContext<'a> {
    model: &'a CovarianceModel<f64>,
    config: &'a ExperimentConfig,
    hurst: f64,
}

fn replicate(
    ctx: &CellContext<'_>,
    gram: &crate::simulate::IncrementGram<f64>,
    f_fun: &ChaosFunctional<f64>,
    h_fun: &ChaosFunctional<f64>,
    seed: u64,
) -> Result<Replication> {
    let cfg = ctx.config;
    let path = sample_path(gram, seed);
    let root_t = gram.grid().horizon().sqrt();
    let f_val = f_fun.eval(&path)?;
    let j_val = h_fun.eval(&path)?;
    let traj = ou_from_path(ctx.model, path, cfg.theta_true, cfg.sigma, OuScheme::Recursive)?;
    let pick = |kind, f: &dyn Fn() -> Result<f64>| if cfg.runs(kind) { f() } else { Ok(f64::NAN) };
    let theta_tilde = pick(EstimatorKind::Me, &|| estimate_me(&traj, ctx.hurst))?;
    let naive = pick(EstimatorKind::LseNaive, &|| estimate_lse_naive(&traj))?;
    let skorohod = pick(EstimatorKind::LseSkorohod, &|| estimate_lse_skorohod(&traj, gram, ctx.hurst))?;
    let vals = [theta_tilde, naive, skorohod, f_val, j_val];
    if vals.iter().any(|v| v.is_infinite()) {
        return Err(Error::Degenerate("non-finite estimate".into()));
    }
    Ok(Replication {
        record: EstimateRecord {
            seed,
            horizon: traj.grid.horizon(),
            n: traj.grid.steps(),
            hurst: ctx.hurst,
            theta_true: cfg.theta_true,
            theta_tilde,
            theta_hat_naive: naive,
            theta_hat_skorohod: skorohod,
            int_x2: traj.int_x2(),
        },
        q_t: (f_val - j_val) / root_t,
        f_scaled: f_val / root_t,
    })
}

fn ks_opt(xs: &[f64], sd: Option<f64>) -> Option<f64> {
    let sd = sd.filter(|s| *s > 0.0 && s.is_finite())?;
    if xs.len() < KS_MIN_SAMPLES || xs.iter().any(|x| !x.is_finite()) {
        return None;
    }
    ks_distance(xs, sd).ok()
}

fn run_cell(
    ctx: &CellContext<'_>,
    horizon: f64,
    targets: &Targets,
) -> Result<(CellSummary, Vec<Replication>)> {
    let cfg = ctx.config;
    let theta = cfg.theta_true;
    let grid = GridSpec::with_density(horizon, cfg.steps_per_unit_time)?;
    let gram = build_gram(ctx.model, &grid)?;
    let f_fun = ChaosFunctional::new(Kernel2D::f(theta, horizon)?, &gram)?;
    let h_fun = ChaosFunctional::new(Kernel2D::h(theta, horizon)?, &gram)?;

    let results: Vec<Result<Replication>> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|rep| replicate(ctx, &gram, &f_fun, &h_fun, replication_seed(cfg.master_seed, rep)))
        .collect();
    let failures = results.iter().filter(|r| r.is_err()).count();
    if failures * 100 > cfg.n_reps {
        let first = results.into_iter().find_map(|r| r.err()).map(|e| e.to_string()).unwrap_or_default();
        return Err(Error::Experiment(format!(
            "{failures} of {} replications failed at T = {horizon} (first: {first})",
            cfg.n_reps
        )));
    }
    for e in results.iter().filter_map(|r| r.as_ref().err()) {
        log::warn!("T = {horizon}: replication excluded: {e}");
    }
    let reps: Vec<Replication> = results.into_iter().filter_map(|r| r.ok()).collect();

    let col = |f: fn(&Replication) -> f64| reps.iter().map(f).collect::<Vec<f64>>();
    let root_t = horizon.sqrt();
    let tilde = col(|r| r.record.theta_tilde);
    let naive = col(|r| r.record.theta_hat_naive);
    let skor = col(|r| r.record.theta_hat_skorohod);
    let q = col(|r| r.q_t);
    let fs = col(|r| r.f_scaled);
    let me_scaled: Vec<f64> = tilde.iter().map(|x| root_t * (x - theta)).collect();
    let lse_scaled: Vec<f64> = skor.iter().map(|x| root_t * (x - theta)).collect();

    let b_t_value = b_t(ctx.model, theta, horizon, &QuadOptions::default())
        .map(|e| e.value)
        .map_err(|e| log::warn!("T = {horizon}: b_T unavailable: {e}"))
        .ok();
    let q_bt_target = match (b_t_value, targets.sigma_h2) {
        (Some(b), Some(s2)) => Some(4.0 * theta * b * b * s2),
        _ => None,
    };

    let small_sample = reps.len() < KS_MIN_SAMPLES;
    let summary = CellSummary {
        horizon,
        n: grid.steps(),
        replications: reps.len(),
        failures,
        jitter: gram.jitter(),
        theta_tilde: EstimatorStats::of(&tilde, theta),
        theta_hat_naive: EstimatorStats::of(&naive, theta),
        theta_hat_skorohod: EstimatorStats::of(&skor, theta),
        var_me_scaled: cfg.runs(EstimatorKind::Me).then(|| VarianceStat::of(&me_scaled, targets.me_var)),
        var_lse_scaled: cfg.runs(EstimatorKind::LseSkorohod).then(|| VarianceStat::of(&lse_scaled, targets.lse_var)),
        var_f: VarianceStat::of(&fs, targets.q_var),
        var_q: VarianceStat::of(&q, targets.q_var),
        ks_me: if cfg.runs(EstimatorKind::Me) { ks_opt(&me_scaled, targets.me_var.map(f64::sqrt)) } else { None },
        ks_q: ks_opt(&q, targets.q_var.map(f64::sqrt)),
        ks_q_bt: ks_opt(&q, q_bt_target.map(f64::sqrt)),
        b_t: b_t_value,
        small_sample,
    };
    Ok((summary, reps))
}

struct Targets {
    sigma_h2: Option<f64>,
    me_var: Option<f64>,
    lse_var: Option<f64>,
    q_var: Option<f64>,
}

fn fit_rate(t: &[f64], ks: &[Option<f64>]) -> Option<RateFit> {
    if t.len() < 3 {
        return None;
    }
    let ks: Option<Vec<f64>> = ks.iter().copied().collect();
    rate_fit(t, &ks?).ok().map(|(slope, r2)| RateFit { slope, r2 })
}

/// Runs every cell in ascending `T` and writes the outputs when
/// `config.output` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let model = config.validate()?;
    let hurst = model.hurst_eff();
    let theta = config.theta_true;
    let a = hurst * gamma(2.0 * hurst) * theta.powf(-2.0 * hurst);
    let constants = asymptotic_constants(theta, hurst).ok();
    let targets = Targets {
        sigma_h2: constants.map(|k| k.sigma_h2),
        me_var: constants.map(|k| k.me_var),
        lse_var: constants.map(|k| k.lse_var),
        q_var: constants.map(|k| 4.0 * theta * a * a * k.sigma_h2),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(config.workers))
        .build()
        .map_err(|e| Error::Experiment(format!("cannot start worker pool: {e}")))?;
    let ctx = CellContext { model: &model, config, hurst };

    let mut cells = Vec::with_capacity(config.t_list.len());
    let mut records = Vec::with_capacity(config.t_list.len());
    for &horizon in &config.t_list {
        let start = Instant::now();
        let (cell, reps) = pool.install(|| run_cell(&ctx, horizon, &targets))?;
        log::info!(
            "T = {horizon}: {} replications, {} failures, {:.2?}",
            cell.replications,
            cell.failures,
            start.elapsed()
        );
        cells.push(cell);
        records.push(reps);
    }

    let ts = &config.t_list;
    let summary = McSummary {
        config: config.clone(),
        hurst,
        a,
        sigma_h2: targets.sigma_h2,
        ks_me_rate: fit_rate(ts, &cells.iter().map(|c| c.ks_me).collect::<Vec<_>>()),
        ks_q_rate: fit_rate(ts, &cells.iter().map(|c| c.ks_q).collect::<Vec<_>>()),
        small_sample: cells.iter().any(|c| c.small_sample),
        cells,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let out = ExperimentOutput { summary, records };
    if let Some(dir) = &config.output {
        write_outputs(&out, dir)?;
    }
    Ok(out)
}

fn fmt(x: f64) -> String {
    // shortest round-trip representation
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt)
}

/// Writes `records.csv` (one row per successful replication), to `out`.
pub fn write_records<W: Write>(records: &[Vec<Replication>], mut out: W) -> Result<()> {
    let mut header: Vec<&str> = EstimateRecord::CSV_COLUMNS.to_vec();
    header.push("q_T");
    writeln!(out, "{}", header.join(","))?;
    for r in records.iter().flatten() {
        let e = &r.record;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            e.seed,
            fmt(e.horizon),
            e.n,
            fmt(e.hurst),
            fmt(e.theta_true),
            fmt(e.theta_tilde),
            fmt(e.theta_hat_naive),
            fmt(e.theta_hat_skorohod),
            fmt(e.int_x2),
            fmt(r.q_t)
        )?;
    }
    Ok(())
}

/// Writes `records.csv`, `summary.json` and `plotdata/*.tsv` under `dir`.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("plotdata"))?;
    let mut w = BufWriter::new(fs::File::create(dir.join("records.csv"))?);
    write_records(&out.records, &mut w)?;
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut w, &out.summary)?;
    writeln!(w)?;
    w.flush()?;

    let mut ks = BufWriter::new(fs::File::create(dir.join("plotdata").join("ks_vs_T.tsv"))?);
    writeln!(ks, "T\tks_me\tks_q\tks_q_bt")?;
    let mut var = BufWriter::new(fs::File::create(dir.join("plotdata").join("variance_vs_T.tsv"))?);
    writeln!(var, "T\tvar_me_scaled\tvar_me_se\tvar_q\tvar_q_se\ttarget_me\ttarget_q")?;
    for c in &out.summary.cells {
        writeln!(ks, "{}\t{}\t{}\t{}", fmt(c.horizon), fmt_opt(c.ks_me), fmt_opt(c.ks_q), fmt_opt(c.ks_q_bt))?;
        let me = c.var_me_scaled;
        writeln!(
            var,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            fmt(c.horizon),
            fmt_opt(me.map(|v| v.value)),
            fmt_opt(me.map(|v| v.se)),
            fmt(c.var_q.value),
            fmt(c.var_q.se),
            fmt_opt(me.and_then(|v| v.target)),
            fmt_opt(c.var_q.target)
        )?;
    }
    ks.flush()?;
    var.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(ModelSpec::Fbm { h: 0.3 }, 1.0, vec![2.0, 4.0], 30, 7);
        c.steps_per_unit_time = 10;
        c.workers = Some(2);
        c
    }

    #[test]
    fn seeds_differ_across_cells_and_reps() {
        let a = replication_seed(1, 0);
        assert_ne!(a, replication_seed(1, 1));
        assert_ne!(a, replication_seed(2, 0));
        assert_eq!(a, replication_seed(1, 0));
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = small_config();
        c.t_list = vec![4.0, 2.0];
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.n_reps = 0;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.hurst = Some(0.2);
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.theta_true = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let c = ExperimentConfig::from_json(
            r#"{"model":{"family":"fbm","H":0.3},"theta_true":1,"T_list":[5],"n_reps":3,"master_seed":1}"#,
        )
        .unwrap();
        assert_eq!(c.steps_per_unit_time, 20);
        assert_eq!(c.sigma, 1.0);
        assert_eq!(c.estimators.len(), 3);
        assert!(ExperimentConfig::from_json(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn run_is_deterministic_and_conserves_records() {
        let c = small_config();
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_records(&a.records, &mut x).unwrap();
        write_records(&b.records, &mut y).unwrap();
        assert_eq!(x, y);
        for (cell, reps) in a.summary.cells.iter().zip(&a.records) {
            assert_eq!(reps.len(), c.n_reps - cell.failures);
            assert!(cell.var_q.value >= 0.0);
            if let Some(ks) = cell.ks_me {
                assert!((0.0..=1.0).contains(&ks));
            }
        }
    }

    #[test]
    fn single_replication_is_flagged() {
        let mut c = small_config();
        c.n_reps = 1;
        let out = run_experiment(&c).unwrap();
        assert!(out.summary.small_sample);
        let cell = &out.summary.cells[0];
        assert_eq!(cell.var_q.value, 0.0);
        assert!(cell.ks_me.is_none());
    }

    #[test]
    fn worker_count_positive() {
        assert!(worker_count(Some(3)) >= 1);
        assert!(worker_count(None) >= 1);
    }
}
