use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use gfou::appendix::{lemma_sweep, SweepConfig};
use gfou::covariance::{check_hypothesis, CovarianceModel, ModelSpec};
use gfou::estimators::{asymptotic_constants, estimate_all};
use gfou::experiment::{run_experiment, ExperimentConfig};
use gfou::grid::GridSpec;
use gfou::simulate::{build_gram, ou_trajectory, Trajectory};
use gfou::{Error, Result};
use log::info;

use crate::output::{sig, Cell, Output, Table};
use crate::{Command, Family, ModelArgs};

fn model_from(args: &ModelArgs) -> Result<CovarianceModel<f64>> {
    if let Some(path) = &args.model_json {
        return CovarianceModel::from_json(&fs::read_to_string(path)?);
    }
    let h = args.hurst.ok_or_else(|| Error::InvalidModel("--H is required".into()))?;
    let need_k = || args.k.ok_or_else(|| Error::InvalidModel("this family needs --K".into()));
    let spec = match args.model.ok_or_else(|| Error::InvalidModel("--model is required".into()))? {
        Family::Fbm => ModelSpec::Fbm { h },
        Family::Subfbm => ModelSpec::Subfbm { h },
        Family::Bifbm => ModelSpec::Bifbm { h, k: need_k()? },
        Family::Gensubfbm => ModelSpec::Gensubfbm { h, k: need_k()? },
    };
    if args.k.is_some() && matches!(spec, ModelSpec::Fbm { .. } | ModelSpec::Subfbm { .. }) {
        return Err(Error::InvalidModel("--K applies to bifbm and gensubfbm only".into()));
    }
    CovarianceModel::from_spec(&spec)
}

fn read_trajectory(path: &Path) -> Result<Trajectory<f64>> {
    let text = fs::read(path)?;
    if text.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{') {
        Trajectory::read_json(&text[..])
    } else {
        Trajectory::read_csv(BufReader::new(&text[..]))
    }
}

/// Runs a command and writes its output (to `--out` or stdout).
pub fn execute(command: &Command) -> Result<()> {
    let common = command.common();
    let output = run(command)?;
    // mc-run's --out names the experiment directory; its table still goes to stdout
    let file = match command {
        Command::McRun { .. } => None,
        _ => common.out.as_deref(),
    };
    match file {
        Some(path) => {
            let mut w = BufWriter::new(fs::File::create(path)?);
            output.write(common.format, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            output.write(common.format, &mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn run(command: &Command) -> Result<Output> {
    match command {
        Command::Simulate { model, theta, sigma, horizon, n, common } => {
            let m = model_from(model)?;
            let grid = GridSpec::new(*horizon, *n)?;
            let seed = common.seed.unwrap_or(0);
            let traj = ou_trajectory(&m, *theta, *sigma, &grid, seed)?;
            info!("simulated {m} on T={horizon}, n={n}, seed {seed}");
            let (mut csv, mut json) = (Vec::new(), Vec::new());
            traj.write_csv(&mut csv)?;
            traj.write_json(&mut json)?;
            Ok(Output::Raw { csv, json })
        }
        Command::Estimate { input, hurst, theta_true, .. } => {
            let traj = read_trajectory(input)?;
            let h = hurst.unwrap_or_else(|| traj.model.hurst_eff());
            let gram = build_gram(&traj.model, &traj.grid)?;
            let r = estimate_all(&traj, &gram, h, *theta_true)?;
            Ok(Output::Table(Table::record(vec![
                ("seed", r.seed.into()),
                ("T", r.horizon.into()),
                ("n", r.n.into()),
                ("H", r.hurst.into()),
                ("theta_true", theta_true.map_or(Cell::Null, Cell::Num)),
                ("theta_tilde", r.theta_tilde.into()),
                ("theta_hat_naive", r.theta_hat_naive.into()),
                ("theta_hat_skorohod", r.theta_hat_skorohod.into()),
                ("int_x2", r.int_x2.into()),
            ])))
        }
        Command::CheckHypothesis { model, horizon, n, margin, .. } => {
            let m = model_from(model)?;
            let grid = GridSpec::new(*horizon, *n)?;
            let r = check_hypothesis(&m, &grid, *margin)?;
            Ok(Output::Table(Table::record(vec![
                ("model", m.to_string().into()),
                ("T", (*horizon).into()),
                ("n", (*n).into()),
                ("margin", (*margin).into()),
                ("c_prime_estimate", r.c_prime_estimate.into()),
                ("sup_ratio", r.sup_ratio.into()),
                ("argmax_t", r.argmax.map(|p| p.0).into()),
                ("argmax_s", r.argmax.map(|p| p.1).into()),
                ("nodes_checked", r.nodes_checked.into()),
                ("violations", r.violations.into()),
            ])))
        }
        Command::VerifyLemmas { hurst, config, rel_tol, .. } => {
            let cfg = match config {
                Some(path) => serde_json::from_str::<SweepConfig>(&fs::read_to_string(path)?)
                    .map_err(|e| Error::Parse(format!("sweep config: {e}")))?,
                None => SweepConfig { rel_tol: *rel_tol, ..SweepConfig::default_for(*hurst) },
            };
            let reports = lemma_sweep(&cfg);
            let mut table =
                Table::new(&["quantity", "status", "pass", "reference", "tolerance", "slope", "r2", "values", "note"]);
            for r in &reports {
                let values = r.values.iter().map(|v| sig(*v)).collect::<Vec<_>>().join(";");
                table.push(vec![
                    r.quantity.as_str().into(),
                    serde_json::to_value(r.status)?.as_str().unwrap_or_default().into(),
                    r.pass.into(),
                    r.reference.into(),
                    r.tolerance.into(),
                    r.slope.into(),
                    r.r2.into(),
                    values.into(),
                    r.note.as_str().into(),
                ]);
            }
            Ok(Output::Document { json: serde_json::to_value(&reports)?, table })
        }
        Command::McRun { config, common } => {
            let mut cfg = ExperimentConfig::from_json(&fs::read_to_string(config)?)
                .map_err(|e| Error::Parse(format!("experiment config: {e}")))?;
            if let Some(seed) = common.seed {
                cfg.master_seed = seed;
            }
            if let Some(out) = &common.out {
                cfg.output = Some(out.clone());
            }
            let start = Instant::now();
            let result = run_experiment(&cfg)?;
            info!("experiment finished in {:.1} s", start.elapsed().as_secs_f64());
            let s = &result.summary;
            let mut table = Table::new(&[
                "T",
                "n",
                "replications",
                "failures",
                "median_theta_tilde",
                "median_theta_hat_skorohod",
                "var_me_scaled",
                "var_me_target",
                "var_q",
                "var_q_target",
                "ks_me",
                "ks_q",
            ]);
            for c in &s.cells {
                table.push(vec![
                    c.horizon.into(),
                    c.n.into(),
                    c.replications.into(),
                    c.failures.into(),
                    c.theta_tilde.map(|e| e.median).into(),
                    c.theta_hat_skorohod.map(|e| e.median).into(),
                    c.var_me_scaled.map(|v| v.value).into(),
                    c.var_me_scaled.and_then(|v| v.target).into(),
                    c.var_q.value.into(),
                    c.var_q.target.into(),
                    c.ks_me.into(),
                    c.ks_q.into(),
                ]);
            }
            Ok(Output::Document { json: serde_json::to_value(s)?, table })
        }
        Command::Constants { hurst, theta, .. } => {
            let k = asymptotic_constants(*theta, *hurst)?;
            Ok(Output::Table(Table::record(vec![
                ("H", (*hurst).into()),
                ("theta", (*theta).into()),
                ("sigma_H2", k.sigma_h2.into()),
                ("lse_var", k.lse_var.into()),
                ("me_var", k.me_var.into()),
                ("delta", k.delta.into()),
                ("h_quarter_flag", k.h_quarter_flag.into()),
            ])))
        }
    }
}
