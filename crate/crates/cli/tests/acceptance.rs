//! Acceptance suite. Prints one PASS/FAIL line per criterion with the measured
//! quantities, the tolerance and the runtime against its budget, then exits
//! non-zero if any criterion failed.
//!
//! `cargo test -p gfou-cli --test acceptance -- 3 5` runs a subset by number.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use gfou::appendix::{lemma_sweep, SweepConfig, SweepItem};
use gfou::covariance::{check_hypothesis, CovarianceModel, ModelSpec};
use gfou::estimators::asymptotic_constants;
use gfou::experiment::{run_experiment, EstimatorKind, ExperimentConfig, McSummary};
use gfou::grid::GridSpec;
use gfou::hilbert::{b_t, inner_h, HFunction, Kernel2D, StepFunction};
use gfou::quadrature::QuadOptions;
use gfou::simulate::{build_gram, chaos_i2, decomposition_residual, ou_from_path, sample_path, OuScheme};
use gfou::special::gamma;
use gfou::stats::{mean, rate_fit};

type Outcome = Result<(bool, String), String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn experiment(model: ModelSpec, t_list: Vec<f64>, n_reps: usize, seed: u64) -> Result<McSummary, String> {
    let mut cfg = ExperimentConfig::new(model, 1.0, t_list, n_reps, seed);
    cfg.steps_per_unit_time = 20;
    Ok(run_experiment(&cfg).map_err(err)?.summary)
}

fn c1_hypothesis() -> Outcome {
    let models = [
        CovarianceModel::subfbm(0.3),
        CovarianceModel::bifbm(0.6, 0.5),
        CovarianceModel::gensubfbm(0.3, 1.5),
    ];
    let grid = GridSpec::new(10.0, 200).map_err(err)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for m in models {
        let m: CovarianceModel<f64> = m.map_err(err)?;
        let start = Instant::now();
        let a = check_hypothesis(&m, &grid, 1.0).map_err(err)?;
        let b = check_hypothesis(&m, &grid.refined(), 1.0).map_err(err)?;
        let secs = start.elapsed().as_secs_f64();
        let rel = (b.c_prime_estimate / a.c_prime_estimate - 1.0).abs();
        let pass = a.violations == 0 && b.violations == 0 && rel <= 0.1 && secs < 10.0;
        ok &= pass;
        parts.push(format!(
            "{m}: C'={:.4} (2x {:.4}, {:.1}%) violations {} ({secs:.2}s)",
            a.c_prime_estimate,
            b.c_prime_estimate,
            100.0 * rel,
            a.violations + b.violations
        ));
    }
    Ok((ok, format!("{} [tol ±10%, 0 violations, <10 s each]", parts.join("; "))))
}

fn c2_bt_rate() -> Outcome {
    let h = 0.3_f64;
    let m = CovarianceModel::fbm(h).map_err(err)?;
    let a = h * gamma(2.0 * h);
    let ts = [10.0, 20.0, 40.0, 80.0];
    let mut gaps = Vec::new();
    for t in ts {
        gaps.push((b_t(&m, 1.0, t, &QuadOptions::default()).map_err(err)?.value - a).abs());
    }
    let (slope, r2) = rate_fit(&ts, &gaps).map_err(err)?;
    Ok((slope <= -0.8 && r2 >= 0.9, format!("slope {slope:.4}, R2 {r2:.4} [tol slope <= -0.8, R2 >= 0.9]")))
}

fn c3_f_variance() -> Outcome {
    let h = 0.3;
    let s = experiment(ModelSpec::Fbm { h }, vec![50.0], 2000, 3003)?;
    let cell = &s.cells[0];
    let sigma_h2 = s.sigma_h2.ok_or("no sigma_H2")?;
    // Var(F_T)/T against 4 theta a^2 sigma_H^2, i.e. Var(F_T)/(4 theta sigma_H^2 T) against a^2
    let ratio = cell.var_f.value / (4.0 * sigma_h2);
    let se = cell.var_f.se / (4.0 * sigma_h2);
    let target = (h * gamma(2.0 * h)).powi(2);
    let rel = (ratio / target - 1.0).abs();
    let covers = (ratio - target).abs() <= 3.0 * se;
    Ok((
        rel <= 0.15 && covers,
        format!(
            "n={} reps={}: Var(F_T)/(4 sigma_H2 T) = {ratio:.5} ± {se:.5} vs a^2 = {target:.5} ({:.1}%) [tol 15%, ±3 SE covers]",
            cell.n,
            cell.replications,
            100.0 * rel
        ),
    ))
}

fn c4_consistency() -> Outcome {
    let ts = vec![25.0, 50.0, 100.0];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, spec) in [("fbm", ModelSpec::Fbm { h: 0.3 }), ("subfbm", ModelSpec::Subfbm { h: 0.3 })] {
        let s = experiment(spec, ts.clone(), 200, 4004)?;
        let me: Vec<f64> = s.cells.iter().map(|c| c.theta_tilde.map_or(f64::NAN, |e| e.median_abs_error)).collect();
        let sk: Vec<f64> =
            s.cells.iter().map(|c| c.theta_hat_skorohod.map_or(f64::NAN, |e| e.median_abs_error)).collect();
        let dec = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
        ok &= dec(&me) && dec(&sk);
        let f = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" > ");
        parts.push(format!("{name}: ME {}; LSE {}", f(&me), f(&sk)));
    }
    Ok((ok, format!("median |err| at T=25,50,100 {} [strictly decreasing]", parts.join("; "))))
}

fn c5_clt() -> Outcome {
    let h = 0.3;
    let s = experiment(ModelSpec::Fbm { h }, vec![100.0], 500, 5005)?;
    let cell = &s.cells[0];
    let var = cell.var_me_scaled.ok_or("no ME variance")?;
    let target = asymptotic_constants(1.0, h).map_err(err)?.me_var;
    let rel = (var.value / target - 1.0).abs();
    let ks = cell.ks_q.ok_or("no KS")?;
    Ok((
        rel <= 0.25 && ks < 0.08,
        format!(
            "n={}: Var(sqrt(T)(ME-theta)) = {:.4} vs {target:.4} ({:.1}%), KS(Q_T) = {ks:.4} (with b_T: {:.4}) [tol 25%, KS < 0.08]",
            cell.n,
            var.value,
            100.0 * rel,
            cell.ks_q_bt.unwrap_or(f64::NAN)
        ),
    ))
}

fn c6_berry_esseen() -> Outcome {
    let mut cfg = ExperimentConfig::new(ModelSpec::Fbm { h: 0.2 }, 1.0, vec![25.0, 50.0, 100.0, 200.0], 500, 6006);
    cfg.steps_per_unit_time = 40;
    cfg.estimators = vec![EstimatorKind::Me];
    let s = run_experiment(&cfg).map_err(err)?.summary;
    let ks: Vec<f64> = s.cells.iter().map(|c| c.ks_me.unwrap_or(f64::NAN)).collect();
    let monotone = ks.windows(2).all(|w| w[1] <= w[0]);
    let fit = s.ks_me_rate.ok_or("no rate fit")?;
    let ok = monotone && fit.slope < 0.0 && fit.r2 >= 0.8;
    let shown = ks.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    Ok((
        ok,
        format!(
            "KS(ME) at T=25,50,100,200: {shown}; slope {:.3}, R2 {:.3} [non-increasing, slope < 0, R2 >= 0.8]",
            fit.slope, fit.r2
        ),
    ))
}

fn c7_appendix() -> Outcome {
    let config = SweepConfig {
        hurst: 0.3,
        items: vec![
            SweepItem::LemmaA { beta: 0.3, s_min: 0.01, s_max: 50.0, points: 40 },
            SweepItem::LemmaAbar { beta: 0.3, s_min: 0.01, s_max: 50.0, points: 40 },
            SweepItem::PsiSlope { t_list: vec![10.0, 20.0, 40.0, 80.0], tolerance: 0.1 },
            SweepItem::PhiLimit { horizon: 200.0, tolerance: 0.1 },
            SweepItem::ChiBounded { t_list: vec![20.0, 40.0, 80.0], max_ratio: 3.0 },
        ],
        rel_tol: 1e-6,
    };
    let reports = lemma_sweep(&config);
    let ok = reports.iter().all(|r| r.pass);
    let parts: Vec<String> = reports
        .iter()
        .map(|r| {
            let extra = match r.quantity.as_str() {
                "phi_TT_limit" => format!(" {:.4} vs {:.4}", r.values.first().copied().unwrap_or(f64::NAN), r.reference),
                _ => r.slope.map_or(String::new(), |s| format!(" slope {s:.4}")),
            };
            format!("{} {:?}{extra}{}", r.quantity, r.status, if r.note.is_empty() { "".into() } else { format!(" ({})", r.note) })
        })
        .collect();
    Ok((ok, parts.join("; ")))
}

fn c8_identities() -> Outcome {
    // rank-one J_T
    let m: CovarianceModel<f64> = CovarianceModel::subfbm(0.3).map_err(err)?;
    let (theta, t) = (1.0_f64, 10.0);
    let grid = GridSpec::new(t, 200).map_err(err)?;
    let gram = build_gram(&m, &grid).map_err(err)?;
    let a: Vec<f64> = (0..grid.steps()).map(|i| (-theta * (t - grid.midpoint(i))).exp()).collect();
    let ca = gram.cov().mul_vec(&a);
    let ey2: f64 = a.iter().zip(&ca).map(|(x, y)| x * y).sum();
    let h = Kernel2D::h(theta, t).map_err(err)?;
    let mut rank_one = 0.0f64;
    for seed in 0..20 {
        let path = sample_path(&gram, seed);
        let y: f64 = a.iter().zip(&path.increments).map(|(x, d)| x * d).sum();
        rank_one = rank_one.max((chaos_i2(&h, &path, &gram).map_err(err)? - (y * y - ey2)).abs());
    }
    // indicator rectangles
    let mut rect = 0.0f64;
    for m in [CovarianceModel::fbm(0.3), CovarianceModel::subfbm(0.2), CovarianceModel::bifbm(0.6, 0.5)] {
        let m: CovarianceModel<f64> = m.map_err(err)?;
        for k in 0..20 {
            let x = k as f64;
            let (a, b, c, d) = (0.1 * x, 0.1 * x + 0.7, 0.37 * x, 0.37 * x + 1.3);
            let f: HFunction<f64> = StepFunction::indicator(a, b).map_err(err)?.into();
            let g: HFunction<f64> = StepFunction::indicator(c, d).map_err(err)?.into();
            let v = inner_h(&m, &f, &g, &QuadOptions::default()).map_err(err)?.value;
            rect = rect.max((v - (m.cov(b, d) - m.cov(b, c) - m.cov(a, d) + m.cov(a, c))).abs());
        }
    }
    // decomposition residual
    let fbm: CovarianceModel<f64> = CovarianceModel::fbm(0.3).map_err(err)?;
    let t = 20.0;
    let gram = build_gram(&fbm, &GridSpec::new(t, 2000).map_err(err)?).map_err(err)?;
    let b = b_t(&fbm, 1.0, t, &QuadOptions::default()).map_err(err)?.value;
    let mut res = Vec::new();
    for seed in 0..50 {
        let traj = ou_from_path(&fbm, sample_path(&gram, 8000 + seed), 1.0, 1.0, OuScheme::Recursive).map_err(err)?;
        res.push(decomposition_residual(&traj, &gram, 1.0, b).map_err(err)?);
    }
    let ratio = mean(&res) / b;
    Ok((
        rank_one <= 1e-10 && rect <= 1e-12 && ratio <= 0.05,
        format!(
            "rank-one max err {rank_one:.2e} [1e-10]; rectangles max err {rect:.2e} [1e-12]; residual/b_T {:.3}% at T=20, n=2000 [5%]",
            100.0 * ratio
        ),
    ))
}

fn gfou(args: &[&str]) -> Result<Vec<u8>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_gfou")).args(args).output().map_err(err)?;
    if !o.status.success() {
        return Err(format!("gfou {} failed: {}", args.join(" "), String::from_utf8_lossy(&o.stderr)));
    }
    Ok(o.stdout)
}

fn read_tree(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for f in ["records.csv", "summary.json", "plotdata/ks_vs_T.tsv", "plotdata/variance_vs_T.tsv"] {
        files.push((f.to_string(), fs::read(dir.join(f)).map_err(err)?));
    }
    Ok(files)
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let mut same = Vec::new();
    let sim = ["simulate", "--model", "fbm", "--H", "0.3", "--theta", "1", "--T", "10", "--n", "200", "--seed", "42"];
    for name in ["a.csv", "b.csv"] {
        gfou(&[&sim[..], &["--out", &p(name)]].concat())?;
    }
    same.push(("simulate", fs::read(p("a.csv")).map_err(err)? == fs::read(p("b.csv")).map_err(err)?));
    let json = [&sim[..], &["--format", "json"]].concat();
    same.push(("simulate json", gfou(&json)? == gfou(&json)?));
    let est = ["estimate", "--input", &p("a.csv"), "--format", "json"];
    same.push(("estimate", gfou(&est)? == gfou(&est)?));
    let hyp = ["check-hypothesis", "--model", "bifbm", "--H", "0.6", "--K", "0.5", "--T", "10", "--n", "200"];
    same.push(("check-hypothesis", gfou(&hyp)? == gfou(&hyp)?));
    let lem = ["verify-lemmas", "--H", "0.3"];
    same.push(("verify-lemmas", gfou(&lem)? == gfou(&lem)?));
    let con = ["constants", "--H", "0.3", "--theta", "2", "--format", "json"];
    same.push(("constants", gfou(&con)? == gfou(&con)?));
    let cfg = p("mc.json");
    fs::write(
        &cfg,
        r#"{"model":{"family":"subfbm","H":0.3},"theta_true":1.0,"T_list":[5.0,10.0],"n_reps":100,"master_seed":9}"#,
    )
    .map_err(err)?;
    // the output path is recorded in summary.json, so both runs use the same one
    let run = p("run");
    let s1 = gfou(&["mc-run", "--config", &cfg, "--out", &run])?;
    let first = read_tree(Path::new(&run))?;
    fs::remove_dir_all(&run).map_err(err)?;
    // a different worker count must not change the bytes
    let o2 = Command::new(env!("CARGO_BIN_EXE_gfou"))
        .args(["mc-run", "--config", &cfg, "--out", &run])
        .env("GFOU_THREADS", "1")
        .output()
        .map_err(err)?;
    same.push(("mc-run", s1 == o2.stdout && first == read_tree(Path::new(&run))?));
    let ok = same.iter().all(|(_, s)| *s);
    let detail = same.iter().map(|(n, s)| format!("{n} {}", if *s { "identical" } else { "DIFFERS" })).collect::<Vec<_>>();
    Ok((ok, format!("{} [byte-identical]", detail.join(", "))))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "hypothesis verification", budget: Duration::from_secs(30), run: c1_hypothesis },
        Criterion { id: 2, name: "b_T limit and rate", budget: Duration::from_secs(120), run: c2_bt_rate },
        Criterion { id: 3, name: "F_T variance limit", budget: Duration::from_secs(300), run: c3_f_variance },
        Criterion { id: 4, name: "strong consistency", budget: Duration::from_secs(600), run: c4_consistency },
        Criterion { id: 5, name: "CLT variance and chaos KS", budget: Duration::from_secs(900), run: c5_clt },
        Criterion { id: 6, name: "Berry-Esseen direction", budget: Duration::from_secs(1800), run: c6_berry_esseen },
        Criterion { id: 7, name: "appendix oracles", budget: Duration::from_secs(300), run: c7_appendix },
        Criterion { id: 8, name: "algebraic identities", budget: Duration::from_secs(300), run: c8_identities },
        Criterion { id: 9, name: "determinism", budget: Duration::from_secs(300), run: c9_determinism },
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= c.budget;
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass && in_budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "{} [{}] {}: {} (runtime {:.1}s / {}s{})",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            if in_budget { "" } else { ", over budget" }
        );
        if !pass {
            failed.push(c.id);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: {} failed: {:?}", failed.len(), failed);
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
