use std::io::Write;
use std::path::PathBuf;

use httq_core::maps::{solve_phi_mg, solve_phi_n_g, solve_phi_m, solve_skorokhod_g};
use httq_core::scaling::uniform_grid;
use httq_core::validation::{
    compare_abandonment, convergence_sweep, coupling_gap, little_gap, neg_part_sup, GapName,
    GapStatistic, LimitSampler, ValidationError,
};
use httq_core::{
    CadlagPath, Drift, DriftSign, PicardOptions, RenewalTable, ScalarFn, ScaledBundle,
    SystemConfig, Wait,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::RunDir;
use crate::spec::{
    CompareSpec, ExperimentSpec, LimitSpec, MapKind, MapsSpec, RenewalSpec, SimulateSpec, SweepFile,
};
use crate::RunError;

pub struct Options {
    pub seed: u64,
    pub out: PathBuf,
    pub check: bool,
    pub grid_step: Option<f64>,
}

fn runtime(e: impl std::fmt::Display) -> RunError {
    RunError::Runtime(e.to_string())
}

/// Validation errors that stem from the input are reported as such.
fn from_validation(e: ValidationError) -> RunError {
    match e {
        ValidationError::Sweep(m) => RunError::Invalid(m),
        ValidationError::Sim(httq_core::SimError::Config(m)) => RunError::Invalid(m),
        ValidationError::Limit(e) => RunError::Invalid(e.to_string()),
        ValidationError::Renewal(e) => RunError::Invalid(e.to_string()),
        other => runtime(other),
    }
}

/// Uniform grid with step `h` on `[0, T]`; `h` must divide `T`.
fn step_grid(horizon: f64, h: f64) -> Result<Vec<f64>, RunError> {
    let r = horizon / h;
    let m = r.round();
    if !(h > 0.0) || m < 1.0 || (r - m).abs() > 1e-6 * r {
        return Err(RunError::Invalid(format!("grid step {h} does not divide horizon {horizon}")));
    }
    Ok(uniform_grid(horizon, m as usize))
}

pub fn execute(spec: &ExperimentSpec, opts: &Options) -> Result<PathBuf, RunError> {
    let dir = RunDir::create(&opts.out, &spec.hash(), opts.seed)?;
    match spec {
        ExperimentSpec::Simulate(s) => simulate(s, opts, dir),
        ExperimentSpec::Limit(s) => limit(s, opts, dir),
        ExperimentSpec::Renewal(s) => renewal(s, opts, dir),
        ExperimentSpec::Sweep(s) => sweep(s, opts, dir),
        ExperimentSpec::Compare(s) => compare(s, opts, dir),
        ExperimentSpec::Maps(s) => maps(s, opts, dir),
    }
}

#[derive(Serialize)]
struct ReplicationSummary {
    replication: u64,
    initial_count: u64,
    arrivals: usize,
    abandonments: usize,
    gaps: Vec<GapStatistic>,
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    config: &'a SystemConfig,
    config_hash: String,
    servers: usize,
    replications: Vec<ReplicationSummary>,
}

fn simulate(s: &SimulateSpec, opts: &Options, mut dir: RunDir) -> Result<PathBuf, RunError> {
    let config = &s.config;
    let horizon = config.horizon;
    let grid = match opts.grid_step.or(s.grid_step) {
        Some(h) => step_grid(horizon, h)?,
        None => uniform_grid(horizon, 200),
    };
    let f = if config.abandonment {
        config.patience.limit_fn()
    } else {
        ScalarFn::zero()
    };
    let runs = (0..s.replications)
        .into_par_iter()
        .map(|r| {
            let record = httq_core::simulate_config(config, opts.seed, r).map_err(runtime)?;
            let bundle = ScaledBundle::new(&record, config, Some(&grid)).map_err(runtime)?;
            Ok((record, bundle))
        })
        .collect::<Result<Vec<_>, RunError>>()?;

    let mut summaries = Vec::new();
    for (r, (record, bundle)) in runs.iter().enumerate() {
        let r = r as u64;
        dir.csv(
            &format!("events_r{r}.csv"),
            vec![
                ("time", "event epoch"),
                ("kind", "arrival, service_start, service_end or abandonment"),
                ("customer", "customer id; initial customers have ids <= 0"),
            ],
            |w| record.write_events_csv(w),
        )?;
        dir.csv(
            &format!("paths_r{r}.csv"),
            vec![
                ("time", "grid time"),
                ("x_tilde", "(X - N)/sqrt(n)"),
                ("q_tilde", "positive part of x_tilde"),
                ("e_tilde", "(E - lambda t)/sqrt(n)"),
                ("s_tilde", "(S - mu_n * integral of busy servers)/sqrt(n)"),
                ("g_tilde", "G/sqrt(n)"),
                ("g_hat", "g_tilde minus its compensator"),
                ("omega_tilde", "sqrt(n) times the virtual wait; empty when truncated"),
            ],
            |w| {
                writeln!(w, "time,x_tilde,q_tilde,e_tilde,s_tilde,g_tilde,g_hat,omega_tilde")?;
                for (&t, wait) in bundle.grid.iter().zip(&bundle.virtual_wait) {
                    let omega = match wait {
                        Wait::Exact(v) => v.to_string(),
                        Wait::Truncated => String::new(),
                    };
                    writeln!(
                        w,
                        "{t},{},{},{},{},{},{},{omega}",
                        bundle.head_count.eval(t),
                        bundle.queue.eval(t),
                        bundle.arrivals.eval(t),
                        bundle.service_raw.eval(t),
                        bundle.abandonments.eval(t),
                        bundle.abandonment_martingale.eval(t),
                    )?;
                }
                Ok(())
            },
        )?;
        dir.binary(&format!("trace_r{r}.bin"), record)?;
        summaries.push(ReplicationSummary {
            replication: r,
            initial_count: record.meta.initial_count,
            arrivals: record.customers.iter().filter(|c| c.id >= 1).count(),
            abandonments: record.abandonment_count(),
            gaps: vec![
                coupling_gap(bundle, &f, r),
                little_gap(bundle, r),
                neg_part_sup(bundle, r),
            ],
        });
    }
    dir.json(
        "summary.json",
        &SimulateSummary {
            config,
            config_hash: config.hash(),
            servers: config.servers(),
            replications: summaries,
        },
    )?;
    dir.finish()
}

#[derive(Serialize)]
struct LimitSampleSummary {
    sample: u64,
    residual: f64,
    iterations: usize,
    complementarity: Option<f64>,
    x_at_horizon: f64,
}

fn limit(s: &LimitSpec, opts: &Options, mut dir: RunDir) -> Result<PathBuf, RunError> {
    let sampler = LimitSampler::new(&s.config, opts.grid_step.or(s.grid_step), opts.seed)
        .map_err(from_validation)?;
    let sols = (0..s.samples)
        .into_par_iter()
        .map(|i| sampler.solve(i).map_err(from_validation))
        .collect::<Result<Vec<_>, _>>()?;
    dir.csv(
        "paths.csv",
        vec![
            ("sample", "sample index"),
            ("time", "grid time"),
            ("x", "limit head count X(t)"),
        ],
        |w| {
            writeln!(w, "sample,time,x")?;
            for (i, sol) in sols.iter().enumerate() {
                for (t, x) in sol.x.times().iter().zip(sol.x.values()) {
                    writeln!(w, "{i},{t},{x}")?;
                }
            }
            Ok(())
        },
    )?;
    let horizon = s.config.horizon;
    let summary: Vec<LimitSampleSummary> = sols
        .iter()
        .enumerate()
        .map(|(i, sol)| LimitSampleSummary {
            sample: i as u64,
            residual: sol.residual,
            iterations: sol.iterations,
            complementarity: sol.complementarity,
            x_at_horizon: sol.x.eval(horizon),
        })
        .collect();
    dir.json(
        "summary.json",
        &serde_json::json!({
            "case": sols.first().map(|s| s.case),
            "step": sampler.grid().step,
            "samples": summary,
        }),
    )?;
    dir.finish()
}

fn renewal(s: &RenewalSpec, opts: &Options, mut dir: RunDir) -> Result<PathBuf, RunError> {
    let table = match opts.grid_step.or(s.grid_step) {
        Some(h) => RenewalTable::compute(&s.service, s.horizon, h),
        None => RenewalTable::with_default_step(&s.service, s.horizon),
    }
    .map_err(|e| RunError::Invalid(e.to_string()))?;
    let mu = table.mu();
    dir.csv(
        "renewal.csv",
        vec![
            ("time", "grid time"),
            ("M", "renewal function M(t)"),
            ("mu_t", "elementary renewal asymptote mu t"),
        ],
        |w| {
            writeln!(w, "time,M,mu_t")?;
            for (t, m) in table.times().iter().zip(table.values()) {
                writeln!(w, "{t},{m},{}", mu * t)?;
            }
            Ok(())
        },
    )?;
    dir.json(
        "summary.json",
        &serde_json::json!({
            "service": s.service,
            "mu": mu,
            "step": table.step(),
            "lattice": table.is_lattice(),
            "step_adjusted": table.was_adjusted(),
            "residual": table.residual(),
            "rate_tolerance": table.rate_tolerance(),
        }),
    )?;
    dir.finish()
}

fn sweep(s: &SweepFile, opts: &Options, mut dir: RunDir) -> Result<PathBuf, RunError> {
    let mut spec = s.sweep.clone();
    if let Some(h) = opts.grid_step {
        spec.limit_step = Some(h);
    }
    let report = convergence_sweep(&spec, opts.seed).map_err(from_validation)?;
    dir.csv(
        "rows.csv",
        vec![
            ("n", "scale index"),
            ("statistic", "coupling_gap, little_gap or neg_part_sup"),
            ("replication", "replication index"),
            ("value", "statistic value"),
            ("excluded", "truncated virtual-wait grid points left out"),
        ],
        |w| report.write_csv(w),
    )?;
    dir.csv(
        "summary.csv",
        vec![
            ("n", "scale index"),
            ("statistic", "statistic name"),
            ("median", "median over replications"),
            ("q1", "first quartile"),
            ("q3", "third quartile"),
            ("iqr", "interquartile range"),
        ],
        |w| {
            writeln!(w, "n,statistic,median,q1,q3,iqr")?;
            for per in &report.per_n {
                for name in GapName::ALL {
                    let m = per.summary(name);
                    writeln!(w, "{},{},{},{},{},{}", per.n, name.as_str(), m.median, m.q1, m.q3, m.iqr)?;
                }
            }
            Ok(())
        },
    )?;
    dir.csv(
        "ks.csv",
        vec![
            ("n", "scale index"),
            ("time", "checkpoint time"),
            ("ks", "two-sample KS statistic of X_tilde(time) against limit samples"),
        ],
        |w| {
            writeln!(w, "n,time,ks")?;
            for per in &report.per_n {
                for e in &per.ks {
                    writeln!(w, "{},{},{}", per.n, e.time, e.statistic)?;
                }
            }
            Ok(())
        },
    )?;
    dir.json("report.json", &report)?;
    let path = dir.finish()?;
    if opts.check && !report.passed {
        return Err(RunError::Check(format!(
            "trend verdicts did not pass; report in {}",
            path.display()
        )));
    }
    Ok(path)
}

#[derive(Serialize)]
struct CompareRow {
    config: usize,
    replication: u64,
    times_checked: usize,
    max_margin: f64,
    violation: Option<httq_core::validation::Violation>,
}

fn compare(s: &CompareSpec, opts: &Options, mut dir: RunDir) -> Result<PathBuf, RunError> {
    let jobs: Vec<(usize, u64)> = (0..s.configs.len())
        .flat_map(|c| (0..s.seeds).map(move |r| (c, r)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(c, r)| match compare_abandonment(&s.configs[c], opts.seed, r) {
            Ok(v) => Ok(CompareRow {
                config: c,
                replication: r,
                times_checked: v.times_checked,
                max_margin: v.max_margin,
                violation: None,
            }),
            Err(ValidationError::Violation(v)) => Ok(CompareRow {
                config: c,
                replication: r,
                times_checked: 0,
                max_margin: f64::NAN,
                violation: Some(*v),
            }),
            Err(e) => Err(from_validation(e)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    dir.csv(
        "comparison.csv",
        vec![
            ("config", "index into configs"),
            ("replication", "replication index"),
            ("times_checked", "event times compared"),
            ("max_margin", "largest Q0 - Q"),
            ("violation_time", "first time with Q > Q0; empty when none"),
        ],
        |w| {
            writeln!(w, "config,replication,times_checked,max_margin,violation_time")?;
            for row in &rows {
                let vt = row.violation.as_ref().map_or(String::new(), |v| v.time.to_string());
                writeln!(w, "{},{},{},{},{vt}", row.config, row.replication, row.times_checked, row.max_margin)?;
            }
            Ok(())
        },
    )?;
    dir.json("comparison.json", &rows)?;
    let path = dir.finish()?;
    let violations = rows.iter().filter(|r| r.violation.is_some()).count();
    if violations > 0 {
        eprintln!("httq: {violations} comparison violations; see {}", path.display());
        if opts.check {
            return Err(RunError::Check(format!("{violations} comparison violations")));
        }
    }
    Ok(path)
}

fn maps(s: &MapsSpec, opts: &Options, mut dir: RunDir) -> Result<PathBuf, RunError> {
    let invalid = |e: &dyn std::fmt::Display| RunError::Invalid(e.to_string());
    let y = CadlagPath::linear(s.times.clone(), s.values.clone()).map_err(|e| invalid(&e))?;
    let horizon = y.horizon();
    let h = opts.grid_step.or(s.grid_step).unwrap_or(horizon / 1000.0);
    let g = match &s.g {
        Some(f) => Drift::new(f.clone()).map_err(|e| invalid(&e))?,
        None => Drift::zero(),
    };
    let table = || -> Result<RenewalTable, RunError> {
        let service = s
            .service
            .as_ref()
            .ok_or_else(|| RunError::Invalid("this map needs `service`".into()))?;
        RenewalTable::compute(service, horizon, h).map_err(|e| invalid(&e))
    };
    let sol = match s.map {
        MapKind::PhiNG => {
            let mu_n = s
                .mu_n
                .ok_or_else(|| RunError::Invalid("phi_n_g needs `mu_n`".into()))?;
            solve_phi_n_g(&y, &g, mu_n, h)
        }
        MapKind::Skorokhod => solve_skorokhod_g(&y, &g, h),
        MapKind::PhiM => solve_phi_m(&y, &table()?, h),
        MapKind::PhiMG => solve_phi_mg(
            &y,
            &table()?,
            &g,
            s.sign.unwrap_or(DriftSign::Minus),
            h,
            PicardOptions::default(),
        ),
    }
    .map_err(|e| invalid(&e))?;
    dir.csv(
        "solution.csv",
        vec![
            ("time", "grid time"),
            ("y", "input"),
            ("x", "solution"),
            ("ell", "regulator (reflected map only; empty otherwise)"),
        ],
        |w| {
            writeln!(w, "time,y,x,ell")?;
            for (k, (&t, &x)) in sol.x.times().iter().zip(sol.x.values()).enumerate() {
                let ell = sol.ell.as_ref().map_or(String::new(), |l| l.values()[k].to_string());
                writeln!(w, "{t},{},{x},{ell}", y.eval(t))?;
            }
            Ok(())
        },
    )?;
    dir.json(
        "summary.json",
        &serde_json::json!({
            "map": s.map,
            "step": sol.step,
            "residual": sol.residual,
            "iterations": sol.iterations,
            "changes": sol.changes,
            "decay_ratio": sol.decay_ratio,
            "complementarity": sol.complementarity,
        }),
    )?;
    dir.finish()
}
