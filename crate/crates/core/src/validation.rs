//! Finite-n statistics for the limit relationships, and the n-sweep that
//! turns them into measured trends.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::inputs::{Purpose, RandomStream, ScalarFn};
use crate::limit::{
    solve_limit_case_i, solve_limit_case_ii, CaseTwoMethod, GaussianSampler, Grid, LimitError,
    LimitSolution, NoiseSample,
};
use crate::maps::{Drift, MapError};
use crate::renewal::{default_step, RenewalError, RenewalTable};
use crate::scaling::{uniform_grid, ScaleError, ScaledBundle};
use crate::sim::{simulate_config, SimError, SimRecord, SystemConfig, Wait};

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error("invalid sweep: {0}")]
    Sweep(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Renewal(#[from] RenewalError),
    #[error("comparison violated at t = {}: Q = {} > Q0 = {}", .0.time, .0.with_abandonment, .0.without_abandonment)]
    Violation(Box<Violation>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapName {
    CouplingGap,
    LittleGap,
    NegPartSup,
}

impl GapName {
    pub const ALL: [GapName; 3] = [GapName::CouplingGap, GapName::LittleGap, GapName::NegPartSup];

    pub fn as_str(self) -> &'static str {
        match self {
            GapName::CouplingGap => "coupling_gap",
            GapName::LittleGap => "little_gap",
            GapName::NegPartSup => "neg_part_sup",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStatistic {
    pub name: GapName,
    pub value: f64,
    pub n: u64,
    pub horizon: f64,
    pub replication: u64,
    /// Grid points left out because the virtual wait was truncated.
    pub excluded: usize,
}

/// `sup_t |G̃(t) − μ∫₀ᵗ f(Q̃(s)/μ) ds|`, exact over all breakpoints.
pub fn coupling_gap(bundle: &ScaledBundle, f: &ScalarFn, replication: u64) -> GapStatistic {
    let mu = bundle.mu;
    let compensator = bundle
        .queue
        .compose(|q| f.eval(q / mu))
        .running_integral()
        .scale(mu);
    let gap = bundle
        .abandonments
        .sub(&compensator)
        .expect("same horizon")
        .sup_abs();
    GapStatistic {
        name: GapName::CouplingGap,
        value: gap,
        n: bundle.n,
        horizon: bundle.arrivals.horizon(),
        replication,
        excluded: 0,
    }
}

/// `sup |μω̃(t) − Q̃(t)|` over the virtual-wait grid, a lower bound on the
/// sup over `[0, T]`. Truncated grid points are skipped and counted.
pub fn little_gap(bundle: &ScaledBundle, replication: u64) -> GapStatistic {
    let mut value = 0.0_f64;
    let mut excluded = 0;
    for (&t, w) in bundle.grid.iter().zip(&bundle.virtual_wait) {
        match w {
            Wait::Exact(v) => value = value.max((bundle.mu * v - bundle.queue.eval(t)).abs()),
            Wait::Truncated => excluded += 1,
        }
    }
    GapStatistic {
        name: GapName::LittleGap,
        value,
        n: bundle.n,
        horizon: bundle.arrivals.horizon(),
        replication,
        excluded,
    }
}

/// `sup_t (X̃(t))⁻`
pub fn neg_part_sup(bundle: &ScaledBundle, replication: u64) -> GapStatistic {
    GapStatistic {
        name: GapName::NegPartSup,
        value: bundle.head_count.neg_part_sup(),
        n: bundle.n,
        horizon: bundle.arrivals.horizon(),
        replication,
        excluded: 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub time: f64,
    pub with_abandonment: f64,
    pub without_abandonment: f64,
    pub seed: u64,
    pub replication: u64,
    /// Events of both records within one time unit of the violation.
    pub dump: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub times_checked: usize,
    /// `max(Q0 − Q)` over the checked times.
    pub max_margin: f64,
}

/// Runs `config` with and without abandonment on common random numbers and
/// checks `Q(t) ≤ Q0(t)` at every event time of either record.
pub fn compare_abandonment(
    config: &SystemConfig,
    seed: u64,
    replication: u64,
) -> Result<ComparisonVerdict, ValidationError> {
    let with = SystemConfig {
        abandonment: true,
        ..config.clone()
    };
    let without = SystemConfig {
        abandonment: false,
        ..config.clone()
    };
    let a = simulate_config(&with, seed, replication)?;
    let b = simulate_config(&without, seed, replication)?;
    let (qa, qb) = (a.queue_length(), b.queue_length());
    let mut times: Vec<f64> = a.events.iter().chain(&b.events).map(|e| e.time).collect();
    times.push(0.0);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut max_margin = 0.0_f64;
    for &t in &times {
        let (x, y) = (qa.eval(t), qb.eval(t));
        if x > y {
            return Err(ValidationError::Violation(Box::new(Violation {
                time: t,
                with_abandonment: x,
                without_abandonment: y,
                seed,
                replication,
                dump: dump_window(&a, &b, t),
            })));
        }
        max_margin = max_margin.max(y - x);
    }
    Ok(ComparisonVerdict {
        times_checked: times.len(),
        max_margin,
    })
}

fn dump_window(a: &SimRecord, b: &SimRecord, t: f64) -> String {
    let mut out = String::new();
    for (label, rec) in [("abandon", a), ("benchmark", b)] {
        for e in rec.events.iter().filter(|e| (e.time - t).abs() <= 1.0) {
            out.push_str(&format!(
                "{label} {:.9} {} {}\n",
                e.time,
                e.kind.as_str(),
                e.customer
            ));
        }
    }
    out
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov–Smirnov statistic by sorted merge. Ties are
/// consumed together so the result is exact.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS needs nonempty samples");
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample KS statistic against a continuous `cdf`.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!sample.is_empty(), "KS needs a nonempty sample");
    let x = sorted(sample);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Median and quartiles by linear interpolation of order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let v = sorted(values);
        let q = |p: f64| {
            if v.is_empty() {
                return f64::NAN;
            }
            let r = p * (v.len() - 1) as f64;
            let (lo, hi) = (r.floor() as usize, r.ceil() as usize);
            v[lo] + (r - lo as f64) * (v[hi] - v[lo])
        };
        let (q1, median, q3) = (q(0.25), q(0.5), q(0.75));
        Summary {
            median,
            q1,
            q3,
            iqr: q3 - q1,
            count: v.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    /// Every consecutive step decreases.
    Strict,
    /// Last below first, not every step.
    Decreasing,
    NotDecreasing,
    /// Smallest and largest n coincide.
    Flat,
}

impl Trend {
    pub fn of(ns: &[u64], values: &[f64]) -> Self {
        let (Some(first), Some(last)) = (ns.first(), ns.last()) else {
            return Trend::Flat;
        };
        if ns.iter().all(|n| n == first) || first == last {
            return Trend::Flat;
        }
        if values.windows(2).all(|w| w[1] < w[0]) {
            Trend::Strict
        } else if values.last() < values.first() {
            Trend::Decreasing
        } else {
            Trend::NotDecreasing
        }
    }

    pub fn passes(self) -> bool {
        matches!(self, Trend::Strict | Trend::Decreasing)
    }
}

/// Optional pass thresholds, calibrated by a pilot run and stored with
/// the experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Largest-n median over smallest-n median, per statistic.
    #[serde(default)]
    pub max_gap_ratio: Option<f64>,
    /// KS at the last checkpoint and largest n.
    #[serde(default)]
    pub ks_max: Option<f64>,
    /// Require strict decrease rather than last-below-first.
    #[serde(default)]
    pub strict: bool,
    /// Statistics whose trend is checked; all when empty.
    #[serde(default)]
    pub statistics: Vec<GapName>,
}

fn default_checkpoint_fractions() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: SystemConfig,
    pub n_list: Vec<u64>,
    pub replications: u64,
    /// Limit samples per checkpoint; defaults to `replications`.
    #[serde(default)]
    pub limit_samples: Option<u64>,
    /// Checkpoints as fractions of `T`.
    #[serde(default = "default_checkpoint_fractions")]
    pub checkpoints: Vec<f64>,
    /// Limit solver step; defaults to `min(0.01, 1/(20μ))`.
    #[serde(default)]
    pub limit_step: Option<f64>,
    /// Virtual-wait grid points on `[0, T]`.
    #[serde(default = "default_wait_points")]
    pub wait_points: usize,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_wait_points() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsEntry {
    pub time: f64,
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NSummary {
    pub n: u64,
    pub coupling_gap: Summary,
    pub little_gap: Summary,
    pub neg_part_sup: Summary,
    pub truncated_wait_points: usize,
    pub ks: Vec<KsEntry>,
}

impl NSummary {
    pub fn summary(&self, name: GapName) -> &Summary {
        match name {
            GapName::CouplingGap => &self.coupling_gap,
            GapName::LittleGap => &self.little_gap,
            GapName::NegPartSup => &self.neg_part_sup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatVerdict {
    pub statistic: String,
    pub trend: Trend,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub seed: u64,
    pub replications: u64,
    pub limit_samples: u64,
    pub n_list: Vec<u64>,
    pub checkpoints: Vec<f64>,
    pub per_n: Vec<NSummary>,
    pub verdicts: Vec<StatVerdict>,
    pub thresholds: Thresholds,
    pub passed: bool,
    pub rows: Vec<GapStatistic>,
}

impl ConvergenceReport {
    /// One row per `(n, statistic, replication)`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,statistic,replication,value,excluded")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.n,
                r.name.as_str(),
                r.replication,
                r.value,
                r.excluded
            )?;
        }
        Ok(())
    }

    pub fn verdict(&self, statistic: &str) -> Option<&StatVerdict> {
        self.verdicts.iter().find(|v| v.statistic == statistic)
    }

    pub fn medians(&self, name: GapName) -> Vec<f64> {
        self.per_n.iter().map(|s| s.summary(name).median).collect()
    }

    /// KS statistics at checkpoint index `k`, one per n.
    pub fn ks_at(&self, k: usize) -> Vec<f64> {
        self.per_n.iter().map(|s| s.ks[k].statistic).collect()
    }
}

struct RepResult {
    gaps: [GapStatistic; 3],
    marginals: Vec<f64>,
}

fn run_replication(
    config: &SystemConfig,
    f: &ScalarFn,
    seed: u64,
    rep: u64,
    wait_grid: &[f64],
    checkpoints: &[f64],
) -> Result<RepResult, ValidationError> {
    let record = simulate_config(config, seed, rep)?;
    let bundle = ScaledBundle::new(&record, config, Some(wait_grid))?;
    Ok(RepResult {
        gaps: [
            coupling_gap(&bundle, f, rep),
            little_gap(&bundle, rep),
            neg_part_sup(&bundle, rep),
        ],
        marginals: checkpoints.iter().map(|&t| bundle.head_count.eval(t)).collect(),
    })
}

/// Replication offset separating limit-sample streams from simulator ones.
const LIMIT_REPLICATION_OFFSET: u64 = 1 << 40;

/// Limit-process sampler matched to a simulator config: case (ii) with
/// the renewal covariance of `H` for `α = 1`, case (i) otherwise.
pub struct LimitSampler {
    config: SystemConfig,
    grid: Grid,
    drift: Drift,
    arrival_var: f64,
    renewal: Option<(RenewalTable, GaussianSampler)>,
    seed: u64,
}

impl LimitSampler {
    /// `step` defaults to `min(0.01, 1/(20μ))`.
    pub fn new(config: &SystemConfig, step: Option<f64>, seed: u64) -> Result<Self, ValidationError> {
        config.validate()?;
        let mu = config.mu;
        let grid = Grid::new(config.horizon, step.unwrap_or_else(|| default_step(mu)))?;
        let drift = if config.abandonment {
            Drift::new(config.drift_fn())?
        } else {
            Drift::zero()
        };
        let renewal = if config.alpha >= 1.0 {
            let table = RenewalTable::compute(&config.base_service(), config.horizon, grid.step)?;
            let sampler = GaussianSampler::new(&table, grid)?;
            Some((table, sampler))
        } else {
            None
        };
        Ok(LimitSampler {
            config: config.clone(),
            grid,
            drift,
            arrival_var: mu * config.arrival.scv(),
            renewal,
            seed,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Sample `i`. Case (i) starts from `ξ⁺`, since a negative start is
    /// absorbed instantly by the idle servers.
    pub fn solve(&self, i: u64) -> Result<LimitSolution, ValidationError> {
        let (c, seed) = (&self.config, self.seed);
        let rep = LIMIT_REPLICATION_OFFSET + i;
        let xi = c.xi.draw(&mut RandomStream::new(seed, rep, Purpose::Initial));
        Ok(match &self.renewal {
            Some((table, sampler)) => {
                let noise = NoiseSample::renewal(self.arrival_var, sampler, seed, rep)?;
                solve_limit_case_ii(
                    xi,
                    &noise,
                    c.beta,
                    c.mu,
                    &self.drift,
                    table,
                    CaseTwoMethod::Forward,
                )?
            }
            None => {
                let noise = NoiseSample::brownian(self.arrival_var, self.grid, seed, rep)?;
                solve_limit_case_i(xi.max(0.0), &noise, c.beta, c.mu, &self.drift)?
            }
        })
    }
}

/// Draws `count` limit paths consistent with `config` and returns their
/// values at `checkpoints`, one vector per sample.
pub fn limit_marginals(
    config: &SystemConfig,
    count: u64,
    step: Option<f64>,
    checkpoints: &[f64],
    seed: u64,
) -> Result<Vec<Vec<f64>>, ValidationError> {
    let sampler = LimitSampler::new(config, step, seed)?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let sol = sampler.solve(i)?;
            Ok(checkpoints.iter().map(|&t| sol.x.eval(t)).collect())
        })
        .collect()
}

/// Runs the n-sweep. Replications run in parallel on the current rayon
/// pool; results are gathered in replication order, so the report does
/// not depend on the worker count.
pub fn convergence_sweep(spec: &SweepSpec, seed: u64) -> Result<ConvergenceReport, ValidationError> {
    if spec.n_list.is_empty() {
        return Err(ValidationError::Sweep("empty n_list".into()));
    }
    if spec.replications == 0 {
        return Err(ValidationError::Sweep("zero replications".into()));
    }
    if spec.checkpoints.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
        return Err(ValidationError::Sweep(
            "checkpoints must be fractions of T in [0, 1]".into(),
        ));
    }
    if spec.wait_points == 0 {
        return Err(ValidationError::Sweep("wait_points must be positive".into()));
    }
    for &n in &spec.n_list {
        spec.base.with_n(n).validate()?;
    }
    let horizon = spec.base.horizon;
    let checkpoints: Vec<f64> = spec.checkpoints.iter().map(|c| c * horizon).collect();
    let wait_grid = uniform_grid(horizon, spec.wait_points);
    let f = if spec.base.abandonment {
        spec.base.patience.limit_fn()
    } else {
        ScalarFn::zero()
    };
    let limit_samples = spec.limit_samples.unwrap_or(spec.replications);
    let limit = limit_marginals(&spec.base, limit_samples, spec.limit_step, &checkpoints, seed)?;

    let mut per_n = Vec::new();
    let mut rows = Vec::new();
    for &n in &spec.n_list {
        let config = spec.base.with_n(n);
        let reps: Vec<RepResult> = (0..spec.replications)
            .into_par_iter()
            .map(|r| run_replication(&config, &f, seed, r, &wait_grid, &checkpoints))
            .collect::<Result<_, _>>()?;
        let column = |k: usize| reps.iter().map(|r| r.gaps[k].value).collect::<Vec<_>>();
        let ks = checkpoints
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let sim: Vec<f64> = reps.iter().map(|r| r.marginals[k]).collect();
                let lim: Vec<f64> = limit.iter().map(|v| v[k]).collect();
                KsEntry {
                    time: t,
                    statistic: ks_two_sample(&sim, &lim),
                }
            })
            .collect();
        per_n.push(NSummary {
            n,
            coupling_gap: Summary::of(&column(0)),
            little_gap: Summary::of(&column(1)),
            neg_part_sup: Summary::of(&column(2)),
            truncated_wait_points: reps.iter().map(|r| r.gaps[1].excluded).sum(),
            ks,
        });
        rows.extend(reps.iter().flat_map(|r| r.gaps));
    }

    let mut verdicts: Vec<StatVerdict> = GapName::ALL
        .iter()
        .map(|&name| {
            let m: Vec<f64> = per_n.iter().map(|s| s.summary(name).median).collect();
            StatVerdict {
                statistic: name.as_str().to_string(),
                trend: Trend::of(&spec.n_list, &m),
                ratio: m[m.len() - 1] / m[0],
            }
        })
        .collect();
    if let Some(&t) = checkpoints.last() {
        let ks: Vec<f64> = per_n.iter().map(|s| s.ks.last().unwrap().statistic).collect();
        verdicts.push(StatVerdict {
            statistic: format!("ks_t{t}"),
            trend: Trend::of(&spec.n_list, &ks),
            ratio: ks[ks.len() - 1] / ks[0],
        });
    }
    let passed = check(&spec.thresholds, &verdicts, &per_n);
    Ok(ConvergenceReport {
        seed,
        replications: spec.replications,
        limit_samples,
        n_list: spec.n_list.clone(),
        checkpoints,
        per_n,
        verdicts,
        thresholds: spec.thresholds.clone(),
        passed,
        rows,
    })
}

fn check(th: &Thresholds, verdicts: &[StatVerdict], per_n: &[NSummary]) -> bool {
    let selected = |v: &StatVerdict| {
        th.statistics.is_empty() || th.statistics.iter().any(|s| s.as_str() == v.statistic)
    };
    let trends_ok = verdicts.iter().filter(|v| selected(v)).all(|v| {
        if th.strict {
            v.trend == Trend::Strict
        } else {
            v.trend.passes()
        }
    });
    let ratio_ok = th.max_gap_ratio.is_none_or(|r| {
        verdicts
            .iter()
            .filter(|v| selected(v) && !v.statistic.starts_with("ks"))
            .all(|v| v.ratio <= r)
    });
    let ks_ok = th.ks_max.is_none_or(|k| {
        per_n
            .last()
            .and_then(|s| s.ks.last())
            .is_some_and(|e| e.statistic < k)
    });
    trends_ok && ratio_ok && ks_ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::{Distribution, PatienceSpec};
    use crate::sim::{simulate, InitialCount, QueueModel};
    use crate::inputs::StreamSet;

    #[test]
    fn ks_two_sample_edges() {
        let a = [0.3, 1.0, 2.0, 2.0, 5.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[2.0, 3.0, 4.0]), 1.0);
        let b = [0.1, 2.0, 2.5];
        assert_eq!(ks_two_sample(&a, &b), ks_two_sample(&b, &a));
        // monotone transform invariance
        let ea: Vec<f64> = a.iter().map(|x: &f64| x.exp()).collect();
        let eb: Vec<f64> = b.iter().map(|x: &f64| x.exp()).collect();
        assert_eq!(ks_two_sample(&a, &b), ks_two_sample(&ea, &eb));
    }

    #[test]
    fn ks_two_sample_brute_force() {
        let a = [0.5, 0.1, 0.9, 0.4, 0.4];
        let b = [0.4, 0.2, 0.7];
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        let brute = a
            .iter()
            .chain(&b)
            .map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs())
            .fold(0.0, f64::max);
        assert!((ks_two_sample(&a, &b) - brute).abs() < 1e-15);
    }

    #[test]
    fn ks_null_quantile() {
        use rand_distr::{Distribution as _, StandardNormal};
        let mut hits = 0;
        for trial in 0..100 {
            let mut s = RandomStream::new(11, trial, Purpose::Gaussian);
            let a: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut s)).collect();
            let b: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut s)).collect();
            if ks_two_sample(&a, &b) < 0.061 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}");
    }

    #[test]
    fn ks_one_sample_uniform_grid() {
        let x: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        assert!((ks_one_sample(&x, |v| v) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn summary_quartiles() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((s.q1, s.median, s.q3, s.iqr), (2.0, 3.0, 4.0, 2.0));
    }

    #[test]
    fn trend_classes() {
        assert_eq!(Trend::of(&[100, 100], &[1.0, 0.5]), Trend::Flat);
        assert_eq!(Trend::of(&[1, 2, 3], &[3.0, 2.0, 1.0]), Trend::Strict);
        assert_eq!(Trend::of(&[1, 2, 3], &[3.0, 4.0, 1.0]), Trend::Decreasing);
        assert_eq!(Trend::of(&[1, 2], &[1.0, 1.0]), Trend::NotDecreasing);
    }

    #[test]
    fn coupling_gap_vanishes_without_abandonment() {
        let config = SystemConfig {
            abandonment: false,
            patience: PatienceSpec::direct_f(ScalarFn::zero()).unwrap(),
            ..SystemConfig::markovian(50, 1.0, 1.0, 0.5, 1.0, 5.0)
        };
        let rec = simulate_config(&config, 3, 0).unwrap();
        let b = ScaledBundle::new(&rec, &config, None).unwrap();
        assert_eq!(coupling_gap(&b, &ScalarFn::zero(), 0).value, 0.0);
    }

    #[test]
    fn single_abandonment_gap_is_one_over_root_n() {
        // one server busy until 3; one queued arrival at 1 with patience 0.5
        let n = 16;
        let config = SystemConfig {
            patience: PatienceSpec::direct_f(ScalarFn::zero()).unwrap(),
            ..SystemConfig::markovian(n, 0.0, 1.0, 0.0, 1.0, 10.0)
        };
        let model = QueueModel {
            patience: Some(
                PatienceSpec::no_scaling(Distribution::deterministic(0.5).unwrap())
                    .law_for(1)
                    .unwrap(),
            ),
            initial: InitialCount::Count(0),
            ..QueueModel::plain(
                1,
                Distribution::deterministic(1.0).unwrap(),
                Distribution::deterministic(2.0).unwrap(),
                2.9,
            )
        };
        let rec = simulate(&model, &mut StreamSet::new(0, 0)).unwrap();
        assert_eq!(rec.abandonment_count(), 1);
        let b = ScaledBundle::new(&rec, &config, None).unwrap();
        let gap = coupling_gap(&b, &ScalarFn::zero(), 0);
        assert!((gap.value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn little_gap_zero_for_underloaded_deterministic() {
        let config = SystemConfig::markovian(1, 0.0, 1.0, 0.0, 1.0, 20.0);
        let model = QueueModel {
            initial: InitialCount::Count(0),
            ..QueueModel::plain(
                1,
                Distribution::deterministic(1.0).unwrap(),
                Distribution::deterministic(0.6).unwrap(),
                20.0,
            )
        };
        let rec = simulate(&model, &mut StreamSet::new(0, 0)).unwrap();
        // grid inside the idle periods
        let grid: Vec<f64> = (0..19).map(|k| k as f64 + 0.8).collect();
        let b = ScaledBundle::new(&rec, &config, Some(&grid)).unwrap();
        let g = little_gap(&b, 0);
        assert_eq!((g.value, g.excluded), (0.0, 0));
    }

    #[test]
    fn comparison_holds_with_tiny_patience() {
        let mut config = SystemConfig::markovian(9, 1.0, 1.0, 1.0, 1.0, 20.0);
        config.patience = PatienceSpec::no_scaling(Distribution::deterministic(1e-6).unwrap());
        for seed in 0..5 {
            let v = compare_abandonment(&config, seed, 0).unwrap();
            assert!(v.times_checked > 10);
        }
        config.abandonment = false;
        let v = compare_abandonment(&config, 1, 0).unwrap();
        assert!(v.times_checked > 10);
    }

    fn tiny_sweep(n_list: Vec<u64>) -> SweepSpec {
        SweepSpec {
            base: SystemConfig::markovian(100, 1.0, 1.0, -1.0, 1.0, 2.0),
            n_list,
            replications: 8,
            limit_samples: Some(8),
            checkpoints: default_checkpoint_fractions(),
            limit_step: Some(0.01),
            wait_points: 20,
            thresholds: Thresholds::default(),
        }
    }

    #[test]
    fn degenerate_sweep_is_flat() {
        let report = convergence_sweep(&tiny_sweep(vec![100, 100]), 1).unwrap();
        assert!(report.verdicts.iter().all(|v| v.trend == Trend::Flat));
        assert_eq!(report.rows.len(), 2 * 8 * 3);
        assert_eq!(report.per_n[0], report.per_n[1]);
        assert!(report.rows.iter().all(|r| r.value >= 0.0 && r.value.is_finite()));
    }

    #[test]
    fn sweep_is_independent_of_pool_size() {
        let spec = tiny_sweep(vec![16, 64]);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| convergence_sweep(&spec, 4).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn sweep_rejects_bad_pairing() {
        let mut spec = tiny_sweep(vec![16]);
        spec.base.alpha = 0.5;
        spec.base.service = Some(Distribution::deterministic(1.0).unwrap());
        assert!(convergence_sweep(&spec, 0).is_err());
    }
}
