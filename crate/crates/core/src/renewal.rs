//! Renewal function `M = H + H∗dM` and equilibrium distribution
//! `H_e(x) = μ∫₀ˣ(1 − H(u))du` of a service law.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::inputs::{bisect, Distribution, RandomStream};
use crate::path::CadlagPath;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenewalError {
    #[error("step {step} too large; need step <= {max}")]
    StepTooLarge { step: f64, max: f64 },
    #[error("horizon must be positive (got {0})")]
    BadHorizon(f64),
}

/// `min(10⁻², 1/(20μ))`
pub fn default_step(mu: f64) -> f64 {
    (1e-2_f64).min(1.0 / (20.0 * mu))
}

/// The renewal function of a service law on the uniform grid `t_k = kΔ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalTable {
    step: f64,
    values: Vec<f64>,
    mu: f64,
    service: Distribution,
    lattice: bool,
    /// `true` when the requested horizon was not a multiple of the step and
    /// the grid was extended to the next multiple.
    adjusted: bool,
}

impl RenewalTable {
    /// Solves the renewal equation on `[0, horizon]`.
    ///
    /// Deterministic laws use the exact lattice count `⌊t/d⌋`. Every other
    /// law uses a Riemann–Stieltjes product rule with `dM` spread uniformly
    /// over each cell: `M_k = H_k + Σ_j Ā_{k−j}(M_j − M_{j−1})`, where
    /// `Ā_i` is the mean of `H` over `[iΔ, (i+1)Δ]`. The `j = k` term
    /// contains `M_k`, so each step solves a scalar linear equation.
    pub fn compute(service: &Distribution, horizon: f64, step: f64) -> Result<Self, RenewalError> {
        if !(horizon > 0.0) {
            return Err(RenewalError::BadHorizon(horizon));
        }
        let mu = 1.0 / service.mean();
        let max = default_step(mu);
        if !(step > 0.0) || step > max * (1.0 + 1e-12) {
            return Err(RenewalError::StepTooLarge { step, max });
        }
        let ratio = horizon / step;
        let m = (ratio - 1e-9).ceil().max(1.0) as usize;
        let adjusted = (m as f64 - ratio).abs() > 1e-9 * ratio.max(1.0);

        let (values, lattice) = match service.deterministic_value() {
            Some(d) => (
                (0..=m)
                    .map(|k| ((k as f64 * step) / d + 1e-9).floor())
                    .collect(),
                true,
            ),
            None => (stieltjes_scheme(service, step, m), false),
        };
        Ok(RenewalTable {
            step,
            values,
            mu,
            service: service.clone(),
            lattice,
            adjusted,
        })
    }

    /// Same as [`compute`](Self::compute) with the default step.
    pub fn with_default_step(service: &Distribution, horizon: f64) -> Result<Self, RenewalError> {
        Self::compute(service, horizon, default_step(1.0 / service.mean()))
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn service(&self) -> &Distribution {
        &self.service
    }

    pub fn is_lattice(&self) -> bool {
        self.lattice
    }

    pub fn was_adjusted(&self) -> bool {
        self.adjusted
    }

    /// `M(t_k)` for `k = 0..=m`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|k| k as f64 * self.step).collect()
    }

    /// Increments `M(t_j) − M(t_{j−1})` for `j = 1..=m` (index `j − 1`).
    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `M(t)`; right-continuous steps for lattice laws, linear
    /// interpolation otherwise. Clamped to the table horizon.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.values[0];
        }
        let x = t / self.step;
        let k = (x + 1e-9).floor() as usize;
        if k >= self.values.len() - 1 {
            return *self.values.last().unwrap();
        }
        if self.lattice {
            return self.values[k];
        }
        let w = (x - k as f64).max(0.0);
        self.values[k] + w * (self.values[k + 1] - self.values[k])
    }

    pub fn to_path(&self) -> CadlagPath {
        if self.lattice {
            let mut times = vec![0.0];
            let mut values = vec![self.values[0]];
            for (k, w) in self.values.windows(2).enumerate() {
                if w[1] != w[0] {
                    times.push((k + 1) as f64 * self.step);
                    values.push(w[1]);
                }
            }
            CadlagPath::step(times, values, self.horizon()).unwrap()
        } else {
            CadlagPath::linear(self.times(), self.values.clone()).unwrap()
        }
    }

    /// Allowed `|M(T)/T − μ|` at horizon `T`: the elementary renewal
    /// theorem gives `M(T) − μT → (c² − 1)/2`, widened by one half.
    pub fn rate_tolerance(&self) -> f64 {
        ((self.service.scv() - 1.0).abs() / 2.0 + 0.5) / self.horizon()
    }

    /// Sup-norm defect of `M − H − ∫H(· − s)dM(s)` on the grid, with the
    /// convolution re-evaluated by Simpson's rule inside every cell
    /// (`dM` uniform per cell) rather than by the solver's trapezoid. For
    /// lattice laws the atoms are summed exactly.
    pub fn residual(&self) -> f64 {
        let h = &self.service;
        let mut worst = 0.0_f64;
        if self.lattice {
            let d = h.deterministic_value().unwrap();
            for (k, &mk) in self.values.iter().enumerate() {
                let t = k as f64 * self.step;
                let atoms = mk as usize;
                let conv: f64 = (1..=atoms).map(|i| h.cdf(t - i as f64 * d + 1e-9)).sum();
                worst = worst.max((mk - h.cdf(t + 1e-9) - conv).abs());
            }
            return worst;
        }
        let inc = self.increments();
        for k in 0..self.values.len() {
            let t = k as f64 * self.step;
            let mut conv = 0.0;
            for (j, dm) in inc.iter().enumerate().take(k) {
                let s0 = j as f64 * self.step;
                let s1 = s0 + self.step;
                let mid = 0.5 * (s0 + s1);
                let avg = (h.cdf(t - s0) + 4.0 * h.cdf(t - mid) + h.cdf(t - s1)) / 6.0;
                conv += avg * dm;
            }
            worst = worst.max((self.values[k] - h.cdf(t) - conv).abs());
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,M")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", k as f64 * self.step, v)?;
        }
        Ok(())
    }
}

fn stieltjes_scheme(service: &Distribution, step: f64, m: usize) -> Vec<f64> {
    let hk: Vec<f64> = (0..=m).map(|k| service.cdf(k as f64 * step)).collect();
    // avg[i] = cell average of H over [iΔ, (i+1)Δ], Simpson
    let avg: Vec<f64> = (0..m)
        .map(|i| {
            let a = i as f64 * step;
            (hk[i] + 4.0 * service.cdf(a + 0.5 * step) + hk[i + 1]) / 6.0
        })
        .collect();
    let a0 = avg[0];
    let mut values = vec![0.0; m + 1];
    let mut inc = vec![0.0; m + 1];
    values[0] = hk[0];
    for k in 1..=m {
        let mut s = 0.0;
        for j in 1..k {
            s += avg[k - j] * inc[j];
        }
        values[k] = (hk[k] + s - a0 * values[k - 1]) / (1.0 - a0);
        inc[k] = values[k] - values[k - 1];
    }
    values
}

#[derive(Debug, Clone, PartialEq)]
enum EquilibriumForm {
    Exponential { rate: f64 },
    /// deterministic service `d`: uniform on `[0, d]`
    UniformOn { d: f64 },
    /// Erlang(k, r): uniform mixture of Erlang(j, r), j = 1..=k
    ErlangMix { stages: u32, rate: f64 },
    /// hyperexponential: exponential mixture with weights `μ p_i / r_i`
    ExpMix { weights: Vec<f64>, rates: Vec<f64> },
    UniformService { lo: f64, hi: f64 },
    Table { grid: Vec<f64>, cdf: Vec<f64> },
}

/// The stationary-excess law `H_e` with an inverse-transform sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumDistribution {
    service: Distribution,
    mu: f64,
    form: EquilibriumForm,
}

impl EquilibriumDistribution {
    pub fn new(service: &Distribution) -> Self {
        let mu = 1.0 / service.mean();
        let form = if let Some(rate) = service.exponential_rate() {
            EquilibriumForm::Exponential { rate }
        } else if let Some(d) = service.deterministic_value() {
            EquilibriumForm::UniformOn { d }
        } else if let Some((stages, rate)) = service.erlang_params() {
            EquilibriumForm::ErlangMix { stages, rate }
        } else if let Some(parts) = service.hyperexponential_parts() {
            EquilibriumForm::ExpMix {
                weights: parts.iter().map(|(p, r)| mu * p / r).collect(),
                rates: parts.iter().map(|(_, r)| *r).collect(),
            }
        } else if let Some((lo, hi)) = service.uniform_bounds() {
            EquilibriumForm::UniformService { lo, hi }
        } else {
            tabulate(service, mu)
        };
        EquilibriumDistribution {
            service: service.clone(),
            mu,
            form,
        }
    }

    pub fn service(&self) -> &Distribution {
        &self.service
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.form {
            EquilibriumForm::Exponential { rate } => -(-rate * x).exp_m1(),
            EquilibriumForm::UniformOn { d } => (x / d).min(1.0),
            EquilibriumForm::ErlangMix { stages, rate } => {
                let k = *stages;
                (1..=k)
                    .map(|j| Distribution::erlang(j, *rate).unwrap().cdf(x))
                    .sum::<f64>()
                    / k as f64
            }
            EquilibriumForm::ExpMix { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| -w * (-r * x).exp_m1())
                .sum(),
            EquilibriumForm::UniformService { lo, hi } => {
                let y = if x <= *lo {
                    x
                } else if x < *hi {
                    lo + (x - lo) - (x - lo).powi(2) / (2.0 * (hi - lo))
                } else {
                    0.5 * (lo + hi)
                };
                (self.mu * y).min(1.0)
            }
            EquilibriumForm::Table { grid, cdf } => {
                let p = grid.partition_point(|&g| g <= x);
                if p >= grid.len() {
                    return 1.0;
                }
                let k = p - 1;
                let w = (x - grid[k]) / (grid[k + 1] - grid[k]);
                cdf[k] + w * (cdf[k + 1] - cdf[k])
            }
        }
    }

    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        match &self.form {
            EquilibriumForm::Exponential { rate } => -stream.open01().ln() / rate,
            EquilibriumForm::UniformOn { d } => d * stream.open01(),
            EquilibriumForm::ErlangMix { stages, rate } => {
                let j = 1 + ((stream.open01() * *stages as f64) as u32).min(stages - 1);
                let mut acc = 0.0;
                for _ in 0..j {
                    acc -= stream.open01().ln();
                }
                acc / rate
            }
            EquilibriumForm::ExpMix { weights, rates } => {
                let u = stream.open01();
                let mut cum = 0.0;
                let mut pick = rates.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    cum += w;
                    if u <= cum {
                        pick = i;
                        break;
                    }
                }
                -stream.open01().ln() / rates[pick]
            }
            EquilibriumForm::UniformService { hi, .. } => {
                let u = stream.open01();
                bisect(|x| self.cdf(x) >= u, 0.0, *hi)
            }
            EquilibriumForm::Table { grid, cdf } => {
                let u = stream.open01();
                let p = cdf.partition_point(|&c| c < u);
                if p == 0 {
                    return 0.0;
                }
                if p >= cdf.len() {
                    return *grid.last().unwrap();
                }
                let (c0, c1) = (cdf[p - 1], cdf[p]);
                let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
                grid[p - 1] + w * (grid[p] - grid[p - 1])
            }
        }
    }
}

/// Composite Simpson tabulation of `μ∫₀ˣ(1 − H)` out to where the
/// remaining survival mass is negligible.
fn tabulate(service: &Distribution, mu: f64) -> EquilibriumForm {
    let end = service.quantile(1.0 - 1e-12).max(50.0 / mu);
    let cells = 200_000;
    let h = end / cells as f64;
    let mut grid = Vec::with_capacity(cells + 1);
    let mut cdf = Vec::with_capacity(cells + 1);
    grid.push(0.0);
    cdf.push(0.0);
    let mut acc = 0.0;
    for i in 0..cells {
        let a = i as f64 * h;
        let s = service.survival(a) + 4.0 * service.survival(a + 0.5 * h) + service.survival(a + h);
        acc += mu * s * h / 6.0;
        grid.push(a + h);
        cdf.push(acc.min(1.0));
    }
    EquilibriumForm::Table { grid, cdf }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::Purpose;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, cells: usize) -> f64 {
        let h = (b - a) / cells as f64;
        (0..cells)
            .map(|i| {
                let x = a + i as f64 * h;
                (f(x) + 4.0 * f(x + 0.5 * h) + f(x + h)) * h / 6.0
            })
            .sum()
    }

    #[test]
    fn exponential_renewal_is_linear() {
        for mu in [0.5, 1.0, 2.0] {
            let h = Distribution::exponential(mu).unwrap();
            let t = RenewalTable::with_default_step(&h, 10.0 / mu).unwrap();
            let worst = t
                .times()
                .iter()
                .zip(t.values())
                .map(|(s, m)| (m - mu * s).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-4, "mu={mu} worst={worst}");
        }
    }

    #[test]
    fn deterministic_renewal_counts_lattice_points() {
        let mu = 2.0;
        let h = Distribution::deterministic(1.0 / mu).unwrap();
        let t = RenewalTable::with_default_step(&h, 5.0).unwrap();
        assert!(t.is_lattice());
        assert_eq!(t.eval(2.5 / mu), 2.0);
        assert_eq!(t.eval(2.0 / mu), 2.0);
        assert_eq!(t.eval(1.999 / mu), 1.0);
        assert_eq!(t.residual(), 0.0);
    }

    #[test]
    fn erlang_two_matches_closed_form() {
        let mu = 1.5;
        let h = Distribution::erlang(2, 2.0 * mu).unwrap();
        let t = RenewalTable::with_default_step(&h, 10.0).unwrap();
        for (s, m) in t.times().iter().zip(t.values()) {
            let exact = mu * s - 0.25 + 0.25 * (-4.0 * mu * s).exp();
            assert!((m - exact).abs() < 1e-3, "t={s}");
        }
    }

    #[test]
    fn residual_within_five_steps() {
        for h in [
            Distribution::erlang(3, 3.0).unwrap(),
            Distribution::uniform(0.0, 2.0).unwrap(),
            Distribution::lognormal(-0.2, 0.6).unwrap(),
            Distribution::hyperexponential(vec![0.4, 0.6], vec![0.5, 3.0]).unwrap(),
        ] {
            let t = RenewalTable::with_default_step(&h, 8.0).unwrap();
            assert!(t.residual() <= 5.0 * t.step(), "{}: {}", h.family(), t.residual());
        }
    }

    #[test]
    fn monotone_and_dominates_h() {
        let h = Distribution::erlang(2, 2.0).unwrap();
        let t = RenewalTable::with_default_step(&h, 20.0).unwrap();
        assert_eq!(t.values()[0], h.cdf(0.0));
        for (k, w) in t.values().windows(2).enumerate() {
            assert!(w[1] >= w[0]);
            assert!(w[1] >= h.cdf((k + 1) as f64 * t.step()));
        }
        let rate = t.values().last().unwrap() / t.horizon();
        assert!((rate - t.mu()).abs() <= t.rate_tolerance());
    }

    #[test]
    fn halving_the_step_converges() {
        let h = Distribution::erlang(2, 2.0).unwrap();
        let horizon = 4.0;
        let tables: Vec<RenewalTable> = [0.01, 0.005, 0.0025]
            .iter()
            .map(|&d| RenewalTable::compute(&h, horizon, d).unwrap())
            .collect();
        let change = |a: &RenewalTable, b: &RenewalTable| {
            a.times()
                .iter()
                .map(|&s| (a.eval(s) - b.eval(s)).abs())
                .fold(0.0, f64::max)
        };
        let d1 = change(&tables[0], &tables[1]);
        let d2 = change(&tables[1], &tables[2]);
        let ratio = d2 / d1;
        assert!((0.2..=0.8).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn uneven_horizon_is_adjusted() {
        let h = Distribution::exponential(1.0).unwrap();
        let t = RenewalTable::compute(&h, 1.005, 0.01).unwrap();
        assert!(t.was_adjusted());
        assert!((t.horizon() - 1.01).abs() < 1e-12);
        assert!(!RenewalTable::compute(&h, 1.0, 0.01).unwrap().was_adjusted());
    }

    #[test]
    fn rejects_large_step() {
        let h = Distribution::exponential(10.0).unwrap();
        assert!(matches!(
            RenewalTable::compute(&h, 1.0, 0.01),
            Err(RenewalError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn equilibrium_special_cases() {
        let e = EquilibriumDistribution::new(&Distribution::exponential(2.0).unwrap());
        for &x in &[0.1, 0.7, 3.0] {
            assert!((e.cdf(x) - (1.0 - (-2.0 * x).exp())).abs() < 1e-15);
        }
        let d = EquilibriumDistribution::new(&Distribution::deterministic(0.5).unwrap());
        assert!((d.cdf(0.2) - 0.4).abs() < 1e-15);
        assert_eq!(d.cdf(0.6), 1.0);
    }

    #[test]
    fn erlang_equilibrium_matches_quadrature() {
        let mu = 1.3;
        let h = Distribution::erlang(2, 2.0 * mu).unwrap();
        let e = EquilibriumDistribution::new(&h);
        let x = 1.0 / (2.0 * mu);
        let q = mu * simpson(|u| 1.0 - h.cdf(u), 0.0, x, 2000);
        assert!((e.cdf(x) - q).abs() < 1e-8);
    }

    #[test]
    fn equilibrium_is_a_distribution() {
        for h in [
            Distribution::erlang(3, 3.0).unwrap(),
            Distribution::uniform(0.5, 1.5).unwrap(),
            Distribution::lognormal(0.0, 0.5).unwrap(),
            Distribution::hyperexponential(vec![0.5, 0.5], vec![1.0, 3.0]).unwrap(),
        ] {
            let e = EquilibriumDistribution::new(&h);
            let mu = 1.0 / h.mean();
            assert_eq!(e.cdf(0.0), 0.0);
            let mut prev = 0.0;
            for i in 1..=500 {
                let v = e.cdf(i as f64 * 0.02 / mu);
                assert!(v >= prev - 1e-15);
                prev = v;
            }
            assert!(e.cdf(50.0 / mu) > 1.0 - 1e-3, "{}", h.family());
            let q = mu * simpson(|u| h.survival(u), 0.0, 0.8 / mu, 4000);
            assert!((e.cdf(0.8 / mu) - q).abs() < 1e-6, "{}", h.family());
        }
    }

    #[test]
    fn equilibrium_sampler_matches_cdf() {
        let mut s = RandomStream::new(5, 0, Purpose::Initial);
        for h in [
            Distribution::erlang(2, 2.0).unwrap(),
            Distribution::uniform(0.5, 1.5).unwrap(),
            Distribution::lognormal(0.0, 0.5).unwrap(),
            Distribution::hyperexponential(vec![0.5, 0.5], vec![1.0, 3.0]).unwrap(),
        ] {
            let e = EquilibriumDistribution::new(&h);
            let n = 20_000;
            let mut xs: Vec<f64> = (0..n).map(|_| e.sample(&mut s)).collect();
            xs.sort_by(f64::total_cmp);
            let ks = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let c = e.cdf(x);
                    (c - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - c).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks < 0.015, "{} ks={ks}", h.family());
        }
    }
}
