//! Right-continuous paths with left limits, piecewise affine between
//! breakpoints.
//!
//! A [`CadlagPath`] stores breakpoints `0 = t_0 < t_1 < ... < t_m ≤ T`,
//! the right value `x(t_k)` and a slope on each segment `[t_k, t_{k+1})`.
//! Step paths have zero slopes; continuous piecewise-linear paths have
//! slopes that join the breakpoint values. Sums of the two (a counting
//! process minus a linear drift, say) are represented exactly.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PathError {
    #[error("breakpoints must start at 0 and be strictly increasing")]
    NotIncreasing,
    #[error("length mismatch: {0} breakpoints, {1} values")]
    LengthMismatch(usize, usize),
    #[error("horizon {horizon} precedes last breakpoint {last}")]
    BadHorizon { horizon: f64, last: f64 },
    #[error("horizons differ: {0} vs {1}")]
    HorizonMismatch(f64, f64),
    #[error("interval [{a}, {b}] is not inside [0, {horizon}]")]
    OutOfRange { a: f64, b: f64, horizon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Step,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadlagPath {
    times: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    horizon: f64,
    interpolation: Interpolation,
}

impl CadlagPath {
    /// Step path: `values[k]` on `[times[k], times[k+1])`.
    pub fn step(times: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self, PathError> {
        let slopes = vec![0.0; times.len()];
        Self::build(times, values, slopes, horizon, Interpolation::Step)
    }

    /// Continuous path interpolating `(times[k], values[k])` linearly; the
    /// horizon is the last breakpoint.
    pub fn linear(times: Vec<f64>, values: Vec<f64>) -> Result<Self, PathError> {
        if times.len() != values.len() {
            return Err(PathError::LengthMismatch(times.len(), values.len()));
        }
        let mut slopes: Vec<f64> = times
            .windows(2)
            .zip(values.windows(2))
            .map(|(t, v)| (v[1] - v[0]) / (t[1] - t[0]))
            .collect();
        slopes.push(0.0);
        let horizon = times.last().copied().unwrap_or(0.0);
        Self::build(times, values, slopes, horizon, Interpolation::Linear)
    }

    /// Path with explicit per-segment slopes (jumps allowed at breakpoints).
    pub fn affine(
        times: Vec<f64>,
        values: Vec<f64>,
        slopes: Vec<f64>,
        horizon: f64,
    ) -> Result<Self, PathError> {
        if slopes.len() != times.len() {
            return Err(PathError::LengthMismatch(times.len(), slopes.len()));
        }
        let interp = if slopes.iter().all(|&s| s == 0.0) {
            Interpolation::Step
        } else {
            Interpolation::Linear
        };
        Self::build(times, values, slopes, horizon, interp)
    }

    pub fn constant(c: f64, horizon: f64) -> Self {
        CadlagPath {
            times: vec![0.0],
            values: vec![c],
            slopes: vec![0.0],
            horizon,
            interpolation: Interpolation::Step,
        }
    }

    /// Counting process of the (sorted) epochs `jumps` in `(0, horizon]`;
    /// epochs at exactly 0 count at time 0.
    pub fn counting(jumps: &[f64], horizon: f64) -> Self {
        let mut times = vec![0.0];
        let mut values = vec![0.0];
        for &t in jumps {
            if t > horizon {
                break;
            }
            if t <= *times.last().unwrap() {
                *values.last_mut().unwrap() += 1.0;
            } else {
                let next = values.last().unwrap() + 1.0;
                times.push(t);
                values.push(next);
            }
        }
        let slopes = vec![0.0; times.len()];
        CadlagPath {
            times,
            values,
            slopes,
            horizon,
            interpolation: Interpolation::Step,
        }
    }

    fn build(
        times: Vec<f64>,
        values: Vec<f64>,
        slopes: Vec<f64>,
        horizon: f64,
        interpolation: Interpolation,
    ) -> Result<Self, PathError> {
        if times.len() != values.len() {
            return Err(PathError::LengthMismatch(times.len(), values.len()));
        }
        if times.first() != Some(&0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PathError::NotIncreasing);
        }
        let last = *times.last().unwrap();
        if !(horizon >= last) {
            return Err(PathError::BadHorizon { horizon, last });
        }
        Ok(CadlagPath {
            times,
            values,
            slopes,
            horizon,
            interpolation,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn is_step(&self) -> bool {
        self.slopes.iter().all(|&s| s == 0.0)
    }

    fn segment(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    fn segment_left(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s < t).saturating_sub(1)
    }

    /// `x(t)`, right-continuous.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.segment(t);
        self.values[k] + self.slopes[k] * (t - self.times[k])
    }

    /// `x(t−)`; equals `x(0)` at `t = 0`.
    pub fn left_limit(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.values[0];
        }
        let k = self.segment_left(t);
        self.values[k] + self.slopes[k] * (t - self.times[k])
    }

    /// Values at the given times.
    pub fn sample(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&t| self.eval(t)).collect()
    }

    fn check_interval(&self, a: f64, b: f64) -> Result<(), PathError> {
        if !(0.0 <= a && a <= b && b <= self.horizon * (1.0 + 1e-12)) {
            return Err(PathError::OutOfRange {
                a,
                b,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// Extremes of `φ(x(s))` for `s ∈ [a, b]` with `φ` convex or linear,
    /// taken over segment endpoints and left limits.
    fn fold_extremes(&self, a: f64, b: f64, mut visit: impl FnMut(f64)) {
        let k0 = self.segment(a);
        visit(self.eval(a));
        for k in k0..self.times.len() {
            let start = self.times[k].max(a);
            if start > b {
                break;
            }
            let end = self.times.get(k + 1).copied().unwrap_or(self.horizon).min(b);
            visit(self.values[k] + self.slopes[k] * (start - self.times[k]));
            visit(self.values[k] + self.slopes[k] * (end - self.times[k]));
        }
        visit(self.eval(b));
    }

    /// `sup_{a ≤ s ≤ b} |x(s)|`.
    pub fn sup_norm(&self, a: f64, b: f64) -> Result<f64, PathError> {
        self.check_interval(a, b)?;
        let mut m = 0.0_f64;
        self.fold_extremes(a, b, |v| m = m.max(v.abs()));
        Ok(m)
    }

    /// `sup_{0 ≤ s ≤ T} |x(s)|`.
    pub fn sup_abs(&self) -> f64 {
        self.sup_norm(0.0, self.horizon).unwrap()
    }

    /// `sup_{a ≤ s ≤ b} x(s)`.
    pub fn sup(&self, a: f64, b: f64) -> Result<f64, PathError> {
        self.check_interval(a, b)?;
        let mut m = f64::NEG_INFINITY;
        self.fold_extremes(a, b, |v| m = m.max(v));
        Ok(m)
    }

    /// `inf_{a ≤ s ≤ b} x(s)`.
    pub fn inf(&self, a: f64, b: f64) -> Result<f64, PathError> {
        self.check_interval(a, b)?;
        let mut m = f64::INFINITY;
        self.fold_extremes(a, b, |v| m = m.min(v));
        Ok(m)
    }

    /// `sup_{0 ≤ s ≤ T} (x(s))⁻`.
    pub fn neg_part_sup(&self) -> f64 {
        (-self.inf(0.0, self.horizon).unwrap()).max(0.0)
    }

    /// `∫_a^b x(s) ds`, exact.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64, PathError> {
        self.check_interval(a, b)?;
        let mut acc = 0.0;
        for k in self.segment(a)..self.times.len() {
            let start = self.times[k].max(a);
            if start >= b {
                break;
            }
            let end = self.times.get(k + 1).copied().unwrap_or(self.horizon).min(b);
            let v0 = self.values[k] + self.slopes[k] * (start - self.times[k]);
            let v1 = self.values[k] + self.slopes[k] * (end - self.times[k]);
            acc += 0.5 * (v0 + v1) * (end - start);
        }
        Ok(acc)
    }

    /// `t ↦ ∫₀ᵗ x(s) ds`. Exact for step paths (result is continuous
    /// piecewise linear); for sloped paths the quadratic pieces are
    /// replaced by their chords through the breakpoints.
    pub fn running_integral(&self) -> CadlagPath {
        let mut times = self.times.clone();
        if self.horizon > *times.last().unwrap() {
            times.push(self.horizon);
        }
        let mut values = Vec::with_capacity(times.len());
        let mut acc = 0.0;
        values.push(0.0);
        for k in 0..times.len() - 1 {
            let h = times[k + 1] - times[k];
            acc += (self.values[k] + 0.5 * self.slopes[k] * h) * h;
            values.push(acc);
        }
        CadlagPath::linear(times, values).unwrap()
    }

    /// `s ↦ φ(x(s))`. Exact for step paths; sloped paths are mapped at
    /// their breakpoints (and left limits) and re-interpolated linearly.
    pub fn compose(&self, phi: impl Fn(f64) -> f64) -> CadlagPath {
        if self.is_step() {
            return CadlagPath {
                times: self.times.clone(),
                values: self.values.iter().map(|&v| phi(v)).collect(),
                slopes: vec![0.0; self.times.len()],
                horizon: self.horizon,
                interpolation: Interpolation::Step,
            };
        }
        let mut times = self.times.clone();
        if self.horizon > *times.last().unwrap() {
            times.push(self.horizon);
        }
        let values: Vec<f64> = self.values.iter().map(|&v| phi(v)).collect();
        let mut slopes = Vec::with_capacity(self.times.len());
        for k in 0..self.times.len() {
            let end = times.get(k + 1).copied().unwrap_or(self.horizon);
            let h = end - self.times[k];
            if h > 0.0 {
                let right = phi(self.values[k] + self.slopes[k] * h);
                slopes.push((right - values[k]) / h);
            } else {
                slopes.push(0.0);
            }
        }
        CadlagPath {
            times: self.times.clone(),
            values,
            slopes,
            horizon: self.horizon,
            interpolation: Interpolation::Linear,
        }
    }

    /// `c · x`
    pub fn scale(&self, c: f64) -> CadlagPath {
        CadlagPath {
            times: self.times.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            slopes: self.slopes.iter().map(|s| c * s).collect(),
            horizon: self.horizon,
            interpolation: self.interpolation,
        }
    }

    /// `x(t) + c + r t`
    pub fn add_affine(&self, c: f64, r: f64) -> CadlagPath {
        CadlagPath {
            times: self.times.clone(),
            values: self
                .times
                .iter()
                .zip(&self.values)
                .map(|(t, v)| v + c + r * t)
                .collect(),
            slopes: self.slopes.iter().map(|s| s + r).collect(),
            horizon: self.horizon,
            interpolation: if r == 0.0 {
                self.interpolation
            } else {
                Interpolation::Linear
            },
        }
    }

    /// `x(t)⁺`, exact for step paths.
    pub fn positive_part(&self) -> CadlagPath {
        self.compose(|v| v.max(0.0))
    }

    fn combine(&self, other: &CadlagPath, sign: f64) -> Result<CadlagPath, PathError> {
        if (self.horizon - other.horizon).abs() > 1e-9 * self.horizon.abs().max(1.0) {
            return Err(PathError::HorizonMismatch(self.horizon, other.horizon));
        }
        let mut times = Vec::with_capacity(self.times.len() + other.times.len());
        let (mut i, mut j) = (0, 0);
        while i < self.times.len() || j < other.times.len() {
            let a = self.times.get(i).copied().unwrap_or(f64::INFINITY);
            let b = other.times.get(j).copied().unwrap_or(f64::INFINITY);
            let t = a.min(b);
            if a == t {
                i += 1;
            }
            if b == t {
                j += 1;
            }
            times.push(t);
        }
        let mut values = Vec::with_capacity(times.len());
        let mut slopes = Vec::with_capacity(times.len());
        for &t in &times {
            let (ka, kb) = (self.segment(t), other.segment(t));
            values.push(self.eval(t) + sign * other.eval(t));
            slopes.push(self.slopes[ka] + sign * other.slopes[kb]);
        }
        let interpolation = if self.interpolation == Interpolation::Step
            && other.interpolation == Interpolation::Step
        {
            Interpolation::Step
        } else {
            Interpolation::Linear
        };
        Ok(CadlagPath {
            times,
            values,
            slopes,
            horizon: self.horizon.max(other.horizon),
            interpolation,
        })
    }

    pub fn add(&self, other: &CadlagPath) -> Result<CadlagPath, PathError> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &CadlagPath) -> Result<CadlagPath, PathError> {
        self.combine(other, -1.0)
    }

    /// Writes `time,value` rows. With `densify = Some(dt)` the path is
    /// sampled on a uniform grid of step `dt` instead; step paths are
    /// otherwise written with a left-limit row before every jump so the
    /// staircase plots correctly.
    pub fn write_csv<W: Write>(&self, mut out: W, densify: Option<f64>) -> io::Result<()> {
        writeln!(out, "time,value")?;
        match densify {
            Some(dt) if dt > 0.0 => {
                let m = (self.horizon / dt).round() as usize;
                for i in 0..=m {
                    let t = (i as f64 * dt).min(self.horizon);
                    writeln!(out, "{t},{}", self.eval(t))?;
                }
            }
            _ => {
                for (k, &t) in self.times.iter().enumerate() {
                    if k > 0 && self.is_step() {
                        writeln!(out, "{t},{}", self.left_limit(t))?;
                    }
                    writeln!(out, "{t},{}", self.values[k])?;
                }
                if self.horizon > *self.times.last().unwrap() {
                    writeln!(out, "{},{}", self.horizon, self.eval(self.horizon))?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_then_zero() -> CadlagPath {
        CadlagPath::step(vec![0.0, 1.0], vec![2.0, 0.0], 3.0).unwrap()
    }

    #[test]
    fn constant_sup_norm() {
        let p = CadlagPath::constant(-1.5, 4.0);
        assert_eq!(p.sup_norm(0.0, 4.0).unwrap(), 1.5);
    }

    #[test]
    fn step_integral_and_compose() {
        let p = two_then_zero();
        assert_eq!(p.integrate(0.0, 3.0).unwrap(), 2.0);
        let sq = p.compose(|x| x * x);
        assert_eq!(sq.values(), &[4.0, 0.0]);
        assert_eq!(sq.eval(0.5), 4.0);
        assert_eq!(sq.eval(1.0), 0.0);
        assert_eq!(sq.left_limit(1.0), 4.0);
    }

    #[test]
    fn counting_path_handles_ties() {
        let c = CadlagPath::counting(&[0.5, 0.5, 1.0, 4.0], 2.0);
        assert_eq!(c.eval(0.49), 0.0);
        assert_eq!(c.eval(0.5), 2.0);
        assert_eq!(c.eval(2.0), 3.0);
    }

    #[test]
    fn step_minus_drift_is_exact() {
        let c = CadlagPath::counting(&[1.0, 2.0], 3.0);
        let e = c.add_affine(0.0, -1.0);
        assert_eq!(e.eval(0.5), -0.5);
        assert_eq!(e.left_limit(1.0), -1.0);
        assert_eq!(e.eval(1.0), 0.0);
        assert!((e.sup_norm(0.0, 3.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((e.integrate(0.0, 3.0).unwrap() - (3.0 - 4.5)).abs() < 1e-12);
    }

    #[test]
    fn mismatched_horizons_rejected() {
        let a = CadlagPath::constant(1.0, 2.0);
        let b = CadlagPath::constant(1.0, 3.0);
        assert!(matches!(a.add(&b), Err(PathError::HorizonMismatch(..))));
        assert!(a.sup_norm(0.0, 5.0).is_err());
    }

    #[test]
    fn running_integral_of_step_is_exact() {
        let p = two_then_zero();
        let i = p.running_integral();
        assert_eq!(i.eval(0.5), 1.0);
        assert_eq!(i.eval(2.0), 2.0);
        assert_eq!(i.eval(3.0), 2.0);
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert!(CadlagPath::step(vec![0.0, 0.0], vec![1.0, 2.0], 1.0).is_err());
        assert!(CadlagPath::step(vec![0.1], vec![1.0], 1.0).is_err());
        assert!(CadlagPath::step(vec![0.0, 2.0], vec![1.0, 2.0], 1.0).is_err());
        assert!(CadlagPath::step(vec![0.0], vec![1.0, 2.0], 1.0).is_err());
    }

    fn arb_step() -> impl Strategy<Value = CadlagPath> {
        prop::collection::vec((0.01f64..1.0, -5.0f64..5.0), 1..20).prop_map(|segs| {
            let mut t = 0.0;
            let mut times = vec![];
            let mut values = vec![];
            for (dt, v) in &segs {
                times.push(t);
                values.push(*v);
                t += dt;
            }
            CadlagPath::step(times, values, t).unwrap()
        })
    }

    proptest! {
        #[test]
        fn sup_norm_dominates_samples(p in arb_step(), u in 0.0f64..1.0) {
            let t = u * p.horizon();
            prop_assert!(p.eval(t).abs() <= p.sup_abs() + 1e-12);
            prop_assert!(p.left_limit(t).abs() <= p.sup_abs() + 1e-12);
        }

        #[test]
        fn add_then_sub_round_trips(p in arb_step(), c in -3.0f64..3.0) {
            let q = p.add_affine(c, 0.5);
            let back = q.add(&p).unwrap().sub(&q).unwrap();
            let t = 0.37 * p.horizon();
            prop_assert!((back.eval(t) - p.eval(t)).abs() < 1e-9);
        }

        #[test]
        fn integral_is_additive(p in arb_step(), u in 0.0f64..1.0) {
            let m = u * p.horizon();
            let whole = p.integrate(0.0, p.horizon()).unwrap();
            let parts = p.integrate(0.0, m).unwrap() + p.integrate(m, p.horizon()).unwrap();
            prop_assert!((whole - parts).abs() < 1e-9);
        }
    }
}
