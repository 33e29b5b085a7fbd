//! Real functions on the half line used for hazard rates and patience
//! limit functions.

use serde::{Deserialize, Serialize};

use super::InputError;

/// A real function on `[0, ∞)` given either as a polynomial or as a
/// piecewise-linear table.
///
/// Tables are extrapolated linearly past the last knot using the last
/// segment's slope, so a nondecreasing table stays nondecreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarFn {
    /// `c0 + c1 x + c2 x² + ...`
    Polynomial { coeffs: Vec<f64> },
    /// Piecewise-linear interpolation through `(x[i], y[i])`, with `x[0] = 0`.
    Table { x: Vec<f64>, y: Vec<f64> },
}

impl ScalarFn {
    pub fn zero() -> Self {
        ScalarFn::Polynomial { coeffs: vec![] }
    }

    pub fn constant(c: f64) -> Self {
        ScalarFn::Polynomial { coeffs: vec![c] }
    }

    /// `slope · x`
    pub fn linear(slope: f64) -> Self {
        ScalarFn::Polynomial {
            coeffs: vec![0.0, slope],
        }
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        ScalarFn::Polynomial { coeffs }
    }

    pub fn table(x: Vec<f64>, y: Vec<f64>) -> Result<Self, InputError> {
        let f = ScalarFn::Table { x, y };
        f.check_shape()?;
        Ok(f)
    }

    pub(crate) fn check_shape(&self) -> Result<(), InputError> {
        match self {
            ScalarFn::Polynomial { coeffs } => {
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(InputError::invalid("polynomial coefficients must be finite"));
                }
            }
            ScalarFn::Table { x, y } => {
                if x.len() < 2 || x.len() != y.len() {
                    return Err(InputError::invalid(
                        "table needs at least two knots and matching x/y lengths",
                    ));
                }
                if x[0] != 0.0 {
                    return Err(InputError::invalid("table must start at x = 0"));
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(InputError::invalid("table knots must be strictly increasing"));
                }
                if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
                    return Err(InputError::invalid("table entries must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarFn::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c),
            ScalarFn::Table { x: xs, y: ys } => {
                let k = segment(xs, x);
                let slope = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
                ys[k] + slope * (x - xs[k])
            }
        }
    }

    /// `∫₀ˣ self(u) du`, exact for both representations.
    pub fn integral(&self, x: f64) -> f64 {
        match self {
            ScalarFn::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .rev()
                .fold(0.0, |acc, (i, &c)| acc * x + c / (i as f64 + 1.0))
                * x,
            ScalarFn::Table { x: xs, y: ys } => {
                let mut acc = 0.0;
                for k in 0..xs.len() - 1 {
                    if x <= xs[k] {
                        return acc;
                    }
                    let hi = if k + 2 == xs.len() { x } else { x.min(xs[k + 1]) };
                    let v_hi = self.eval(hi);
                    acc += 0.5 * (ys[k] + v_hi) * (hi - xs[k]);
                }
                acc
            }
        }
    }

    /// The antiderivative `x ↦ ∫₀ˣ self`, as a function of the same kind.
    pub fn antiderivative(&self) -> ScalarFn {
        match self {
            ScalarFn::Polynomial { coeffs } => {
                let mut out = Vec::with_capacity(coeffs.len() + 1);
                out.push(0.0);
                out.extend(coeffs.iter().enumerate().map(|(i, c)| c / (i as f64 + 1.0)));
                ScalarFn::Polynomial { coeffs: out }
            }
            // The antiderivative of a piecewise-linear table is piecewise
            // quadratic; tabulate it finely and rely on linear interpolation.
            ScalarFn::Table { x: xs, .. } => {
                let last = *xs.last().unwrap();
                let steps = 4096;
                let grid: Vec<f64> = (0..=steps).map(|i| last * i as f64 / steps as f64).collect();
                let vals = grid.iter().map(|&u| self.integral(u)).collect();
                ScalarFn::Table { x: grid, y: vals }
            }
        }
    }

    /// `x ↦ a · self(b · x)`
    pub fn rescaled(&self, a: f64, b: f64) -> ScalarFn {
        match self {
            ScalarFn::Polynomial { coeffs } => ScalarFn::Polynomial {
                coeffs: coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| a * c * b.powi(i as i32))
                    .collect(),
            },
            ScalarFn::Table { x, y } => ScalarFn::Table {
                x: x.iter().map(|v| v / b).collect(),
                y: y.iter().map(|v| a * v).collect(),
            },
        }
    }

    /// Smallest `x ≥ 0` with `self(x) ≥ level` for a nondecreasing function,
    /// or `None` when the function stays below `level` on `[0, cap]`.
    pub fn inverse(&self, level: f64, cap: f64) -> Option<f64> {
        if self.eval(0.0) >= level {
            return Some(0.0);
        }
        let mut hi = 1.0_f64;
        while self.eval(hi) < level {
            hi *= 2.0;
            if hi > cap {
                return None;
            }
        }
        Some(bisect(|x| self.eval(x) >= level, 0.0, hi))
    }
}

/// Index `k` of the segment `[xs[k], xs[k+1]]` holding `x`, clamped to the
/// first/last segment.
fn segment(xs: &[f64], x: f64) -> usize {
    match xs.partition_point(|&v| v <= x) {
        0 => 0,
        p => (p - 1).min(xs.len() - 2),
    }
}

/// Bisection for the boundary of a monotone predicate on `[lo, hi]` with
/// `pred(lo) = false`, `pred(hi) = true`, to absolute tolerance 1e-12.
pub(crate) fn bisect(pred: impl Fn(f64) -> bool, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > 1e-12 * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
