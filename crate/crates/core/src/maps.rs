//! Regulator mappings on uniform grids.
//!
//! Every solver samples the input `y` at `t_k = kh` and returns `x` as the
//! linear interpolant of its grid values. Integrals `∫₀^{t_k} φ(x(s)) ds`
//! use left endpoints `h Σ_{j<k} φ(x_j)`, and renewal convolutions
//! `∫₀^{t_k} x(t_k − s)⁻ dM(s)` use `Σ_{j=1..k} x⁻_{k−j} ΔM_j`, so every
//! scheme is explicit. The reported residual is the sup-norm defect of the
//! discretized defining equation; discretization error is a separate,
//! O(h) matter checked by grid refinement.

use serde::{Deserialize, Serialize};

use crate::inputs::ScalarFn;
use crate::path::CadlagPath;
use crate::renewal::RenewalTable;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("step {step} too large for rate {rate}; use h <= {suggested}")]
    StepTooLarge { step: f64, rate: f64, suggested: f64 },
    #[error("y(0) = {0} < 0; the reflected map needs a nonnegative start")]
    NegativeStart(f64),
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("invalid drift: {0}")]
    Drift(String),
    #[error(
        "Picard iteration did not converge in {iterations} iterations \
         (last change {last_change:e}, decay ratio {decay_ratio:.4})"
    )]
    NoConvergence {
        iterations: usize,
        last_change: f64,
        decay_ratio: f64,
    },
}

/// Upper end of the range on which a drift is checked.
const DRIFT_PROBE_END: f64 = 50.0;

/// A nondecreasing locally Lipschitz `g` with `g(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drift(ScalarFn);

impl Drift {
    pub fn new(g: ScalarFn) -> Result<Self, MapError> {
        if g.eval(0.0).abs() > 1e-12 {
            return Err(MapError::Drift(format!("g(0) = {} != 0", g.eval(0.0))));
        }
        let steps = 5000;
        let mut prev = 0.0;
        for i in 1..=steps {
            let x = DRIFT_PROBE_END * i as f64 / steps as f64;
            let v = g.eval(x);
            if !v.is_finite() || v < prev - 1e-12 {
                return Err(MapError::Drift(format!("g must be finite and nondecreasing (x = {x})")));
            }
            prev = v;
        }
        Ok(Drift(g))
    }

    pub fn zero() -> Self {
        Drift(ScalarFn::zero())
    }

    /// `θx`
    pub fn linear(theta: f64) -> Result<Self, MapError> {
        Self::new(ScalarFn::linear(theta))
    }

    pub fn function(&self) -> &ScalarFn {
        &self.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.eval(x)
    }

    /// Largest difference quotient of `g` on a 1000-cell grid over
    /// `[0, hi]`.
    pub fn lipschitz_on(&self, hi: f64) -> f64 {
        if !(hi > 0.0) {
            return 0.0;
        }
        let cells = 1000;
        let dx = hi / cells as f64;
        (0..cells)
            .map(|i| {
                let a = i as f64 * dx;
                (self.eval(a + dx) - self.eval(a)) / dx
            })
            .fold(0.0, f64::max)
    }
}

/// Whether the drift integral enters with a plus or a minus sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftSign {
    Plus,
    Minus,
}

impl DriftSign {
    fn factor(self) -> f64 {
        match self {
            DriftSign::Plus => 1.0,
            DriftSign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingSolution {
    pub x: CadlagPath,
    /// Regulator, for the reflected map.
    pub ell: Option<CadlagPath>,
    pub residual: f64,
    pub step: f64,
    /// Picard iterations performed (1 for direct solvers).
    pub iterations: usize,
    /// Sup-norm change of each Picard iteration.
    pub changes: Vec<f64>,
    /// Geometric mean ratio of successive changes.
    pub decay_ratio: Option<f64>,
    /// `∫x dℓ` for the reflected map.
    pub complementarity: Option<f64>,
}

impl MappingSolution {
    fn direct(x: CadlagPath, residual: f64, step: f64) -> Self {
        MappingSolution {
            x,
            ell: None,
            residual,
            step,
            iterations: 1,
            changes: Vec::new(),
            decay_ratio: None,
            complementarity: None,
        }
    }

    /// Grid values of `x`.
    pub fn values(&self) -> &[f64] {
        self.x.values()
    }
}

/// Number of cells `m` with `mh = T`.
fn cells(horizon: f64, h: f64) -> Result<usize, MapError> {
    if !(h > 0.0) {
        return Err(MapError::Grid(format!("step must be positive (got {h})")));
    }
    let r = horizon / h;
    let m = r.round();
    if m < 1.0 || (r - m).abs() > 1e-6 * r.max(1.0) {
        return Err(MapError::Grid(format!("step {h} does not divide horizon {horizon}")));
    }
    Ok(m as usize)
}

fn grid_times(m: usize, h: f64) -> Vec<f64> {
    (0..=m).map(|k| k as f64 * h).collect()
}

fn sample_input(y: &CadlagPath, h: f64) -> Result<(Vec<f64>, usize), MapError> {
    let m = cells(y.horizon(), h)?;
    Ok((grid_times(m, h).iter().map(|&t| y.eval(t)).collect(), m))
}

fn grid_path(values: Vec<f64>, h: f64) -> CadlagPath {
    CadlagPath::linear(grid_times(values.len() - 1, h), values).expect("uniform grid")
}

fn neg(x: f64) -> f64 {
    (-x).max(0.0)
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// `x = y + μⁿ∫x⁻ − ∫g(x⁺)` by explicit Euler.
pub fn solve_phi_n_g(y: &CadlagPath, g: &Drift, mu_n: f64, h: f64) -> Result<MappingSolution, MapError> {
    let suggested = 0.1 / mu_n;
    if h > suggested * (1.0 + 1e-12) {
        return Err(MapError::StepTooLarge {
            step: h,
            rate: mu_n,
            suggested,
        });
    }
    let (ys, m) = sample_input(y, h)?;
    let mut x = vec![0.0; m + 1];
    x[0] = ys[0];
    for k in 0..m {
        x[k + 1] = x[k] + (ys[k + 1] - ys[k]) + h * (mu_n * neg(x[k]) - g.eval(pos(x[k])));
    }
    let mut acc = 0.0;
    let mut residual = 0.0_f64;
    for k in 0..=m {
        residual = residual.max((x[k] - ys[k] - acc).abs());
        acc += h * (mu_n * neg(x[k]) - g.eval(pos(x[k])));
    }
    Ok(MappingSolution::direct(grid_path(x, h), residual, h))
}

/// Reflected map `x = y − ∫g(x⁺) + ℓ`, `x ≥ 0`, `ℓ` nondecreasing and
/// increasing only when `x = 0`.
pub fn solve_skorokhod_g(y: &CadlagPath, g: &Drift, h: f64) -> Result<MappingSolution, MapError> {
    let (ys, m) = sample_input(y, h)?;
    if ys[0] < 0.0 {
        return Err(MapError::NegativeStart(ys[0]));
    }
    let mut x = vec![0.0; m + 1];
    let mut ell = vec![0.0; m + 1];
    x[0] = ys[0];
    let mut complementarity = 0.0;
    for k in 0..m {
        let trial = x[k] + (ys[k + 1] - ys[k]) - h * g.eval(pos(x[k]));
        let push = neg(trial);
        x[k + 1] = trial + push;
        ell[k + 1] = ell[k] + push;
        complementarity += x[k + 1] * push;
    }
    let mut drift = 0.0;
    let mut residual = 0.0_f64;
    for k in 0..=m {
        residual = residual.max((x[k] - ys[k] + drift - ell[k]).abs());
        drift += h * g.eval(pos(x[k]));
    }
    Ok(MappingSolution {
        ell: Some(grid_path(ell, h)),
        complementarity: Some(complementarity),
        ..MappingSolution::direct(grid_path(x, h), residual, h)
    })
}

/// Renewal increments `ΔM_j`, `j = 1..=m`, at index `j`; index 0 holds 0.
fn renewal_increments(table: &RenewalTable, h: f64, m: usize) -> Result<Vec<f64>, MapError> {
    if (table.step() - h).abs() > 1e-12 * h {
        return Err(MapError::Grid(format!(
            "step {h} differs from the renewal table step {}",
            table.step()
        )));
    }
    if table.len() < m + 1 {
        return Err(MapError::Grid(format!(
            "renewal table horizon {} shorter than {}",
            table.horizon(),
            m as f64 * h
        )));
    }
    let mut dm = vec![0.0; m + 1];
    for j in 1..=m {
        dm[j] = table.values()[j] - table.values()[j - 1];
    }
    Ok(dm)
}

/// `Σ_{j=1..k} x⁻_{k−j} ΔM_j`
fn convolution(negs: &[f64], dm: &[f64], k: usize) -> f64 {
    let mut acc = 0.0;
    for j in 1..=k {
        acc += negs[k - j] * dm[j];
    }
    acc
}

fn phi_m_values(u: &[f64], dm: &[f64]) -> Vec<f64> {
    let m = u.len() - 1;
    let mut x = vec![0.0; m + 1];
    let mut negs = vec![0.0; m + 1];
    for k in 0..=m {
        x[k] = u[k] + convolution(&negs, dm, k);
        negs[k] = neg(x[k]);
    }
    x
}

/// Defect of `x = y + ∫x⁻dM ± ∫g(x⁺)` on the grid.
fn general_residual(x: &[f64], ys: &[f64], dm: &[f64], g: &Drift, sign: f64, h: f64) -> f64 {
    let negs: Vec<f64> = x.iter().map(|&v| neg(v)).collect();
    let mut drift = 0.0;
    let mut residual = 0.0_f64;
    for k in 0..x.len() {
        let rhs = ys[k] + convolution(&negs, dm, k) + sign * drift;
        residual = residual.max((x[k] - rhs).abs());
        drift += h * g.eval(pos(x[k]));
    }
    residual
}

/// Renewal map `x = y + ∫₀ᵗ x(t − s)⁻ dM(s)`.
pub fn solve_phi_m(y: &CadlagPath, table: &RenewalTable, h: f64) -> Result<MappingSolution, MapError> {
    let (ys, m) = sample_input(y, h)?;
    let dm = renewal_increments(table, h, m)?;
    let x = phi_m_values(&ys, &dm);
    let residual = general_residual(&x, &ys, &dm, &Drift::zero(), 1.0, h);
    Ok(MappingSolution::direct(grid_path(x, h), residual, h))
}

/// Starting point of the Picard iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    Zero,
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub initial: InitialGuess,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-10,
            max_iterations: 10_000,
            initial: InitialGuess::Zero,
        }
    }
}

/// `x = y + ∫₀ᵗ x(t − s)⁻ dM(s) ± ∫₀ᵗ g(x(s)⁺) ds` by Picard iteration
/// `u_{n+1} = y ± ∫g((Φ_M u_n)⁺)`, `x = Φ_M(u*)`.
///
/// Stops when the sup-change drops below `tol` and the residual below
/// `10·tol`.
pub fn solve_phi_mg(
    y: &CadlagPath,
    table: &RenewalTable,
    g: &Drift,
    sign: DriftSign,
    h: f64,
    opts: PicardOptions,
) -> Result<MappingSolution, MapError> {
    if !(opts.tol > 0.0) {
        return Err(MapError::Grid(format!("tolerance must be positive (got {})", opts.tol)));
    }
    let (ys, m) = sample_input(y, h)?;
    let dm = renewal_increments(table, h, m)?;
    let s = sign.factor();
    let mut u = match opts.initial {
        InitialGuess::Zero => vec![0.0; m + 1],
        InitialGuess::Input => ys.clone(),
    };
    let mut changes = Vec::new();
    for it in 1..=opts.max_iterations {
        let x = phi_m_values(&u, &dm);
        let mut next = vec![0.0; m + 1];
        let mut drift = 0.0;
        for k in 0..=m {
            next[k] = ys[k] + s * drift;
            drift += h * g.eval(pos(x[k]));
        }
        let change = next
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        changes.push(change);
        u = next;
        if change < opts.tol {
            let x = phi_m_values(&u, &dm);
            let residual = general_residual(&x, &ys, &dm, g, s, h);
            if residual < 10.0 * opts.tol {
                let decay_ratio = decay_ratio(&changes);
                return Ok(MappingSolution {
                    iterations: it,
                    changes,
                    decay_ratio,
                    ..MappingSolution::direct(grid_path(x, h), residual, h)
                });
            }
        }
    }
    Err(MapError::NoConvergence {
        iterations: opts.max_iterations,
        last_change: *changes.last().unwrap_or(&f64::NAN),
        decay_ratio: decay_ratio(&changes).unwrap_or(f64::NAN),
    })
}

/// Geometric mean of successive ratios over the nonzero changes; 0 when
/// the iteration reached an exact fixed point.
fn decay_ratio(changes: &[f64]) -> Option<f64> {
    let nz: Vec<f64> = changes.iter().copied().filter(|&c| c > 0.0).collect();
    if changes.last() == Some(&0.0) {
        return Some(0.0);
    }
    if nz.len() < 2 {
        return None;
    }
    Some((nz[nz.len() - 1] / nz[0]).powf(1.0 / (nz.len() - 1) as f64))
}

/// The same discrete equation as [`solve_phi_mg`], marched forward in one
/// pass: both the convolution and the drift sum at `t_k` only involve
/// `x_0, ..., x_{k−1}`, so the discrete fixed point is explicit.
pub fn solve_phi_mg_forward(
    y: &CadlagPath,
    table: &RenewalTable,
    g: &Drift,
    sign: DriftSign,
    h: f64,
) -> Result<MappingSolution, MapError> {
    let (ys, m) = sample_input(y, h)?;
    let dm = renewal_increments(table, h, m)?;
    let s = sign.factor();
    let mut x = vec![0.0; m + 1];
    let mut negs = vec![0.0; m + 1];
    let mut drift = 0.0;
    for k in 0..=m {
        x[k] = ys[k] + convolution(&negs, &dm, k) + s * drift;
        negs[k] = neg(x[k]);
        drift += h * g.eval(pos(x[k]));
    }
    let residual = general_residual(&x, &ys, &dm, g, s, h);
    Ok(MappingSolution::direct(grid_path(x, h), residual, h))
}

/// Contraction window `δ = 2/(3 Λ_M Λ_g)` of the Picard argument, with
/// `Λ_M = 1 + M(T)` and `Λ_g` the Lipschitz constant of `g` on
/// `[0, range]`. Diagnostic only.
pub fn picard_window(table: &RenewalTable, g: &Drift, range: f64) -> f64 {
    let lm = 1.0 + table.values().last().copied().unwrap_or(0.0);
    let lg = g.lipschitz_on(range).max(1e-300);
    2.0 / (3.0 * lm * lg)
}

/// `sup|x₁ − x₂|` over the common grid of two solutions.
pub fn sup_distance(a: &MappingSolution, b: &MappingSolution) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}
