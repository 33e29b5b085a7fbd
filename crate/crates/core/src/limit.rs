//! Driving noises and solvers for the diffusion limits.
//!
//! Case (i) (`α < 1`): `X̃ = ξ + Ẽ − √μ S̃ + βμt − μ∫f(X̃⁺/μ) + L̃` with
//! `X̃ ≥ 0` and `L̃` the minimal regulator; `S̃` is a standard Brownian
//! motion.
//!
//! Case (ii) (`α = 1`): `X̃ = ξ + Ẽ − S̃ + βμt + ξ⁻(μt − M(t))
//! + ∫X̃(t − s)⁻dM(s) − μ∫f(X̃⁺/μ)`, with `S̃` the centred Gaussian process
//! whose covariance is that of the stationary service-completion noise,
//! `Cov(s, t) = ½[V(s) + V(t) − V(|t − s|)]`, `V(t) = 2μ∫₀ᵗ(M(u) − μu + ½)du`.

use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::inputs::{RandomStream, ScalarFn};
use crate::maps::{
    solve_phi_mg, solve_phi_mg_forward, solve_skorokhod_g, Drift, DriftSign, MapError,
    PicardOptions,
};
use crate::path::CadlagPath;
use crate::renewal::RenewalTable;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LimitError {
    #[error("variance rate must be >= 0 (got {0})")]
    NegativeVariance(f64),
    #[error("grid must be uniform, start at 0 and have at least two points")]
    BadGrid,
    #[error("grid horizon {grid} exceeds the renewal table horizon {table}")]
    TableTooShort { grid: f64, table: f64 },
    #[error("covariance matrix not positive definite at leading minor {minor} even with jitter {jitter:e}")]
    NotPositiveDefinite { minor: usize, jitter: f64 },
    #[error("case (i) needs xi >= 0 (got {0})")]
    NegativeXi(f64),
    #[error("noise paths do not share the solver grid")]
    NoiseMismatch,
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Jitter levels tried in turn when factorizing a covariance matrix.
pub const JITTER_LEVELS: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// Uniform grid with step `h` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub step: f64,
    pub cells: usize,
}

impl Grid {
    pub fn new(horizon: f64, step: f64) -> Result<Self, LimitError> {
        if !(step > 0.0 && horizon > 0.0) {
            return Err(LimitError::BadGrid);
        }
        let r = horizon / step;
        let m = r.round();
        if m < 1.0 || (r - m).abs() > 1e-6 * r {
            return Err(LimitError::BadGrid);
        }
        Ok(Grid {
            step,
            cells: m as usize,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.cells as f64 * self.step
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.cells).map(|k| k as f64 * self.step).collect()
    }
}

/// Gaussian random walk with increments `N(0, σ²h)`, linearly interpolated.
pub fn sample_brownian(variance_rate: f64, grid: Grid, stream: &mut RandomStream) -> Result<CadlagPath, LimitError> {
    if !(variance_rate >= 0.0) {
        return Err(LimitError::NegativeVariance(variance_rate));
    }
    let sd = (variance_rate * grid.step).sqrt();
    let mut values = Vec::with_capacity(grid.cells + 1);
    let mut acc = 0.0;
    values.push(0.0);
    for _ in 0..grid.cells {
        let z: f64 = StandardNormal.sample(stream);
        acc += sd * z;
        values.push(acc);
    }
    Ok(CadlagPath::linear(grid.times(), values).expect("uniform grid"))
}

/// `V(t) = 2μ∫₀ᵗ(M(u) − μu + ½)du` on a renewal table.
#[derive(Debug, Clone)]
pub struct ServiceVariance {
    mu: f64,
    step: f64,
    /// `∫₀^{t_k}(M(u) − μu + ½)du` at the table grid.
    cumulative: Vec<f64>,
    lattice: Option<f64>,
}

impl ServiceVariance {
    pub fn new(table: &RenewalTable) -> Self {
        let mu = table.mu();
        let h = table.step();
        let lattice = table.service().deterministic_value();
        let mut cumulative = Vec::with_capacity(table.len());
        cumulative.push(0.0);
        let vals = table.values();
        let mut acc = 0.0;
        for k in 1..table.len() {
            // centred integrand M(u) − μu + ½ is integrated by trapezoid
            let a = vals[k - 1] - mu * (k - 1) as f64 * h + 0.5;
            let b = vals[k] - mu * k as f64 * h + 0.5;
            acc += 0.5 * (a + b) * h;
            cumulative.push(acc);
        }
        ServiceVariance {
            mu,
            step: h,
            cumulative,
            lattice,
        }
    }

    /// `∫₀ᵗ(M(u) − μu + ½)du`
    fn centred_integral(&self, t: f64) -> f64 {
        if let Some(d) = self.lattice {
            // M(u) = ⌊u/d⌋ exactly
            let j = (t / d + 1e-9).floor();
            let lattice_part = d * j * (j - 1.0) / 2.0 + j * (t - j * d);
            return lattice_part - 0.5 * self.mu * t * t + 0.5 * t;
        }
        let x = t / self.step;
        let k = (x.floor() as usize).min(self.cumulative.len() - 2);
        let w = x - k as f64;
        self.cumulative[k] + w * (self.cumulative[k + 1] - self.cumulative[k])
    }

    pub fn variance(&self, t: f64) -> f64 {
        2.0 * self.mu * self.centred_integral(t.abs())
    }

    pub fn covariance(&self, s: f64, t: f64) -> f64 {
        0.5 * (self.variance(s) + self.variance(t) - self.variance(t - s))
    }
}

/// Covariance of `S̃(s)` and `S̃(t)`; symmetric in its arguments.
pub fn covariance_s(s: f64, t: f64, table: &RenewalTable) -> f64 {
    ServiceVariance::new(table).covariance(s, t)
}

/// Row-major covariance matrix on `times`.
pub fn covariance_matrix(times: &[f64], table: &RenewalTable) -> Vec<f64> {
    let v = ServiceVariance::new(table);
    let m = times.len();
    let mut c = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let x = v.covariance(times[i], times[j]);
            c[i * m + j] = x;
            c[j * m + i] = x;
        }
    }
    c
}

/// Lower Cholesky factor of `a + jitter·I`, escalating the jitter through
/// [`JITTER_LEVELS`]. Returns the factor and the jitter used.
pub fn cholesky(a: &[f64], m: usize) -> Result<(Vec<f64>, f64), LimitError> {
    let mut worst = 0;
    for &jitter in &JITTER_LEVELS {
        match try_cholesky(a, m, jitter) {
            Ok(l) => return Ok((l, jitter)),
            Err(minor) => worst = minor,
        }
    }
    Err(LimitError::NotPositiveDefinite {
        minor: worst,
        jitter: *JITTER_LEVELS.last().unwrap(),
    })
}

/// Fails with the 1-based order of the first non-positive leading minor.
fn try_cholesky(a: &[f64], m: usize, jitter: f64) -> Result<Vec<f64>, usize> {
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = a[i * m + j];
            if i == j {
                s += jitter;
            }
            let (ri, rj) = (&l[i * m..i * m + j], &l[j * m..j * m + j]);
            s -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return Err(i + 1);
                }
                l[i * m + i] = s.sqrt();
            } else {
                l[i * m + j] = s / l[j * m + j];
            }
        }
    }
    Ok(l)
}

/// Sampler for `S̃` on a uniform grid (the point `t = 0` is pinned to 0).
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    grid: Grid,
    factor: Vec<f64>,
    jitter: f64,
}

impl GaussianSampler {
    pub fn new(table: &RenewalTable, grid: Grid) -> Result<Self, LimitError> {
        if grid.horizon() > table.horizon() * (1.0 + 1e-9) {
            return Err(LimitError::TableTooShort {
                grid: grid.horizon(),
                table: table.horizon(),
            });
        }
        let times: Vec<f64> = grid.times()[1..].to_vec();
        let m = times.len();
        let (factor, jitter) = cholesky(&covariance_matrix(&times, table), m)?;
        Ok(GaussianSampler { grid, factor, jitter })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Diagonal jitter that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sample(&self, stream: &mut RandomStream) -> CadlagPath {
        let m = self.grid.cells;
        let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(stream)).collect();
        let mut values = Vec::with_capacity(m + 1);
        values.push(0.0);
        for i in 0..m {
            let row = &self.factor[i * m..i * m + i + 1];
            values.push(row.iter().zip(&z).map(|(a, b)| a * b).sum());
        }
        CadlagPath::linear(self.grid.times(), values).expect("uniform grid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    Brownian,
    Renewal { jitter: f64 },
}

/// Arrival and service noise on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSample {
    pub arrivals: CadlagPath,
    pub service: CadlagPath,
    pub seed: u64,
    pub replication: u64,
    pub source: CovarianceSource,
}

impl NoiseSample {
    /// `Ẽ` Brownian with rate `arrival_rate`, `S̃` standard Brownian, from
    /// the two independent Gaussian streams of `replication`.
    pub fn brownian(
        arrival_rate: f64,
        grid: Grid,
        seed: u64,
        replication: u64,
    ) -> Result<Self, LimitError> {
        let (mut a, mut s) = gaussian_streams(seed, replication);
        Ok(NoiseSample {
            arrivals: sample_brownian(arrival_rate, grid, &mut a)?,
            service: sample_brownian(1.0, grid, &mut s)?,
            seed,
            replication,
            source: CovarianceSource::Brownian,
        })
    }

    /// `Ẽ` Brownian with rate `arrival_rate`, `S̃` from `sampler`.
    pub fn renewal(
        arrival_rate: f64,
        sampler: &GaussianSampler,
        seed: u64,
        replication: u64,
    ) -> Result<Self, LimitError> {
        let (mut a, mut s) = gaussian_streams(seed, replication);
        Ok(NoiseSample {
            arrivals: sample_brownian(arrival_rate, sampler.grid(), &mut a)?,
            service: sampler.sample(&mut s),
            seed,
            replication,
            source: CovarianceSource::Renewal {
                jitter: sampler.jitter(),
            },
        })
    }

    /// Deterministic zero noise on `grid`.
    pub fn zero(grid: Grid) -> Self {
        let zero = CadlagPath::linear(grid.times(), vec![0.0; grid.cells + 1]).unwrap();
        NoiseSample {
            arrivals: zero.clone(),
            service: zero,
            seed: 0,
            replication: 0,
            source: CovarianceSource::Brownian,
        }
    }

    fn grid_values(&self, grid: Grid) -> Result<(Vec<f64>, Vec<f64>), LimitError> {
        let ok = |p: &CadlagPath| {
            p.times().len() == grid.cells + 1 && (p.horizon() - grid.horizon()).abs() <= 1e-9 * grid.horizon()
        };
        if !ok(&self.arrivals) || !ok(&self.service) {
            return Err(LimitError::NoiseMismatch);
        }
        Ok((self.arrivals.values().to_vec(), self.service.values().to_vec()))
    }

    fn grid(&self) -> Result<Grid, LimitError> {
        let cells = self.arrivals.times().len().saturating_sub(1);
        if cells == 0 {
            return Err(LimitError::BadGrid);
        }
        Ok(Grid {
            step: self.arrivals.horizon() / cells as f64,
            cells,
        })
    }
}

fn gaussian_streams(seed: u64, replication: u64) -> (RandomStream, RandomStream) {
    use crate::inputs::Purpose;
    (
        RandomStream::new(seed, replication, Purpose::Gaussian),
        RandomStream::new(seed, replication, Purpose::GaussianAux),
    )
}

/// `g(x) = μ f(x/μ)`
pub fn limit_drift(f: &ScalarFn, mu: f64) -> Result<Drift, LimitError> {
    Ok(Drift::new(f.rescaled(mu, 1.0 / mu))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitCase {
    /// `α < 1`: reflected at zero.
    I,
    /// `α = 1`: renewal feedback of the negative part.
    II,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSolution {
    pub case: LimitCase,
    pub x: CadlagPath,
    /// `L̃` (case (i) only).
    pub regulator: Option<CadlagPath>,
    pub residual: f64,
    pub complementarity: Option<f64>,
    pub iterations: usize,
}

/// Solves case (i) with the Euler step equal to the noise grid step.
pub fn solve_limit_case_i(
    xi: f64,
    noise: &NoiseSample,
    beta: f64,
    mu: f64,
    g: &Drift,
) -> Result<LimitSolution, LimitError> {
    if xi < 0.0 {
        return Err(LimitError::NegativeXi(xi));
    }
    let grid = noise.grid()?;
    let (e, s) = noise.grid_values(grid)?;
    let root_mu = mu.sqrt();
    let y: Vec<f64> = (0..=grid.cells)
        .map(|k| xi + e[k] - root_mu * s[k] + beta * mu * k as f64 * grid.step)
        .collect();
    let y = CadlagPath::linear(grid.times(), y).expect("uniform grid");
    let sol = solve_skorokhod_g(&y, g, grid.step)?;
    Ok(LimitSolution {
        case: LimitCase::I,
        x: sol.x,
        regulator: sol.ell,
        residual: sol.residual,
        complementarity: sol.complementarity,
        iterations: 1,
    })
}

/// How the case (ii) fixed point is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseTwoMethod {
    Picard(PicardOptions),
    /// One forward pass; same discrete solution as Picard.
    Forward,
}

/// Solves case (ii) on the noise grid, which must match the table step.
pub fn solve_limit_case_ii(
    xi: f64,
    noise: &NoiseSample,
    beta: f64,
    mu: f64,
    g: &Drift,
    table: &RenewalTable,
    method: CaseTwoMethod,
) -> Result<LimitSolution, LimitError> {
    let grid = noise.grid()?;
    if grid.horizon() > table.horizon() * (1.0 + 1e-9) {
        return Err(LimitError::TableTooShort {
            grid: grid.horizon(),
            table: table.horizon(),
        });
    }
    let (e, s) = noise.grid_values(grid)?;
    let xi_neg = (-xi).max(0.0);
    let m_vals = table.values();
    let y: Vec<f64> = (0..=grid.cells)
        .map(|k| {
            let t = k as f64 * grid.step;
            xi + e[k] - s[k] + beta * mu * t + xi_neg * (mu * t - m_vals[k])
        })
        .collect();
    let y = CadlagPath::linear(grid.times(), y).expect("uniform grid");
    let sol = match method {
        CaseTwoMethod::Picard(opts) => {
            solve_phi_mg(&y, table, g, DriftSign::Minus, grid.step, opts)?
        }
        CaseTwoMethod::Forward => solve_phi_mg_forward(&y, table, g, DriftSign::Minus, grid.step)?,
    };
    Ok(LimitSolution {
        case: LimitCase::II,
        x: sol.x,
        regulator: None,
        residual: sol.residual,
        complementarity: None,
        iterations: sol.iterations,
    })
}
