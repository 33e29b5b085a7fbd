//! Diffusion scaling of a simulated record.

use serde::{Deserialize, Serialize};

use crate::path::CadlagPath;
use crate::sim::{virtual_waits, SimError, SimRecord, SystemConfig, Wait};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScaleError {
    #[error("grid point {t} outside [0, {horizon}]")]
    GridOutOfRange { t: f64, horizon: f64 },
    #[error("record has {record} servers but the config implies {config}")]
    ServerMismatch { record: usize, config: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Uniform grid `0, T/m, ..., T`.
pub fn uniform_grid(horizon: f64, m: usize) -> Vec<f64> {
    (0..=m).map(|i| horizon * i as f64 / m as f64).collect()
}

/// The scaled processes of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledBundle {
    pub n: u64,
    pub mu: f64,
    /// `Ẽ = (E − λt)/√n`
    pub arrivals: CadlagPath,
    /// `(S − μⁿ∫min(X, N))/√n`
    pub service_raw: CadlagPath,
    /// `G̃ = G/√n`
    pub abandonments: CadlagPath,
    /// `X̃ = (X − N)/√n`
    pub head_count: CadlagPath,
    /// `Q̃ = (X̃)⁺`
    pub queue: CadlagPath,
    /// `μ∫₀ᵗ f(Q̃(s)/μ) ds`
    pub compensator: CadlagPath,
    /// `Ĝ = G̃ − μ∫₀ᵗ f(Q̃(s)/μ) ds`
    pub abandonment_martingale: CadlagPath,
    /// Sampling grid of the virtual wait.
    pub grid: Vec<f64>,
    /// `ω̃ = √n ω` on `grid`.
    pub virtual_wait: Vec<Wait>,
}

impl ScaledBundle {
    /// Scales `record`, produced from `config`. The virtual wait is sampled
    /// on `grid`, by default with step `T/200`.
    pub fn new(
        record: &SimRecord,
        config: &SystemConfig,
        grid: Option<&[f64]>,
    ) -> Result<Self, ScaleError> {
        if record.servers() != config.servers() {
            return Err(ScaleError::ServerMismatch {
                record: record.servers(),
                config: config.servers(),
            });
        }
        let horizon = record.horizon();
        let default_grid;
        let grid = match grid {
            Some(g) => g,
            None => {
                default_grid = uniform_grid(horizon, 200);
                &default_grid
            }
        };
        if let Some(&t) = grid.iter().find(|&&t| !(0.0..=horizon).contains(&t)) {
            return Err(ScaleError::GridOutOfRange { t, horizon });
        }

        let sqrt_n = (config.n as f64).sqrt();
        let inv = 1.0 / sqrt_n;
        let servers = config.servers() as f64;
        let mu = config.mu;

        let x = record.head_count();
        let arrivals = record
            .arrivals()
            .add_affine(0.0, -config.arrival_rate())
            .scale(inv);
        let busy_integral = x.compose(|v| v.min(servers)).running_integral();
        let service_raw = record
            .departures()
            .sub(&busy_integral.scale(config.service_rate()))
            .expect("same horizon")
            .scale(inv);
        let abandonments = record.abandonments().scale(inv);
        let head_count = x.add_affine(-servers, 0.0).scale(inv);
        let queue = head_count.positive_part();
        let f = config.patience.limit_fn();
        let compensator = queue.compose(|q| f.eval(q / mu)).running_integral().scale(mu);
        let abandonment_martingale = abandonments.sub(&compensator).expect("same horizon");
        let virtual_wait = virtual_waits(record, grid)?
            .into_iter()
            .map(|w| match w {
                Wait::Exact(v) => Wait::Exact(sqrt_n * v),
                Wait::Truncated => Wait::Truncated,
            })
            .collect();

        Ok(ScaledBundle {
            n: config.n,
            mu,
            arrivals,
            service_raw,
            abandonments,
            head_count,
            queue,
            compensator,
            abandonment_martingale,
            grid: grid.to_vec(),
            virtual_wait,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::{Distribution, PatienceSpec, ScalarFn, StreamSet};
    use crate::sim::{simulate, simulate_config, InitialCount, QueueModel};

    fn empty_config(n: u64) -> SystemConfig {
        SystemConfig::markovian(n, 1.0, 1.0, 0.5, 1.0, 4.0)
    }

    #[test]
    fn empty_record_scales_to_drift_only() {
        let config = empty_config(16);
        let model = QueueModel {
            interarrival: None,
            initial: InitialCount::Count(0),
            ..config.model().unwrap()
        };
        let rec = simulate(&model, &mut StreamSet::new(0, 0)).unwrap();
        let b = ScaledBundle::new(&rec, &config, None).unwrap();
        let lam = config.arrival_rate();
        for t in [0.0, 1.3, 4.0] {
            assert!((b.arrivals.eval(t) + lam * t / 4.0).abs() < 1e-12);
            assert_eq!(b.abandonments.eval(t), 0.0);
            assert_eq!(b.queue.eval(t), 0.0);
            assert_eq!(b.compensator.eval(t), 0.0);
            assert!((b.head_count.eval(t) + 16.0 / 4.0).abs() < 1e-12);
        }
        assert_eq!(b.grid.len(), 201);
        assert!(b.virtual_wait.iter().all(|w| *w == Wait::Exact(0.0)));
    }

    #[test]
    fn zero_f_leaves_abandonments_uncompensated() {
        let mut config = SystemConfig::markovian(100, 1.0, 1.0, 1.0, 1.0, 5.0);
        config.patience = PatienceSpec::direct_f(ScalarFn::zero()).unwrap();
        let rec = simulate_config(&config, 1, 0).unwrap();
        let b = ScaledBundle::new(&rec, &config, None).unwrap();
        assert_eq!(b.abandonment_martingale.sup_abs(), b.abandonments.sup_abs());
    }

    #[test]
    fn one_step_compensator() {
        // Q̃ = q on [0, 1), 0 after; f(x) = θx: compensator(2) = θq
        let (theta, q, mu) = (0.7, 1.5, 2.0);
        let path = CadlagPath::step(vec![0.0, 1.0], vec![q, 0.0], 2.0).unwrap();
        let comp = path.compose(|v| theta * v / mu).running_integral().scale(mu);
        assert!((comp.eval(2.0) - theta * q).abs() < 1e-15);
        let m = 1000;
        let mid: f64 = (0..m)
            .map(|i| {
                let s = 2.0 * (i as f64 + 0.5) / m as f64;
                mu * theta * path.eval(s) / mu * 2.0 / m as f64
            })
            .sum();
        assert!((mid - theta * q).abs() < 1e-12);
    }

    #[test]
    fn scaled_identities() {
        let config = SystemConfig::markovian(64, 1.0, 1.0, -1.0, 1.0, 6.0);
        let rec = simulate_config(&config, 2, 0).unwrap();
        let b = ScaledBundle::new(&rec, &config, None).unwrap();
        for &t in b.head_count.times() {
            assert_eq!(b.queue.eval(t), b.head_count.eval(t).max(0.0));
        }
        let times = b.compensator.times();
        for w in times.windows(2) {
            assert!(b.compensator.eval(w[1]) >= b.compensator.eval(w[0]));
        }
        assert!(b.compensator.slopes().iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn rejects_grid_beyond_horizon() {
        let config = empty_config(4);
        let rec = simulate_config(&config, 0, 0).unwrap();
        assert!(matches!(
            ScaledBundle::new(&rec, &config, Some(&[0.0, 5.0])),
            Err(ScaleError::GridOutOfRange { .. })
        ));
    }

    #[test]
    fn service_noise_is_centered_for_markovian_service() {
        let config = SystemConfig {
            service: Some(Distribution::exponential(1.0).unwrap()),
            ..SystemConfig::markovian(400, 1.0, 1.0, 0.0, 1.0, 2.0)
        };
        let reps = 200;
        let mean: f64 = (0..reps)
            .map(|r| {
                let rec = simulate_config(&config, 8, r).unwrap();
                ScaledBundle::new(&rec, &config, Some(&[0.0]))
                    .unwrap()
                    .service_raw
                    .eval(2.0)
            })
            .sum::<f64>()
            / reps as f64;
        // Var ≈ 2 per replication
        assert!(mean.abs() < 4.0 * (2.0 / reps as f64).sqrt(), "mean {mean}");
    }
}
