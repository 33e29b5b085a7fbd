use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SimError;
use crate::inputs::{ArrivalSpec, Distribution, PatienceLaw, PatienceSpec, RandomStream};
use crate::renewal::EquilibriumDistribution;

/// Scaled initial excess `ξ`, with `X(0) = N + ⌈√n ξ⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum XiSpec {
    Fixed(f64),
    /// Drawn once per replication.
    Normal { mean: f64, sd: f64 },
}

impl Default for XiSpec {
    fn default() -> Self {
        XiSpec::Fixed(0.0)
    }
}

impl XiSpec {
    pub fn draw(&self, stream: &mut RandomStream) -> f64 {
        match *self {
            XiSpec::Fixed(x) => x,
            XiSpec::Normal { mean, sd } => {
                use rand_distr::{Distribution as _, StandardNormal};
                let z: f64 = StandardNormal.sample(stream);
                mean + sd * z
            }
        }
    }
}

fn yes() -> bool {
    true
}

/// The declarative description of one member of the system family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n: u64,
    pub alpha: f64,
    pub mu: f64,
    pub beta: f64,
    #[serde(default = "ArrivalSpec::poisson")]
    pub arrival: ArrivalSpec,
    /// Service law `H` with mean `1/μ`. Required to be exponential (or
    /// absent) when `alpha < 1`; defaults to exponential otherwise.
    #[serde(default)]
    pub service: Option<Distribution>,
    pub patience: PatienceSpec,
    #[serde(default)]
    pub xi: XiSpec,
    pub horizon: f64,
    #[serde(default = "yes")]
    pub abandonment: bool,
}

impl SystemConfig {
    /// `M/M/n+M`-type config: Poisson arrivals, exponential service and
    /// exponential patience with rate `theta`.
    pub fn markovian(n: u64, alpha: f64, mu: f64, beta: f64, theta: f64, horizon: f64) -> Self {
        SystemConfig {
            n,
            alpha,
            mu,
            beta,
            arrival: ArrivalSpec::poisson(),
            service: None,
            patience: PatienceSpec::exponential(theta).expect("theta must be positive"),
            xi: XiSpec::default(),
            horizon,
            abandonment: true,
        }
    }

    pub fn with_n(&self, n: u64) -> Self {
        SystemConfig { n, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n == 0 {
            return Err(SimError::config("n must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SimError::config(format!("alpha must lie in [0, 1] (got {})", self.alpha)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(SimError::config(format!("mu must be positive (got {})", self.mu)));
        }
        if !self.beta.is_finite() {
            return Err(SimError::config("beta must be finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::config(format!("horizon must be positive (got {})", self.horizon)));
        }
        if self.arrival_rate() <= 0.0 {
            return Err(SimError::config(format!(
                "arrival rate n*mu*(1+beta/sqrt(n)) must be positive (beta={} too negative for n={})",
                self.beta, self.n
            )));
        }
        ArrivalSpec::new(self.arrival.base().clone())?;
        self.patience.validate()?;
        if let XiSpec::Normal { sd, .. } = self.xi {
            if !(sd >= 0.0) {
                return Err(SimError::config("xi.normal.sd must be >= 0"));
            }
        }
        if let Some(h) = &self.service {
            let mean_ok = (h.mean() * self.mu - 1.0).abs() <= 1e-9;
            if self.alpha < 1.0 {
                if h.exponential_rate().is_none() || !mean_ok {
                    return Err(SimError::config(format!(
                        "alpha < 1 requires exponential service with rate mu = {} (got {} with mean {})",
                        self.mu,
                        h.family(),
                        h.mean()
                    )));
                }
            } else if !mean_ok {
                return Err(SimError::config(format!(
                    "service mean must equal 1/mu = {} (got {})",
                    1.0 / self.mu,
                    h.mean()
                )));
            }
            if h.cdf(0.0) > 0.0 {
                return Err(SimError::config("service law has an atom at 0"));
            }
        }
        Ok(())
    }

    /// `N_n = ⌈n^α⌉`.
    pub fn servers(&self) -> usize {
        let x = (self.n as f64).powf(self.alpha);
        ((x - 1e-9).ceil() as usize).max(1)
    }

    /// `λ^n = nμ(1 + β/√n)`.
    pub fn arrival_rate(&self) -> f64 {
        self.arrival.rate(self.n, self.mu, self.beta)
    }

    /// Base service law `H` (mean `1/μ`).
    pub fn base_service(&self) -> Distribution {
        self.service
            .clone()
            .unwrap_or_else(|| Distribution::exponential(self.mu).unwrap())
    }

    /// Per-server service rate `μ^n = n^{1−α}μ`.
    pub fn service_rate(&self) -> f64 {
        (self.n as f64).powf(1.0 - self.alpha) * self.mu
    }

    /// Service law of the `n`-th system.
    pub fn service_law(&self) -> Distribution {
        if self.alpha < 1.0 {
            Distribution::exponential(self.service_rate()).unwrap()
        } else {
            self.base_service()
        }
    }

    /// Abandonment drift `g(x) = μ f(x/μ)` of the limit equations.
    pub fn drift_fn(&self) -> crate::inputs::ScalarFn {
        self.patience.limit_fn().rescaled(self.mu, 1.0 / self.mu)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&json))
    }

    pub fn model(&self) -> Result<QueueModel, SimError> {
        self.validate()?;
        let service = self.service_law();
        let initial_service = if self.alpha < 1.0 {
            InitialService::Law(service.clone())
        } else {
            InitialService::Equilibrium(EquilibriumDistribution::new(&service))
        };
        Ok(QueueModel {
            servers: self.servers(),
            interarrival: Some(self.arrival.interarrival(self.arrival_rate())),
            service,
            initial_service,
            patience: if self.abandonment {
                Some(self.patience.law_for(self.n)?)
            } else {
                None
            },
            initial: InitialCount::Scaled {
                n: self.n,
                xi: self.xi,
            },
            horizon: self.horizon,
        })
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Law of the remaining service time of customers in service at time 0.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialService {
    Law(Distribution),
    Equilibrium(EquilibriumDistribution),
}

impl InitialService {
    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        match self {
            InitialService::Law(d) => d.sample(stream),
            InitialService::Equilibrium(e) => e.sample(stream),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCount {
    Count(u64),
    /// `N + ⌈√n ξ⌉`, floored at 0.
    Scaled { n: u64, xi: XiSpec },
}

/// Fully resolved queue: what the event engine actually runs.
#[derive(Debug, Clone)]
pub struct QueueModel {
    pub servers: usize,
    /// `None` for a closed system with no arrivals.
    pub interarrival: Option<Distribution>,
    pub service: Distribution,
    pub initial_service: InitialService,
    /// `None` when customers never abandon.
    pub patience: Option<PatienceLaw>,
    pub initial: InitialCount,
    pub horizon: f64,
}

impl QueueModel {
    /// FCFS `G/G/N` queue without abandonment, started empty.
    pub fn plain(servers: usize, interarrival: Distribution, service: Distribution, horizon: f64) -> Self {
        QueueModel {
            servers,
            interarrival: Some(interarrival),
            initial_service: InitialService::Law(service.clone()),
            service,
            patience: None,
            initial: InitialCount::Count(0),
            horizon,
        }
    }

    pub(crate) fn initial_count(&self, stream: &mut RandomStream) -> u64 {
        match self.initial {
            InitialCount::Count(c) => c,
            InitialCount::Scaled { n, xi } => {
                let x = xi.draw(stream);
                let excess = ((n as f64).sqrt() * x - 1e-9).ceil();
                (self.servers as f64 + excess).max(0.0) as u64
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn server_counts_and_rates() {
        let c = SystemConfig::markovian(1600, 0.5, 1.0, 0.0, 1.0, 10.0);
        assert_eq!(c.servers(), 40);
        assert!((c.service_rate() - 40.0).abs() < 1e-12);
        let c = SystemConfig::markovian(400, 1.0, 2.0, -1.0, 1.0, 10.0);
        assert_eq!(c.servers(), 400);
        assert!((c.arrival_rate() - 400.0 * 2.0 * 0.95).abs() < 1e-9);
        assert_eq!(c.with_n(1000).with_n(7).servers(), 7);
        let c = SystemConfig::markovian(10, 0.5, 1.0, 0.0, 1.0, 1.0);
        assert_eq!(c.servers(), 4);
    }

    #[test]
    fn regime_service_consistency() {
        let mut c = SystemConfig::markovian(100, 0.5, 1.0, 0.0, 1.0, 10.0);
        c.service = Some(Distribution::erlang(2, 2.0).unwrap());
        assert!(matches!(c.validate(), Err(SimError::Config(_))));
        c.alpha = 1.0;
        assert!(c.validate().is_ok());
        c.service = Some(Distribution::erlang(2, 3.0).unwrap());
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip_and_hash() {
        let c = SystemConfig::markovian(100, 1.0, 1.0, -1.0, 1.0, 10.0);
        let s = serde_json::to_string(&c).unwrap();
        let back: SystemConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(c.with_n(101).hash(), c.hash());
        let minimal = r#"{"n": 4, "alpha": 1, "mu": 1, "beta": 0,
            "patience": {"mode": "no_scaling", "law": {"family": "exponential", "rate": 1}},
            "horizon": 5}"#;
        let c: SystemConfig = serde_json::from_str(minimal).unwrap();
        assert!(c.abandonment);
        assert_eq!(c.xi, XiSpec::Fixed(0.0));
    }

    #[test]
    fn initial_head_count() {
        let mut c = SystemConfig::markovian(100, 1.0, 1.0, 0.0, 1.0, 1.0);
        let mut s = RandomStream::new(0, 0, crate::inputs::Purpose::Initial);
        c.xi = XiSpec::Fixed(0.25);
        assert_eq!(c.model().unwrap().initial_count(&mut s), 103);
        c.xi = XiSpec::Fixed(-0.3);
        assert_eq!(c.model().unwrap().initial_count(&mut s), 97);
        c.xi = XiSpec::Fixed(-20.0);
        assert_eq!(c.model().unwrap().initial_count(&mut s), 0);
    }
}
