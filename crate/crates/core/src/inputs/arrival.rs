use serde::{Deserialize, Serialize};

use super::distribution::Distribution;
use super::InputError;

/// Interarrival law of the `n`-th system: a mean-one base law run at rate
/// `λ^n = nμ(1 + β/√n)`, so that `√n(λ^n/(nμ) − 1) = β` holds exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalSpec {
    base: Distribution,
}

impl ArrivalSpec {
    pub fn new(base: Distribution) -> Result<Self, InputError> {
        if (base.mean() - 1.0).abs() > 1e-9 {
            return Err(InputError::invalid(format!(
                "base interarrival law must have mean 1 (got {})",
                base.mean()
            )));
        }
        Ok(ArrivalSpec { base })
    }

    pub fn poisson() -> Self {
        ArrivalSpec {
            base: Distribution::exponential(1.0).unwrap(),
        }
    }

    pub fn base(&self) -> &Distribution {
        &self.base
    }

    /// `c_a²` of the interarrival law.
    pub fn scv(&self) -> f64 {
        self.base.scv()
    }

    pub fn rate(&self, n: u64, mu: f64, beta: f64) -> f64 {
        let n = n as f64;
        n * mu * (1.0 + beta / n.sqrt())
    }

    /// Interarrival law at rate `λ`.
    pub fn interarrival(&self, lambda: f64) -> Distribution {
        self.base.time_scaled(1.0 / lambda)
    }
}
