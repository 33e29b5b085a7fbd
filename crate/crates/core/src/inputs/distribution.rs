use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::func::bisect;
use super::stream::RandomStream;
use super::InputError;

/// Unvalidated parameters, as they appear in experiment files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RawDistribution {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Erlang { stages: u32, rate: f64 },
    Hyperexponential { probs: Vec<f64>, rates: Vec<f64> },
    Lognormal { mu: f64, sigma: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// A nonnegative law with finite positive mean. Parameters are checked
/// at construction, so sampling never fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct Distribution(RawDistribution);

impl TryFrom<RawDistribution> for Distribution {
    type Error = InputError;

    fn try_from(raw: RawDistribution) -> Result<Self, InputError> {
        let finite = |v: f64| v.is_finite();
        match &raw {
            RawDistribution::Exponential { rate } => {
                if !(finite(*rate) && *rate > 0.0) {
                    return Err(InputError::invalid("exponential rate must be > 0"));
                }
            }
            RawDistribution::Deterministic { value } => {
                if !(finite(*value) && *value > 0.0) {
                    // a point mass at 0 is an atom at the origin
                    return Err(InputError::invalid("deterministic value must be > 0"));
                }
            }
            RawDistribution::Erlang { stages, rate } => {
                if *stages < 1 || !(finite(*rate) && *rate > 0.0) {
                    return Err(InputError::invalid("erlang needs stages >= 1 and rate > 0"));
                }
            }
            RawDistribution::Hyperexponential { probs, rates } => {
                if probs.is_empty() || probs.len() != rates.len() {
                    return Err(InputError::invalid(
                        "hyperexponential needs equally many probs and rates",
                    ));
                }
                if probs.iter().any(|p| !(finite(*p) && (0.0..=1.0).contains(p))) {
                    return Err(InputError::invalid("hyperexponential probs must lie in [0, 1]"));
                }
                if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(InputError::invalid("hyperexponential probs must sum to 1"));
                }
                if rates.iter().any(|r| !(finite(*r) && *r > 0.0)) {
                    return Err(InputError::invalid("hyperexponential rates must be > 0"));
                }
            }
            RawDistribution::Lognormal { mu, sigma } => {
                if !(finite(*mu) && finite(*sigma) && *sigma > 0.0) {
                    return Err(InputError::invalid("lognormal needs finite mu and sigma > 0"));
                }
            }
            RawDistribution::Uniform { lo, hi } => {
                if !(finite(*lo) && finite(*hi) && *lo >= 0.0 && lo < hi) {
                    return Err(InputError::invalid("uniform needs 0 <= lo < hi"));
                }
            }
        }
        Ok(Distribution(raw))
    }
}

impl From<Distribution> for RawDistribution {
    fn from(d: Distribution) -> Self {
        d.0
    }
}

impl Distribution {
    pub fn exponential(rate: f64) -> Result<Self, InputError> {
        RawDistribution::Exponential { rate }.try_into()
    }

    pub fn deterministic(value: f64) -> Result<Self, InputError> {
        RawDistribution::Deterministic { value }.try_into()
    }

    pub fn erlang(stages: u32, rate: f64) -> Result<Self, InputError> {
        RawDistribution::Erlang { stages, rate }.try_into()
    }

    pub fn hyperexponential(probs: Vec<f64>, rates: Vec<f64>) -> Result<Self, InputError> {
        RawDistribution::Hyperexponential { probs, rates }.try_into()
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self, InputError> {
        RawDistribution::Lognormal { mu, sigma }.try_into()
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self, InputError> {
        RawDistribution::Uniform { lo, hi }.try_into()
    }

    /// Short family name, e.g. `"erlang"`.
    pub fn family(&self) -> &'static str {
        match self.0 {
            RawDistribution::Exponential { .. } => "exponential",
            RawDistribution::Deterministic { .. } => "deterministic",
            RawDistribution::Erlang { .. } => "erlang",
            RawDistribution::Hyperexponential { .. } => "hyperexponential",
            RawDistribution::Lognormal { .. } => "lognormal",
            RawDistribution::Uniform { .. } => "uniform",
        }
    }

    pub fn exponential_rate(&self) -> Option<f64> {
        match self.0 {
            RawDistribution::Exponential { rate } => Some(rate),
            RawDistribution::Erlang { stages: 1, rate } => Some(rate),
            _ => None,
        }
    }

    pub fn deterministic_value(&self) -> Option<f64> {
        match self.0 {
            RawDistribution::Deterministic { value } => Some(value),
            _ => None,
        }
    }

    /// Erlang `(stages, rate)` parameters, if the law is Erlang or exponential.
    pub fn erlang_params(&self) -> Option<(u32, f64)> {
        match self.0 {
            RawDistribution::Exponential { rate } => Some((1, rate)),
            RawDistribution::Erlang { stages, rate } => Some((stages, rate)),
            _ => None,
        }
    }

    /// Mixture components `(prob, rate)` for hyperexponential laws.
    pub fn hyperexponential_parts(&self) -> Option<Vec<(f64, f64)>> {
        match &self.0 {
            RawDistribution::Hyperexponential { probs, rates } => {
                Some(probs.iter().copied().zip(rates.iter().copied()).collect())
            }
            _ => None,
        }
    }

    pub fn uniform_bounds(&self) -> Option<(f64, f64)> {
        match self.0 {
            RawDistribution::Uniform { lo, hi } => Some((lo, hi)),
            _ => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.0 {
            RawDistribution::Exponential { rate } => 1.0 / rate,
            RawDistribution::Deterministic { value } => *value,
            RawDistribution::Erlang { stages, rate } => *stages as f64 / rate,
            RawDistribution::Hyperexponential { probs, rates } => {
                probs.iter().zip(rates).map(|(p, r)| p / r).sum()
            }
            RawDistribution::Lognormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            RawDistribution::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn variance(&self) -> f64 {
        match &self.0 {
            RawDistribution::Exponential { rate } => 1.0 / (rate * rate),
            RawDistribution::Deterministic { .. } => 0.0,
            RawDistribution::Erlang { stages, rate } => *stages as f64 / (rate * rate),
            RawDistribution::Hyperexponential { probs, rates } => {
                let second: f64 = probs.iter().zip(rates).map(|(p, r)| 2.0 * p / (r * r)).sum();
                second - self.mean().powi(2)
            }
            RawDistribution::Lognormal { mu, sigma } => {
                let s2 = sigma * sigma;
                (s2.exp() - 1.0) * (2.0 * mu + s2).exp()
            }
            RawDistribution::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
        }
    }

    /// Squared coefficient of variation.
    pub fn scv(&self) -> f64 {
        self.variance() / self.mean().powi(2)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match &self.0 {
            RawDistribution::Exponential { rate } => -(-rate * x).exp_m1(),
            RawDistribution::Deterministic { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            RawDistribution::Erlang { stages, rate } => erlang_cdf(*stages, *rate, x),
            RawDistribution::Hyperexponential { probs, rates } => probs
                .iter()
                .zip(rates)
                .map(|(p, r)| -p * (-r * x).exp_m1())
                .sum(),
            RawDistribution::Lognormal { mu, sigma } => {
                if x == 0.0 {
                    0.0
                } else {
                    normal_cdf((x.ln() - mu) / sigma)
                }
            }
            RawDistribution::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        match &self.0 {
            RawDistribution::Exponential { rate } => (-rate * x.max(0.0)).exp(),
            RawDistribution::Lognormal { mu, sigma } if x > 0.0 => {
                normal_cdf(-(x.ln() - mu) / sigma)
            }
            _ => 1.0 - self.cdf(x),
        }
    }

    /// Right derivative of the distribution function at the origin.
    pub fn density_at_zero(&self) -> f64 {
        match &self.0 {
            RawDistribution::Exponential { rate } => *rate,
            RawDistribution::Deterministic { .. } => 0.0,
            RawDistribution::Erlang { stages, rate } => {
                if *stages == 1 {
                    *rate
                } else {
                    0.0
                }
            }
            RawDistribution::Hyperexponential { probs, rates } => {
                probs.iter().zip(rates).map(|(p, r)| p * r).sum()
            }
            RawDistribution::Lognormal { .. } => 0.0,
            RawDistribution::Uniform { lo, hi } => {
                if *lo == 0.0 {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
        }
    }

    /// Generalized inverse `inf{x : F(x) ≥ u}` for `u ∈ (0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match &self.0 {
            RawDistribution::Exponential { rate } => -(-u).ln_1p() / rate,
            RawDistribution::Deterministic { value } => *value,
            RawDistribution::Uniform { lo, hi } => lo + u * (hi - lo),
            _ => {
                let mut hi = self.mean().max(1e-300);
                while self.cdf(hi) < u {
                    hi *= 2.0;
                }
                bisect(|x| self.cdf(x) >= u, 0.0, hi)
            }
        }
    }

    /// One variate. Exponential-type families use inversion or sums of
    /// inverted exponentials; lognormal uses a standard normal draw.
    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        match &self.0 {
            RawDistribution::Exponential { rate } => -stream.open01().ln() / rate,
            RawDistribution::Deterministic { value } => *value,
            RawDistribution::Erlang { stages, rate } => {
                let mut acc = 0.0;
                for _ in 0..*stages {
                    acc -= stream.open01().ln();
                }
                acc / rate
            }
            RawDistribution::Hyperexponential { probs, rates } => {
                let u = stream.open01();
                let mut cum = 0.0;
                let mut pick = rates.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    cum += p;
                    if u <= cum {
                        pick = i;
                        break;
                    }
                }
                -stream.open01().ln() / rates[pick]
            }
            RawDistribution::Lognormal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(stream);
                (mu + sigma * z).exp()
            }
            RawDistribution::Uniform { lo, hi } => lo + (hi - lo) * stream.open01(),
        }
    }

    /// The same family with every variate multiplied by `factor > 0`.
    pub fn time_scaled(&self, factor: f64) -> Distribution {
        let raw = match &self.0 {
            RawDistribution::Exponential { rate } => RawDistribution::Exponential {
                rate: rate / factor,
            },
            RawDistribution::Deterministic { value } => RawDistribution::Deterministic {
                value: value * factor,
            },
            RawDistribution::Erlang { stages, rate } => RawDistribution::Erlang {
                stages: *stages,
                rate: rate / factor,
            },
            RawDistribution::Hyperexponential { probs, rates } => {
                RawDistribution::Hyperexponential {
                    probs: probs.clone(),
                    rates: rates.iter().map(|r| r / factor).collect(),
                }
            }
            RawDistribution::Lognormal { mu, sigma } => RawDistribution::Lognormal {
                mu: mu + factor.ln(),
                sigma: *sigma,
            },
            RawDistribution::Uniform { lo, hi } => RawDistribution::Uniform {
                lo: lo * factor,
                hi: hi * factor,
            },
        };
        Distribution(raw)
    }
}

fn erlang_cdf(stages: u32, rate: f64, x: f64) -> f64 {
    let rx = rate * x;
    if stages == 1 {
        return -(-rx).exp_m1();
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..stages {
        term *= rx / j as f64;
        sum += term;
    }
    (1.0 - (-rx).exp() * sum).clamp(0.0, 1.0)
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::stream::Purpose;

    fn stream() -> RandomStream {
        RandomStream::new(11, 0, Purpose::Services)
    }

    #[test]
    fn deterministic_is_a_point_mass() {
        let d = Distribution::deterministic(2.5).unwrap();
        let mut s = stream();
        assert!((0..100).all(|_| d.sample(&mut s) == 2.5));
    }

    #[test]
    fn exponential_mean_within_three_sigma() {
        // sd of the mean of 10^6 Exp(2) draws is 0.5e-3; 3σ = 1.5e-3 < 0.002
        let d = Distribution::exponential(2.0).unwrap();
        let mut s = stream();
        let n = 1_000_000;
        let mean = (0..n).map(|_| d.sample(&mut s)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.002, "mean {mean}");
    }

    #[test]
    fn erlang_variance_matches_sum_of_exponentials() {
        let d = Distribution::erlang(2, 4.0).unwrap();
        assert!((d.variance() - 0.125).abs() < 1e-15);
        let mut s = stream();
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut s)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((v - 0.125).abs() < 0.002, "variance {v}");
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(Distribution::exponential(0.0).is_err());
        assert!(Distribution::deterministic(0.0).is_err());
        assert!(Distribution::erlang(0, 1.0).is_err());
        assert!(Distribution::hyperexponential(vec![0.5, 0.4], vec![1.0, 2.0]).is_err());
        assert!(Distribution::hyperexponential(vec![1.5, -0.5], vec![1.0, 2.0]).is_err());
        assert!(Distribution::uniform(1.0, 1.0).is_err());
        assert!(Distribution::uniform(-1.0, 1.0).is_err());
        assert!(Distribution::lognormal(0.0, 0.0).is_err());
    }

    #[test]
    fn parses_json_and_rejects_unknown_fields() {
        let d: Distribution = serde_json::from_str(r#"{"family":"exponential","rate":1.0}"#).unwrap();
        assert_eq!(d, Distribution::exponential(1.0).unwrap());
        assert!(serde_json::from_str::<Distribution>(r#"{"family":"exponential","rate":-1.0}"#)
            .is_err());
        assert!(serde_json::from_str::<Distribution>(
            r#"{"family":"exponential","rate":1.0,"shape":2}"#
        )
        .is_err());
        let back = serde_json::to_string(&d).unwrap();
        assert_eq!(back, r#"{"family":"exponential","rate":1.0}"#);
    }

    #[test]
    fn density_at_zero_per_family() {
        assert_eq!(Distribution::exponential(3.0).unwrap().density_at_zero(), 3.0);
        assert_eq!(Distribution::uniform(0.0, 4.0).unwrap().density_at_zero(), 0.25);
        assert_eq!(Distribution::uniform(1.0, 4.0).unwrap().density_at_zero(), 0.0);
        assert_eq!(Distribution::erlang(2, 3.0).unwrap().density_at_zero(), 0.0);
        assert_eq!(Distribution::lognormal(0.0, 1.0).unwrap().density_at_zero(), 0.0);
        let h = Distribution::hyperexponential(vec![0.25, 0.75], vec![1.0, 2.0]).unwrap();
        assert!((h.density_at_zero() - 1.75).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for d in [
            Distribution::erlang(3, 2.0).unwrap(),
            Distribution::lognormal(0.2, 0.7).unwrap(),
            Distribution::hyperexponential(vec![0.3, 0.7], vec![0.5, 4.0]).unwrap(),
        ] {
            for &u in &[0.01, 0.3, 0.5, 0.9, 0.999] {
                let x = d.quantile(u);
                assert!((d.cdf(x) - u).abs() < 1e-9, "{} u={u}", d.family());
            }
        }
    }

    #[test]
    fn time_scaling_scales_mean() {
        for d in [
            Distribution::erlang(3, 2.0).unwrap(),
            Distribution::lognormal(0.2, 0.7).unwrap(),
            Distribution::uniform(0.5, 1.0).unwrap(),
            Distribution::deterministic(2.0).unwrap(),
        ] {
            let s = d.time_scaled(0.25);
            assert!((s.mean() - 0.25 * d.mean()).abs() < 1e-12);
            assert!((s.scv() - d.scv()).abs() < 1e-9);
        }
    }
}
