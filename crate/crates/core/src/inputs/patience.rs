//! Patience-time scaling: from a declarative spec to the per-system law
//! `F^n` and the limit function `f` with `√n F^n(x/√n) → f(x)`.

use serde::{Deserialize, Serialize};

use super::distribution::Distribution;
use super::func::ScalarFn;
use super::stream::RandomStream;
use super::InputError;
use crate::path::CadlagPath;

/// Right end of the grid on which `f` and `h` are probed for validity.
const PROBE_END: f64 = 50.0;
const PROBE_STEP: f64 = 1e-2;
/// Inverse searches give up (infinite patience) beyond this scaled time.
const INVERSE_CAP: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatienceSpec {
    /// `F^n = F` for every `n`.
    NoScaling { law: Distribution },
    /// `F^n(x) = 1 − exp(−∫₀ˣ h(√n t) dt)`.
    HazardRate { hazard: ScalarFn },
    /// `F^n(x) = min(1, f(√n x)/√n)`.
    DirectF { f: ScalarFn },
}

impl PatienceSpec {
    pub fn no_scaling(law: Distribution) -> Self {
        PatienceSpec::NoScaling { law }
    }

    pub fn hazard_rate(hazard: ScalarFn) -> Result<Self, InputError> {
        let spec = PatienceSpec::HazardRate { hazard };
        spec.validate()?;
        Ok(spec)
    }

    pub fn direct_f(f: ScalarFn) -> Result<Self, InputError> {
        let spec = PatienceSpec::DirectF { f };
        spec.validate()?;
        Ok(spec)
    }

    /// Exponential patience with rate `theta`, unscaled.
    pub fn exponential(theta: f64) -> Result<Self, InputError> {
        Ok(PatienceSpec::NoScaling {
            law: Distribution::exponential(theta)?,
        })
    }

    /// Checks the hazard (nonnegative, finite) or `f` (`f(0) = 0`,
    /// nondecreasing, finite slopes) on the probe grid.
    pub fn validate(&self) -> Result<(), InputError> {
        match self {
            PatienceSpec::NoScaling { .. } => Ok(()),
            PatienceSpec::HazardRate { hazard } => {
                hazard.check_shape()?;
                for x in probe_grid(hazard) {
                    let h = hazard.eval(x);
                    if !h.is_finite() || h < 0.0 {
                        return Err(InputError::invalid(format!(
                            "hazard rate must be finite and nonnegative (h({x}) = {h})"
                        )));
                    }
                }
                Ok(())
            }
            PatienceSpec::DirectF { f } => {
                f.check_shape()?;
                if f.eval(0.0) != 0.0 {
                    return Err(InputError::invalid("f(0) must be 0"));
                }
                let grid = probe_grid(f);
                let mut prev = 0.0;
                for w in grid.windows(2) {
                    let v = f.eval(w[1]);
                    let slope = (v - prev) / (w[1] - w[0]);
                    if !slope.is_finite() {
                        return Err(InputError::invalid(format!(
                            "f is not locally Lipschitz near x = {}",
                            w[1]
                        )));
                    }
                    if v < prev {
                        return Err(InputError::invalid(format!(
                            "f must be nondecreasing (decreases near x = {})",
                            w[1]
                        )));
                    }
                    prev = v;
                }
                Ok(())
            }
        }
    }

    /// The `n`-th system's patience law.
    pub fn law_for(&self, n: u64) -> Result<PatienceLaw, InputError> {
        if n == 0 {
            return Err(InputError::invalid("scale index n must be >= 1"));
        }
        self.validate()?;
        let sqrt_n = (n as f64).sqrt();
        let kind = match self {
            PatienceSpec::NoScaling { law } => LawKind::Unscaled(law.clone()),
            PatienceSpec::HazardRate { hazard } => LawKind::Hazard {
                cumulative: hazard.antiderivative(),
            },
            PatienceSpec::DirectF { f } => LawKind::Direct { f: f.clone() },
        };
        Ok(PatienceLaw { kind, sqrt_n })
    }

    /// The limit function `f`.
    ///
    /// Unscaled laws give `f(x) = F′(0)·x`; hazard scaling gives the
    /// cumulative hazard `∫₀ˣ h`.
    pub fn limit_fn(&self) -> ScalarFn {
        match self {
            PatienceSpec::NoScaling { law } => ScalarFn::linear(law.density_at_zero()),
            PatienceSpec::HazardRate { hazard } => hazard.antiderivative(),
            PatienceSpec::DirectF { f } => f.clone(),
        }
    }

    /// `f` tabulated on `grid` as a linearly interpolated path.
    pub fn limit_f(&self, grid: &[f64]) -> Result<CadlagPath, InputError> {
        if grid.first() != Some(&0.0) || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(InputError::invalid(
                "grid must start at 0 and be strictly increasing",
            ));
        }
        let f = self.limit_fn();
        let values = grid.iter().map(|&x| f.eval(x)).collect();
        CadlagPath::linear(grid.to_vec(), values)
            .map_err(|e| InputError::invalid(e.to_string()))
    }
}

fn probe_grid(f: &ScalarFn) -> Vec<f64> {
    let end = match f {
        ScalarFn::Table { x, .. } => x.last().copied().unwrap_or(0.0).max(PROBE_END),
        ScalarFn::Polynomial { .. } => PROBE_END,
    };
    let steps = (end / PROBE_STEP).ceil() as usize;
    (0..=steps).map(|i| i as f64 * end / steps as f64).collect()
}

#[derive(Debug, Clone)]
enum LawKind {
    Unscaled(Distribution),
    Hazard { cumulative: ScalarFn },
    Direct { f: ScalarFn },
}

/// Patience distribution of one system, with an inverse-transform sampler.
/// Laws whose distribution function stays below 1 put the remaining mass
/// at `+∞`.
#[derive(Debug, Clone)]
pub struct PatienceLaw {
    kind: LawKind,
    sqrt_n: f64,
}

impl PatienceLaw {
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            LawKind::Unscaled(d) => d.cdf(x),
            LawKind::Hazard { cumulative } => {
                -(-cumulative.eval(self.sqrt_n * x) / self.sqrt_n).exp_m1()
            }
            LawKind::Direct { f } => (f.eval(self.sqrt_n * x) / self.sqrt_n).min(1.0),
        }
    }

    /// One patience time, possibly `f64::INFINITY`.
    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        match &self.kind {
            LawKind::Unscaled(d) => d.sample(stream),
            LawKind::Hazard { cumulative } => {
                // F^n(x) ≥ u  ⇔  Λ(√n x) ≥ −√n ln(1 − u)
                let u = stream.open01();
                let level = -self.sqrt_n * (-u).ln_1p();
                cumulative
                    .inverse(level, INVERSE_CAP)
                    .map_or(f64::INFINITY, |y| y / self.sqrt_n)
            }
            LawKind::Direct { f } => {
                let u = stream.open01();
                f.inverse(self.sqrt_n * u, INVERSE_CAP)
                    .map_or(f64::INFINITY, |y| y / self.sqrt_n)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::stream::Purpose;

    #[test]
    fn no_scaling_ignores_n() {
        let spec = PatienceSpec::exponential(0.7).unwrap();
        for n in [1, 100, 10_000] {
            let law = spec.law_for(n).unwrap();
            for &x in &[0.1, 1.0, 3.0] {
                assert!((law.cdf(x) - (1.0 - (-0.7 * x).exp())).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_hazard_scaled_cdf_approaches_linear_limit() {
        let theta = 1.3;
        let spec = PatienceSpec::hazard_rate(ScalarFn::constant(theta)).unwrap();
        for &x in &[0.5, 1.0, 2.0] {
            let mut prev = f64::INFINITY;
            for n in [100u64, 10_000, 1_000_000] {
                let law = spec.law_for(n).unwrap();
                let s = (n as f64).sqrt();
                let err = (s * law.cdf(x / s) - theta * x).abs();
                assert!(err < prev, "not monotone at n={n}");
                assert!(err <= (theta * x).powi(2) / s, "n={n} err={err}");
                if (theta * x).powi(2) <= 2.0 {
                    assert!(err <= 1.0 / s);
                }
                prev = err;
            }
        }
    }

    #[test]
    fn direct_f_definition() {
        let spec = PatienceSpec::direct_f(ScalarFn::polynomial(vec![0.0, 0.0, 1.0])).unwrap();
        let law = spec.law_for(100).unwrap();
        assert!((law.cdf(0.05) - 0.025).abs() < 1e-15);
    }

    #[test]
    fn limit_f_special_cases() {
        let theta = 0.8;
        let spec = PatienceSpec::exponential(theta).unwrap();
        assert!((spec.limit_fn().eval(2.0) - 2.0 * theta).abs() < 1e-15);
        let haz = PatienceSpec::hazard_rate(ScalarFn::constant(theta)).unwrap();
        assert!((haz.limit_fn().eval(3.0) - 3.0 * theta).abs() < 1e-12);
        let haz2 = PatienceSpec::hazard_rate(ScalarFn::linear(2.0)).unwrap();
        let grid: Vec<f64> = (0..=3000).map(|i| i as f64 * 1e-3).collect();
        let path = haz2.limit_f(&grid).unwrap();
        assert!((path.eval(3.0) - 9.0).abs() < 1e-6);
    }

    #[test]
    fn f_validation() {
        assert!(PatienceSpec::direct_f(ScalarFn::constant(1.0)).is_err());
        assert!(PatienceSpec::direct_f(ScalarFn::polynomial(vec![0.0, 1.0, -1.0])).is_err());
        assert!(PatienceSpec::hazard_rate(ScalarFn::linear(-1.0)).is_err());
        assert!(PatienceSpec::direct_f(ScalarFn::linear(2.0)).is_ok());
    }

    #[test]
    fn no_atom_at_origin() {
        let specs = [
            PatienceSpec::exponential(1.0).unwrap(),
            PatienceSpec::hazard_rate(ScalarFn::constant(5.0)).unwrap(),
            PatienceSpec::direct_f(ScalarFn::linear(3.0)).unwrap(),
            PatienceSpec::no_scaling(Distribution::uniform(0.0, 1.0).unwrap()),
        ];
        for spec in &specs {
            assert_eq!(spec.law_for(400).unwrap().cdf(0.0), 0.0);
        }
    }

    #[test]
    fn bounded_f_yields_infinite_patience_mass() {
        let f = ScalarFn::table(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 1.0]).unwrap();
        let spec = PatienceSpec::direct_f(f).unwrap();
        // √n = 4: cdf saturates at f_max/√n = 0.25
        let law = spec.law_for(16).unwrap();
        let mut s = RandomStream::new(1, 0, Purpose::Patience);
        let inf = (0..4000).filter(|_| law.sample(&mut s).is_infinite()).count();
        assert!((inf as f64 / 4000.0 - 0.75).abs() < 0.03);
    }
}
