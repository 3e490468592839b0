//! Service-time distributions.
//!
//! Every law here has a closed-form moment sequence and Laplace–Stieltjes
//! transform, so the rest of the crate can check numerical results against
//! analytic values. All five kinds satisfy the Cramér condition: some
//! exponential moment `E e^{δX}` with `δ > 0` is finite.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of hyper-exponential weights.
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// The parametric family a [`ServiceDistribution`] belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kind {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Erlang { shape: u32, rate: f64 },
    HyperExponential { weights: Vec<f64>, rates: Vec<f64> },
    Uniform { lo: f64, hi: f64 },
}

/// A validated service-time law. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Kind", into = "Kind")]
pub struct ServiceDistribution {
    kind: Kind,
}

/// Value of the Laplace–Stieltjes transform `β(s) = E e^{-sX}` on the real axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Finite(f64),
    /// The defining integral diverges (`s ≤ -δ0`).
    Divergent,
}

impl Transform {
    pub fn finite(self) -> Option<f64> {
        match self {
            Transform::Finite(v) => Some(v),
            Transform::Divergent => None,
        }
    }

    pub fn is_divergent(self) -> bool {
        matches!(self, Transform::Divergent)
    }
}

/// Supremum of `δ` with `E e^{δX} < ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Abscissa {
    Finite(f64),
    /// Bounded support: every exponential moment exists.
    Infinite,
}

impl Abscissa {
    pub fn finite(self) -> Option<f64> {
        match self {
            Abscissa::Finite(v) => Some(v),
            Abscissa::Infinite => None,
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be a positive finite number, got {v}")))
    }
}

impl TryFrom<Kind> for ServiceDistribution {
    type Error = Error;

    fn try_from(kind: Kind) -> Result<Self> {
        match &kind {
            Kind::Exponential { rate } => positive("rate", *rate)?,
            Kind::Deterministic { value } => positive("value", *value)?,
            Kind::Erlang { shape, rate } => {
                if *shape == 0 {
                    return Err(Error::invalid("shape", "must be at least 1"));
                }
                positive("rate", *rate)?;
            }
            Kind::HyperExponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return Err(Error::invalid(
                        "w",
                        format!(
                            "need one weight per rate, got {} weights and {} rates",
                            weights.len(),
                            rates.len()
                        ),
                    ));
                }
                for &r in rates {
                    positive("rate", r)?;
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::invalid("w", "weights must be nonnegative"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(Error::invalid("w", format!("weights sum to {total}, not 1")));
                }
            }
            Kind::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && lo < hi) {
                    return Err(Error::invalid(
                        "lo",
                        format!("need 0 <= lo < hi, got lo={lo}, hi={hi}"),
                    ));
                }
            }
        }
        Ok(ServiceDistribution { kind })
    }
}

impl From<ServiceDistribution> for Kind {
    fn from(d: ServiceDistribution) -> Kind {
        d.kind
    }
}

impl ServiceDistribution {
    pub fn exponential(rate: f64) -> Result<Self> {
        Kind::Exponential { rate }.try_into()
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        Kind::Deterministic { value }.try_into()
    }

    pub fn erlang(shape: u32, rate: f64) -> Result<Self> {
        Kind::Erlang { shape, rate }.try_into()
    }

    pub fn hyper_exponential(weights: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        Kind::HyperExponential { weights, rates }.try_into()
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Kind::Uniform { lo, hi }.try_into()
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn mean(&self) -> f64 {
        self.moment(1).expect("first moment is always finite")
    }

    /// Exact raw moment `b_k = E X^k`.
    pub fn moment(&self, k: u32) -> Result<f64> {
        if k == 0 {
            return Err(Error::MomentOutOfRange {
                k,
                dist: self.to_string(),
            });
        }
        // k!/rate^k, accumulated as a running product so large rates do not
        // overflow before the factorial catches up.
        let exp_moment = |rate: f64| (1..=k).fold(1.0, |acc, j| acc * f64::from(j) / rate);
        let value = match &self.kind {
            Kind::Exponential { rate } => exp_moment(*rate),
            Kind::Deterministic { value } => value.powi(k as i32),
            Kind::Erlang { shape, rate } => (0..k).fold(1.0, |acc, j| {
                acc * (f64::from(*shape) + f64::from(j)) / rate
            }),
            Kind::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * exp_moment(*r))
                .sum(),
            Kind::Uniform { lo, hi } => {
                let k1 = f64::from(k + 1);
                (hi.powf(k1) - lo.powf(k1)) / (k1 * (hi - lo))
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::MomentOutOfRange {
                k,
                dist: self.to_string(),
            })
        }
    }

    /// Laplace–Stieltjes transform `β(s) = E e^{-sX}` for real `s`.
    pub fn lst(&self, s: f64) -> Transform {
        if let Abscissa::Finite(delta) = self.cramer_abscissa() {
            if s <= -delta {
                return Transform::Divergent;
            }
        }
        let value = match &self.kind {
            Kind::Exponential { rate } => rate / (rate + s),
            Kind::Deterministic { value } => (-s * value).exp(),
            Kind::Erlang { shape, rate } => (rate / (rate + s)).powi(*shape as i32),
            Kind::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r / (r + s))
                .sum(),
            Kind::Uniform { lo, hi } => {
                let width = hi - lo;
                if s == 0.0 {
                    1.0
                } else {
                    (-s * lo).exp() * (-(-s * width).exp_m1()) / (s * width)
                }
            }
        };
        Transform::Finite(value)
    }

    /// Convergence boundary `δ0` of the transform on the negative axis.
    pub fn cramer_abscissa(&self) -> Abscissa {
        match &self.kind {
            Kind::Exponential { rate } | Kind::Erlang { rate, .. } => Abscissa::Finite(*rate),
            Kind::HyperExponential { weights, rates } => Abscissa::Finite(
                weights
                    .iter()
                    .zip(rates)
                    .filter(|(w, _)| **w > 0.0)
                    .map(|(_, r)| *r)
                    .fold(f64::INFINITY, f64::min),
            ),
            Kind::Deterministic { .. } | Kind::Uniform { .. } => Abscissa::Infinite,
        }
    }

    /// Draw one service time.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            Kind::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            Kind::Deterministic { value } => *value,
            Kind::Erlang { shape, rate } => Gamma::new(f64::from(*shape), 1.0 / rate)
                .expect("validated shape and rate")
                .sample(rng),
            Kind::HyperExponential { weights, rates } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = rates[rates.len() - 1];
                for (w, r) in weights.iter().zip(rates) {
                    acc += w;
                    if u < acc {
                        chosen = *r;
                        break;
                    }
                }
                Exp::new(chosen).expect("validated rate").sample(rng)
            }
            Kind::Uniform { lo, hi } => rng.random_range(*lo..*hi),
        }
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("|")
}

impl fmt::Display for ServiceDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Exponential { rate } => write!(f, "exp:rate={rate}"),
            Kind::Deterministic { value } => write!(f, "det:value={value}"),
            Kind::Erlang { shape, rate } => write!(f, "erlang:shape={shape},rate={rate}"),
            Kind::HyperExponential { weights, rates } => {
                write!(f, "hyperexp:w={},rate={}", join(weights), join(rates))
            }
            Kind::Uniform { lo, hi } => write!(f, "uniform:lo={lo},hi={hi}"),
        }
    }
}

/// Parses the compact form used on the command line, e.g. `erlang:shape=2,rate=2.0`
/// or `hyperexp:w=0.3|0.7,rate=1.0|2.0`.
impl FromStr for ServiceDistribution {
    type Err = Error;

    fn from_str(input: &str) -> Result<Self> {
        let (name, params) = input
            .split_once(':')
            .ok_or_else(|| Error::parse(input, "expected `<kind>:<key>=<value>,...`"))?;
        let mut fields = Vec::new();
        for pair in params.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::parse(input, format!("`{pair}` is not key=value")))?;
            fields.push((key.trim(), value.trim()));
        }
        let get = |key: &str| -> Result<&str> {
            fields
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::parse(input, format!("missing `{key}`")))
        };
        let real = |key: &str| -> Result<f64> {
            let raw = get(key)?;
            raw.parse::<f64>()
                .map_err(|_| Error::parse(input, format!("`{key}={raw}` is not a number")))
        };
        let list = |key: &str| -> Result<Vec<f64>> {
            get(key)?
                .split('|')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(input, format!("`{v}` in `{key}` is not a number")))
                })
                .collect()
        };
        let allowed: &[&str] = match name.trim() {
            "exp" => &["rate"],
            "det" => &["value"],
            "erlang" => &["shape", "rate"],
            "hyperexp" => &["w", "rate"],
            "uniform" => &["lo", "hi"],
            other => return Err(Error::parse(input, format!("unknown distribution kind `{other}`"))),
        };
        if let Some((key, _)) = fields.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(Error::parse(input, format!("unexpected key `{key}`")));
        }
        match name.trim() {
            "exp" => Self::exponential(real("rate")?),
            "det" => Self::deterministic(real("value")?),
            "erlang" => {
                let raw = get("shape")?;
                let shape = raw
                    .parse::<u32>()
                    .map_err(|_| Error::parse(input, format!("shape `{raw}` is not a positive integer")))?;
                Self::erlang(shape, real("rate")?)
            }
            "hyperexp" => Self::hyper_exponential(list("w")?, list("rate")?),
            _ => Self::uniform(real("lo")?, real("hi")?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_kinds() -> Vec<ServiceDistribution> {
        vec![
            ServiceDistribution::exponential(1.0).unwrap(),
            ServiceDistribution::deterministic(1.0).unwrap(),
            ServiceDistribution::erlang(2, 2.0).unwrap(),
            ServiceDistribution::hyper_exponential(vec![0.3, 0.7], vec![1.0, 2.0]).unwrap(),
            ServiceDistribution::uniform(0.5, 1.5).unwrap(),
        ]
    }

    #[test]
    fn moments_of_named_examples() {
        let exp = ServiceDistribution::exponential(1.0).unwrap();
        assert_eq!(exp.moment(2).unwrap(), 2.0);
        let det = ServiceDistribution::deterministic(1.0).unwrap();
        assert_eq!(det.moment(3).unwrap(), 1.0);
        let erl = ServiceDistribution::erlang(2, 2.0).unwrap();
        assert_eq!(erl.moment(2).unwrap(), 1.5);
        let uni = ServiceDistribution::uniform(0.5, 1.5).unwrap();
        assert!((uni.moment(1).unwrap() - 1.0).abs() < 1e-15);
        assert!((uni.moment(2).unwrap() - (1.0 + 1.0 / 12.0)).abs() < 1e-15);
        let hyp = ServiceDistribution::hyper_exponential(vec![0.3, 0.7], vec![1.0, 2.0]).unwrap();
        assert!((hyp.moment(1).unwrap() - 0.65).abs() < 1e-15);
    }

    #[test]
    fn moment_order_zero_or_overflow_is_a_range_error() {
        let exp = ServiceDistribution::exponential(1.0).unwrap();
        assert!(matches!(exp.moment(0), Err(Error::MomentOutOfRange { .. })));
        assert!(matches!(exp.moment(200), Err(Error::MomentOutOfRange { .. })));
    }

    #[test]
    fn jensen_holds_for_every_kind() {
        for d in all_kinds() {
            let b1 = d.moment(1).unwrap();
            assert!(b1 > 0.0);
            assert!(d.moment(2).unwrap() >= b1 * b1 - 1e-15, "{d}");
        }
    }

    #[test]
    fn transform_examples() {
        let exp = ServiceDistribution::exponential(1.0).unwrap();
        assert_eq!(exp.lst(1.0), Transform::Finite(0.5));
        assert_eq!(exp.lst(-0.5), Transform::Finite(2.0));
        assert_eq!(exp.lst(-1.5), Transform::Divergent);
        assert_eq!(exp.lst(-1.0), Transform::Divergent);
        for d in all_kinds() {
            assert_eq!(d.lst(0.0), Transform::Finite(1.0), "{d}");
        }
    }

    #[test]
    fn abscissa_examples() {
        let exp = ServiceDistribution::exponential(1.0).unwrap();
        assert_eq!(exp.cramer_abscissa(), Abscissa::Finite(1.0));
        let det = ServiceDistribution::deterministic(1.0).unwrap();
        assert_eq!(det.cramer_abscissa(), Abscissa::Infinite);
        let erl = ServiceDistribution::erlang(2, 2.0).unwrap();
        assert_eq!(erl.cramer_abscissa(), Abscissa::Finite(2.0));
        let hyp = ServiceDistribution::hyper_exponential(vec![0.3, 0.7], vec![1.0, 2.0]).unwrap();
        assert_eq!(hyp.cramer_abscissa(), Abscissa::Finite(1.0));
        let uni = ServiceDistribution::uniform(0.5, 1.5).unwrap();
        assert_eq!(uni.cramer_abscissa(), Abscissa::Infinite);
    }

    #[test]
    fn abscissa_is_the_transform_boundary() {
        let eps = 1e-6;
        for d in all_kinds() {
            if let Abscissa::Finite(delta) = d.cramer_abscissa() {
                assert!(d.lst(-delta + eps).finite().unwrap().is_finite(), "{d}");
                assert!(d.lst(-delta - eps).is_divergent(), "{d}");
            }
        }
    }

    #[test]
    fn moments_match_transform_derivatives() {
        // Central differences of order k at s = 0, step 1e-3.
        let h = 1e-3;
        let b = |d: &ServiceDistribution, s: f64| d.lst(s).finite().unwrap();
        for d in all_kinds() {
            let d1 = (b(&d, h) - b(&d, -h)) / (2.0 * h);
            let d2 = (b(&d, h) - 2.0 * b(&d, 0.0) + b(&d, -h)) / (h * h);
            let d3 = (b(&d, 2.0 * h) - 2.0 * b(&d, h) + 2.0 * b(&d, -h) - b(&d, -2.0 * h))
                / (2.0 * h * h * h);
            for (k, deriv) in [(1, -d1), (2, d2), (3, -d3)] {
                let m = d.moment(k).unwrap();
                assert!(((deriv - m) / m).abs() < 1e-4, "{d} k={k}: {deriv} vs {m}");
            }
        }
    }

    #[test]
    fn monte_carlo_transform_agrees_within_three_standard_errors() {
        let n = 200_000;
        for d in all_kinds() {
            let lower = match d.cramer_abscissa() {
                // keeps E e^{-2sX} finite so the standard error exists
                Abscissa::Finite(delta) => -0.4 * delta,
                Abscissa::Infinite => -1.0,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let samples: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            for i in 0..=6 {
                let s = lower + (5.0 - lower) * f64::from(i) / 6.0;
                let vals: Vec<f64> = samples.iter().map(|x| (-s * x).exp()).collect();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                let exact = d.lst(s).finite().unwrap();
                assert!(
                    // naive summation of n terms drifts by up to n·ε relative
                    (mean - exact).abs() <= 3.0 * se + n as f64 * f64::EPSILON * exact,
                    "{d} s={s}: mc {mean} ± {se} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn deterministic_sample_is_its_value() {
        let det = ServiceDistribution::deterministic(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        assert_eq!(det.sample(&mut rng), 1.0);
    }

    #[test]
    fn sampling_is_reproducible() {
        let exp = ServiceDistribution::exponential(1.0).unwrap();
        let a = exp.sample(&mut ChaCha8Rng::seed_from_u64(99));
        let b = exp.sample(&mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn exponential_sample_mean_obeys_law_of_large_numbers() {
        let exp = ServiceDistribution::exponential(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let mean = (0..n).map(|_| exp.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn spec_strings_parse() {
        let cases = [
            ("exp:rate=1.0", ServiceDistribution::exponential(1.0).unwrap()),
            ("det:value=1.0", ServiceDistribution::deterministic(1.0).unwrap()),
            ("erlang:shape=2,rate=2.0", ServiceDistribution::erlang(2, 2.0).unwrap()),
            (
                "hyperexp:w=0.3|0.7,rate=1.0|2.0",
                ServiceDistribution::hyper_exponential(vec![0.3, 0.7], vec![1.0, 2.0]).unwrap(),
            ),
            ("uniform:lo=0.5,hi=1.5", ServiceDistribution::uniform(0.5, 1.5).unwrap()),
        ];
        for (text, expected) in cases {
            let parsed: ServiceDistribution = text.parse().unwrap();
            assert_eq!(parsed, expected);
            assert_eq!(parsed.to_string().parse::<ServiceDistribution>().unwrap(), expected);
        }
    }

    #[test]
    fn bad_spec_strings_are_rejected() {
        for bad in [
            "exp",
            "exp:rate=-1",
            "exp:rate=abc",
            "pareto:alpha=2",
            "erlang:shape=0,rate=1",
            "erlang:shape=1.5,rate=1",
            "hyperexp:w=0.3|0.6,rate=1|2",
            "hyperexp:w=0.3,rate=1|2",
            "uniform:lo=2,hi=1",
            "exp:rate=1,extra=3",
        ] {
            assert!(bad.parse::<ServiceDistribution>().is_err(), "{bad}");
        }
    }

    #[test]
    fn serde_round_trip_revalidates() {
        let d = ServiceDistribution::erlang(3, 1.5).unwrap();
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<ServiceDistribution>(&json).unwrap(), d);
        assert!(serde_json::from_str::<ServiceDistribution>(r#"{"kind":"exponential","rate":-2.0}"#).is_err());
    }
}
