//! Busy periods and regeneration cycles of the M/G/1 queue.
//!
//! The busy-period transform `π(s) = E e^{-sτ}` is the minimal root of
//! `π(s) = β(s + λ(1 − π(s)))`. Iterating from `g_0 = 0` climbs monotonically
//! to that root. The same iteration with `s` replaced by `-s` probes the
//! exponential moments `E e^{sτ}` and locates where they stop existing.

use serde::{Deserialize, Serialize};

use crate::dist::{Abscissa, ServiceDistribution, Transform};
use crate::error::{Error, Result};

/// Iteration cap for every fixed-point loop in this module.
pub const MAX_ITERATIONS: usize = 1_000_000;

/// Margin above `-δ0` below which an LST argument counts as divergent.
const DIVERGENCE_MARGIN: f64 = 1e-12;

/// Relative step size at which the growing iteration is taken as converged.
const CLASSIFY_TOL: f64 = 1e-14;

/// Poisson arrivals at rate `lambda` into a single FIFO server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueModel {
    lambda: f64,
    service: ServiceDistribution,
}

impl QueueModel {
    /// Rejects non-positive rates and loads `ρ = λ·b1 ≥ 1`.
    pub fn new(lambda: f64, service: ServiceDistribution) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid("lambda", format!("must be positive, got {lambda}")));
        }
        let rho = lambda * service.mean();
        if rho >= 1.0 {
            return Err(Error::Unstable { rho });
        }
        Ok(QueueModel { lambda, service })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn service(&self) -> &ServiceDistribution {
        &self.service
    }

    pub fn rho(&self) -> f64 {
        self.lambda * self.service.mean()
    }

    /// `Some(μ)` when the service law is exponential.
    pub fn exponential_service_rate(&self) -> Option<f64> {
        match self.service.kind() {
            crate::dist::Kind::Exponential { rate } => Some(*rate),
            _ => None,
        }
    }

    /// `E τ = b1/(1 − ρ)`.
    pub fn busy_mean(&self) -> f64 {
        self.service.mean() / (1.0 - self.rho())
    }

    /// `E τ² = b2/(1 − ρ)³`.
    pub fn busy_second_moment(&self) -> f64 {
        let b2 = self.service.moment(2).expect("second moment is finite for every kind");
        b2 / (1.0 - self.rho()).powi(3)
    }

    /// Analytic moments of the idle-plus-busy regeneration cycle.
    pub fn cycle_moments(&self) -> CycleMoments {
        let idle_mean = 1.0 / self.lambda;
        let idle_second = 2.0 / (self.lambda * self.lambda);
        let busy_mean = self.busy_mean();
        CycleMoments {
            busy_mean,
            cycle_mean: idle_mean + busy_mean,
            cycle_second: idle_second + 2.0 * idle_mean * busy_mean + self.busy_second_moment(),
            source: MomentSource::Analytic,
        }
    }

    fn service_lst(&self, arg: f64) -> Transform {
        self.service.lst(arg)
    }

    /// Busy-period transform `π(s)` for `s ≥ 0`, iterated from below to `tol`.
    pub fn busy_lst(&self, s: f64, tol: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::invalid("s", format!("busy_lst needs s >= 0, got {s}")));
        }
        if !(tol > 0.0) {
            return Err(Error::invalid("tol", format!("must be positive, got {tol}")));
        }
        let mut g = 0.0;
        for _ in 0..MAX_ITERATIONS {
            let next = self
                .service_lst(s + self.lambda * (1.0 - g))
                .finite()
                .expect("nonnegative argument is inside the convergence region");
            if (next - g).abs() < tol {
                return Ok(next);
            }
            g = next;
        }
        Err(Error::IterationLimit {
            iterations: MAX_ITERATIONS,
            last: g,
        })
    }

    /// Exponential moment `E e^{sτ} = π(−s)` for `s ≥ 0`, or
    /// [`Transform::Divergent`] when it does not exist.
    ///
    /// Runs `g ← β(−s + λ(1 − g))` from `g = 0`. The iterates increase; they
    /// either settle (finite) or push the argument past `−δ0`, overflow, or
    /// are still growing at the iteration cap (divergent).
    pub fn busy_exponential_moment(&self, s: f64) -> Transform {
        let floor = match self.service.cramer_abscissa() {
            Abscissa::Finite(delta) => -delta + DIVERGENCE_MARGIN,
            Abscissa::Infinite => f64::NEG_INFINITY,
        };
        let mut g = 0.0;
        for _ in 0..MAX_ITERATIONS {
            let arg = -s + self.lambda * (1.0 - g);
            if arg < floor {
                return Transform::Divergent;
            }
            let next = match self.service_lst(arg) {
                Transform::Finite(v) if v.is_finite() && v < 1e300 => v,
                _ => return Transform::Divergent,
            };
            if (next - g).abs() <= CLASSIFY_TOL * next.max(1.0) {
                return Transform::Finite(next);
            }
            g = next;
        }
        Transform::Divergent
    }

    /// Cramér abscissa of the busy period, located by bisection to within `tol`.
    pub fn busy_cramer_abscissa(&self, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::invalid("tol", format!("must be positive, got {tol}")));
        }
        let finite = |s: f64| !self.busy_exponential_moment(s).is_divergent();
        // τ is at least one service time, so E e^{δ0 τ} = ∞.
        let mut hi = match self.service.cramer_abscissa() {
            Abscissa::Finite(delta) => delta,
            Abscissa::Infinite => {
                let mut hi = 1.0;
                while finite(hi) {
                    hi *= 2.0;
                }
                hi
            }
        };
        let mut lo = 0.0;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if finite(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Where a set of cycle moments came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    Analytic,
    Simulated,
}

/// First two moments of the regeneration cycle `ζ = idle + busy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleMoments {
    pub busy_mean: f64,
    /// `μ = E ζ`.
    pub cycle_mean: f64,
    /// `μ2 = E ζ²`.
    pub cycle_second: f64,
    pub source: MomentSource,
}

impl CycleMoments {
    /// Sample moments from `(busy_length, cycle_length)` pairs.
    pub fn from_samples<I>(samples: I) -> Option<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let (mut n, mut busy, mut cycle, mut cycle_sq) = (0usize, 0.0, 0.0, 0.0);
        for (b, c) in samples {
            n += 1;
            busy += b;
            cycle += c;
            cycle_sq += c * c;
        }
        if n == 0 {
            return None;
        }
        let n = n as f64;
        Some(CycleMoments {
            busy_mean: busy / n,
            cycle_mean: cycle / n,
            cycle_second: cycle_sq / n,
            source: MomentSource::Simulated,
        })
    }

    /// Constant term `μ2/(2μ²)` of the renewal-function asymptote.
    pub fn renewal_offset(&self) -> f64 {
        self.cycle_second / (2.0 * self.cycle_mean * self.cycle_mean)
    }
}
