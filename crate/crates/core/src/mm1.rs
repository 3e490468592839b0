//! Exact transient analysis of the M/M/1 queue started empty.
//!
//! With `y = √(μ/λ)`, `x = 2√(λμ)·t` and `θ = (√μ − √λ)²`,
//!
//! ```text
//! P_n(t) = e^{-(λ+μ)t} [ y^{-n} I_n(x) + y^{-n+1} I_{n+1}(x)
//!                        + (1 − ρ) ρ^n Σ_{k≥n+2} y^k I_k(x) ]
//! ```
//!
//! and `e^{-(λ+μ)t} I_k(x) = e^{-θt} · e^{-x} I_k(x)`, so everything is
//! evaluated with exponentially scaled Bessel functions in log space. Nothing
//! overflows for `t` into the tens of thousands.

use serde::{Deserialize, Serialize};

use crate::busy::QueueModel;
use crate::error::{Error, Result};

/// Cap on the number of queue-length terms summed for `φ(t)`.
pub const MAX_TERMS: usize = 100_000;

/// Target bound on the neglected part of the `φ(t)` series.
pub const PHI_TAIL_TOL: f64 = 1e-10;

/// Target bound on the neglected probability mass in [`Mm1Model::distribution`].
const MASS_TAIL_TOL: f64 = 1e-14;

/// Relative size below which a Bessel tail term counts as negligible.
const TAIL_TERM_TOL: f64 = 1e-16;

/// Consecutive negligible terms required to stop the Bessel tail sum.
const TAIL_RUN: usize = 5;

/// Largest Bessel order the tail sum may reach.
const MAX_BESSEL_ORDER: usize = 10_000_000;

/// Backward-recurrence start order for argument `x`.
fn start_order(x: f64) -> usize {
    (x + 40.0 * x.sqrt() + 40.0).ceil() as usize
}

/// `ln(e^{-x} I_k(x))` for `k = 0..=n_max`.
///
/// Runs Miller's backward recurrence on the ratios `r_k = I_k/I_{k-1}`,
/// `r_k = 1/(2k/x + r_{k+1})`, from a start order well past both `n_max` and
/// the bulk of the sequence, then normalises with `e^x = I_0 + 2 Σ_{k≥1} I_k`.
/// Orders whose value underflows come back as `-∞`.
pub fn log_bessel_i_scaled_seq(n_max: usize, x: f64) -> Vec<f64> {
    assert!(x >= 0.0, "bessel argument must be nonnegative, got {x}");
    if x == 0.0 {
        let mut out = vec![f64::NEG_INFINITY; n_max + 1];
        out[0] = 0.0;
        return out;
    }
    let start = start_order(x).max(n_max + 40);
    let mut ratios = vec![0.0; start + 1];
    let mut next = 0.0;
    for k in (1..=start).rev() {
        next = 1.0 / (2.0 * k as f64 / x + next);
        ratios[k] = next;
    }
    // S = 1 + 2 Σ_k Π_{j≤k} r_j, summed from the top so small terms go first
    // and the nested form never forms the products explicitly.
    let mut tail = 0.0;
    for k in (1..=start).rev() {
        tail = ratios[k] * (1.0 + tail);
    }
    let log_i0 = -(1.0 + 2.0 * tail).ln();
    let mut out = Vec::with_capacity(n_max + 1);
    let mut acc = log_i0;
    out.push(acc);
    for r in &ratios[1..=n_max] {
        acc += r.ln();
        out.push(acc);
    }
    out
}

/// `e^{-x} I_k(x)` for `k = 0..=n_max`.
pub fn bessel_i_scaled_seq(n_max: usize, x: f64) -> Vec<f64> {
    log_bessel_i_scaled_seq(n_max, x).into_iter().map(f64::exp).collect()
}

/// Exponentially scaled modified Bessel function of the first kind, `e^{-x} I_n(x)`.
pub fn bessel_i_scaled(n: usize, x: f64) -> f64 {
    log_bessel_i_scaled_seq(n, x)[n].exp()
}

/// M/M/1 queue with arrival rate `lambda` and service rate `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mm1Model {
    lambda: f64,
    mu: f64,
}

impl Mm1Model {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("mu", mu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        let rho = lambda / mu;
        if rho >= 1.0 {
            return Err(Error::Unstable { rho });
        }
        Ok(Mm1Model { lambda, mu })
    }

    /// The M/M/1 special case of a general model, if its service is exponential.
    pub fn from_queue(model: &QueueModel) -> Option<Self> {
        model
            .exponential_service_rate()
            .map(|mu| Mm1Model { lambda: model.lambda(), mu })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }

    /// Decay rate `(√μ − √λ)² = λ + μ − 2√(λμ)` of the transient terms.
    pub fn theoretical_rate(&self) -> f64 {
        (self.mu.sqrt() - self.lambda.sqrt()).powi(2)
    }

    /// Stationary mean workload `ρ/(μ(1 − ρ))`.
    pub fn stationary_workload(&self) -> f64 {
        let rho = self.rho();
        rho / (self.mu * (1.0 - rho))
    }

    /// Queue-length law at time `t`, covering all states up to an index past
    /// which at most `1e-14` of the mass remains.
    pub fn distribution(&self, t: f64) -> Result<Vec<f64>> {
        let n_max = self.tail_index(|k| self.rho().powf(k as f64 + 1.0), MASS_TAIL_TOL)?;
        Ok(TransientLaw::new(*self, t, n_max)?.probabilities())
    }

    /// `P(N(t) = n)` for the queue started empty.
    pub fn pn_t(&self, n: usize, t: f64) -> Result<f64> {
        Ok(TransientLaw::new(*self, t, n)?.pn(n))
    }

    /// Smallest `K` whose stationary tail bound `bound(K)` is below `tol`.
    ///
    /// The queue started empty is stochastically dominated by the stationary
    /// geometric law, so stationary tails bound the transient ones.
    fn tail_index(&self, bound: impl Fn(usize) -> f64, tol: f64) -> Result<usize> {
        let mut k = 0;
        while bound(k) >= tol {
            k += 1;
            if k > MAX_TERMS {
                return Err(Error::Truncation {
                    achieved: bound(k),
                    terms: k,
                });
            }
        }
        Ok(k)
    }

    /// Exact transient mean virtual waiting time.
    ///
    /// The default is the mean of the mixture `W(t) = Σ_k P_k(t)·Gamma(k, μ)`,
    /// i.e. `Σ_{k≥1} P_k(t)·k/μ`. With `paper_literal` the `P_0(t)` addend
    /// is included as well, which shifts the limit by `1 − ρ`.
    pub fn phi_exact(&self, t: f64, paper_literal: bool) -> Result<f64> {
        let rho = self.rho();
        let k_max = self.tail_index(
            |k| {
                let k1 = k as f64 + 1.0;
                rho.powf(k1) * (k1 + rho / (1.0 - rho)) / self.mu
            },
            PHI_TAIL_TOL,
        )?;
        let law = TransientLaw::new(*self, t, k_max)?;
        let mut phi: f64 = (1..=k_max).map(|k| k as f64 * law.pn(k)).sum::<f64>() / self.mu;
        if paper_literal {
            phi += law.pn(0);
        }
        Ok(phi)
    }

    /// Closed-form large-`t` approximation:
    /// `(1 − ρ) + ρ/(μ(1 − ρ)) + e^{−θt}/√(4π√(λμ)·t) · C(ρ)/(μ·D(ρ))` with
    /// `C = 1 + 3√ρ + 4ρ + 4ρ^{3/2} + 3ρ² − ρ^{5/2}` and
    /// `D = 1 − √ρ − ρ² + ρ^{5/2}`.
    pub fn phi_asymptotic(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::invalid("t", format!("asymptotic form needs t > 0, got {t}")));
        }
        let rho = self.rho();
        let prefactor = (-self.theoretical_rate() * t).exp()
            / (4.0 * std::f64::consts::PI * (self.lambda * self.mu).sqrt() * t).sqrt();
        Ok(1.0 - rho + self.stationary_workload() + prefactor * self.asymptotic_coefficient())
    }

    /// `C(ρ)/(μ·D(ρ))` of [`Mm1Model::phi_asymptotic`].
    pub fn asymptotic_coefficient(&self) -> f64 {
        let r = self.rho();
        let s = r.sqrt();
        let numerator = 1.0 + 3.0 * s + 4.0 * r + 4.0 * r * s + 3.0 * r * r - r * r * s;
        let denominator = 1.0 - s - r * r + r * r * s;
        numerator / (self.mu * denominator)
    }
}

/// `P_n(t)` for all `n ≤ n_max` at one `t`, sharing one Bessel sequence.
struct TransientLaw {
    rho: f64,
    /// `-θt`
    log_decay: f64,
    /// `ln y`
    log_y: f64,
    log_bessel: Vec<f64>,
    /// `suffix[m] = e^{-θt} Σ_{k≥m} y^k e^{-x} I_k(x)`, zero past the truncation point.
    suffix: Vec<f64>,
    n_max: usize,
    at_origin: bool,
}

impl TransientLaw {
    fn new(model: Mm1Model, t: f64, n_max: usize) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        let rho = model.rho();
        if t == 0.0 {
            return Ok(TransientLaw {
                rho,
                log_decay: 0.0,
                log_y: 0.0,
                log_bessel: Vec::new(),
                suffix: Vec::new(),
                n_max,
                at_origin: true,
            });
        }
        let x = 2.0 * (model.lambda * model.mu).sqrt() * t;
        let log_y = -0.5 * rho.ln();
        let y = log_y.exp();
        let log_decay = -model.theoretical_rate() * t;
        // y^k I_k(x) peaks near k = x(y − 1/y)/2.
        let peak = 0.5 * x * (y - 1.0 / y);
        let mut order = (peak.max(0.0) + 40.0 * x.sqrt() + 40.0).ceil() as usize;
        order = order.max(n_max + 2);
        loop {
            let log_bessel = log_bessel_i_scaled_seq(order, x);
            let term = |k: usize| (k as f64 * log_y + log_bessel[k] + log_decay).exp();
            let mut running = 0.0;
            let mut quiet = 0;
            let mut stop = None;
            for k in 2..=order {
                let a = term(k);
                running += a;
                // leading terms may underflow to zero long before the peak
                if running > 0.0 && a <= TAIL_TERM_TOL * running {
                    quiet += 1;
                    if quiet == TAIL_RUN {
                        stop = Some(k);
                        break;
                    }
                } else {
                    quiet = 0;
                }
            }
            match stop {
                Some(last) => {
                    let len = last.max(n_max + 2) + 2;
                    let mut suffix = vec![0.0; len];
                    for k in (2..=last).rev() {
                        suffix[k] = suffix[k + 1] + term(k);
                    }
                    return Ok(TransientLaw {
                        rho,
                        log_decay,
                        log_y,
                        log_bessel,
                        suffix,
                        n_max,
                        at_origin: false,
                    });
                }
                None if order >= MAX_BESSEL_ORDER => {
                    return Err(Error::Truncation {
                        achieved: term(order) / running,
                        terms: order,
                    });
                }
                None => order *= 2,
            }
        }
    }

    fn pn(&self, n: usize) -> f64 {
        debug_assert!(n <= self.n_max);
        if self.at_origin {
            return if n == 0 { 1.0 } else { 0.0 };
        }
        let nf = n as f64;
        let direct = (-nf * self.log_y + self.log_bessel[n] + self.log_decay).exp()
            + (-(nf - 1.0) * self.log_y + self.log_bessel[n + 1] + self.log_decay).exp();
        let tail = self.suffix.get(n + 2).copied().unwrap_or(0.0);
        direct + (1.0 - self.rho) * self.rho.powf(nf) * tail
    }

    fn probabilities(&self) -> Vec<f64> {
        (0..=self.n_max).map(|n| self.pn(n)).collect()
    }
}
