//! Regenerative simulation of the M/G/1 workload process.
//!
//! The workload `W(t)` jumps by the service requirement at each arrival and
//! drains at unit rate while positive. Starting from `W(0) = 0`, a cycle is
//! an exponential idle period followed by a busy period; it ends the moment
//! the workload returns to zero, and the next cycle starts afresh.
//!
//! Every replication draws from its own ChaCha stream (`base_seed`, stream =
//! replication index). Replications are processed in fixed-size blocks whose
//! partial sums are merged in block order, so results do not depend on how
//! many threads run the blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::busy::{CycleMoments, QueueModel};
use crate::curve::{Curve, TimeGrid};
use crate::error::{Error, Result};

/// Default cap on arrivals within one cycle.
pub const DEFAULT_EVENT_CAP: usize = 10_000_000;

/// Replications per deterministic accumulation block.
const BLOCK: u64 = 256;

/// One customer of a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub epoch: f64,
    pub service: f64,
}

/// One regeneration cycle, timed from its own start at workload zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclePath {
    arrivals: Vec<Arrival>,
    /// Workload just after each arrival's jump.
    peaks: Vec<f64>,
    busy_length: f64,
    cycle_length: f64,
}

impl CyclePath {
    /// Builds a cycle from its arrivals. The first arrival ends the idle
    /// period; each later one must land while the server is still busy.
    pub fn from_arrivals(arrivals: Vec<Arrival>) -> Result<Self> {
        let first = arrivals
            .first()
            .ok_or_else(|| Error::invalid("arrivals", "a cycle needs at least one arrival"))?;
        if !(first.epoch > 0.0) {
            return Err(Error::invalid("arrivals", "the idle period must be positive"));
        }
        let mut peaks = Vec::with_capacity(arrivals.len());
        let mut prev: Option<(f64, f64)> = None;
        for a in &arrivals {
            if !(a.service > 0.0 && a.service.is_finite()) {
                return Err(Error::invalid("service", format!("must be positive, got {}", a.service)));
            }
            let left = match prev {
                None => 0.0,
                Some((epoch, peak)) => {
                    let left = peak - (a.epoch - epoch);
                    if !(a.epoch >= epoch) || left <= 0.0 {
                        return Err(Error::invalid(
                            "arrivals",
                            format!("arrival at {} does not fall inside the busy period", a.epoch),
                        ));
                    }
                    left
                }
            };
            let peak = left + a.service;
            peaks.push(peak);
            prev = Some((a.epoch, peak));
        }
        let (last_epoch, last_peak) = prev.expect("nonempty");
        Ok(CyclePath::assemble(arrivals, peaks, last_epoch, last_peak))
    }

    fn assemble(arrivals: Vec<Arrival>, peaks: Vec<f64>, last_epoch: f64, last_peak: f64) -> Self {
        let idle = arrivals[0].epoch;
        let busy_length = (last_epoch - idle) + last_peak;
        CyclePath {
            arrivals,
            peaks,
            busy_length,
            cycle_length: idle + busy_length,
        }
    }

    pub fn arrivals(&self) -> &[Arrival] {
        &self.arrivals
    }

    /// Length `ζ` of the whole cycle.
    pub fn cycle_length(&self) -> f64 {
        self.cycle_length
    }

    pub fn idle_length(&self) -> f64 {
        self.arrivals[0].epoch
    }

    /// Length `τ` of the busy period.
    pub fn busy_length(&self) -> f64 {
        self.busy_length
    }

    /// Virtual waiting time at `t` (relative to the cycle start). Zero once the cycle is over.
    pub fn workload_at(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.workload_unchecked(t))
    }

    fn workload_unchecked(&self, t: f64) -> f64 {
        if t >= self.cycle_length {
            return 0.0;
        }
        let k = self.arrivals.partition_point(|a| a.epoch <= t);
        if k == 0 {
            return 0.0;
        }
        (self.peaks[k - 1] - (t - self.arrivals[k - 1].epoch)).max(0.0)
    }

    /// `∫ W(t) dt` over the cycle.
    pub fn area(&self) -> f64 {
        let n = self.arrivals.len();
        (0..n)
            .map(|k| {
                let peak = self.peaks[k];
                let span = if k + 1 < n {
                    self.arrivals[k + 1].epoch - self.arrivals[k].epoch
                } else {
                    peak
                };
                peak * span - 0.5 * span * span
            })
            .sum()
    }
}

/// Simulates one cycle from workload zero.
pub fn simulate_cycle<R: Rng + ?Sized>(model: &QueueModel, rng: &mut R) -> Result<CyclePath> {
    simulate_cycle_capped(model, rng, DEFAULT_EVENT_CAP)
}

/// [`simulate_cycle`] with an explicit cap on arrivals per cycle.
pub fn simulate_cycle_capped<R: Rng + ?Sized>(
    model: &QueueModel,
    rng: &mut R,
    event_cap: usize,
) -> Result<CyclePath> {
    let interarrival = Exp::new(model.lambda()).expect("validated lambda");
    let service = model.service();
    let mut epoch = interarrival.sample(rng);
    let mut peak = service.sample(rng);
    let mut arrivals = vec![Arrival {
        epoch,
        service: peak,
    }];
    let mut peaks = vec![peak];
    loop {
        let next = epoch + interarrival.sample(rng);
        let left = peak - (next - epoch);
        if left <= 0.0 {
            break;
        }
        if arrivals.len() >= event_cap {
            return Err(Error::EventCap { cap: event_cap });
        }
        let s = service.sample(rng);
        epoch = next;
        peak = left + s;
        arrivals.push(Arrival { epoch, service: s });
        peaks.push(peak);
    }
    Ok(CyclePath::assemble(arrivals, peaks, epoch, peak))
}

/// Monte-Carlo settings shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub replications: u64,
    pub base_seed: u64,
    pub grid: TimeGrid,
}

impl McConfig {
    pub fn new(replications: u64, base_seed: u64, grid: TimeGrid) -> Result<Self> {
        if replications == 0 {
            return Err(Error::invalid("replications", "need at least one replication"));
        }
        Ok(McConfig {
            replications,
            base_seed,
            grid,
        })
    }
}

/// Random stream of one replication.
pub fn replication_rng(base_seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(replication);
    rng
}

/// Per-grid-point sums over replications.
#[derive(Debug, Clone)]
struct Sums {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Sums {
    fn new(n: usize) -> Self {
        Sums {
            sum: vec![0.0; n],
            sum_sq: vec![0.0; n],
        }
    }

    fn add(&mut self, i: usize, x: f64) {
        self.sum[i] += x;
        self.sum_sq[i] += x * x;
    }

    fn merge(&mut self, other: &Sums) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
    }

    fn into_curve(self, grid: TimeGrid, n: u64) -> Curve {
        let n = n as f64;
        let (mean, se): (Vec<f64>, Vec<f64>) = self
            .sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, s2)| {
                let mean = s / n;
                let se = if n > 1.0 {
                    ((s2 - n * mean * mean).max(0.0) / (n - 1.0) / n).sqrt()
                } else {
                    0.0
                };
                (mean, se)
            })
            .unzip();
        Curve::with_stderr(grid, mean, se).expect("lengths match the grid")
    }
}

/// Runs `replications` calls of `body` in deterministic blocks and merges
/// their per-block accumulators in block order.
fn run_blocks<A, I, F, M>(replications: u64, init: I, body: F, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(u64, &mut A) -> Result<()> + Sync,
    M: Fn(&mut A, A),
{
    let blocks = replications.div_ceil(BLOCK);
    let partials: Vec<Result<A>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = init();
            let end = ((b + 1) * BLOCK).min(replications);
            for r in b * BLOCK..end {
                body(r, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = init();
    for p in partials {
        merge(&mut total, p?);
    }
    Ok(total)
}

/// Transient mean workload `φ(t) = E W(t)` from independent replications
/// started empty, with pointwise standard errors.
pub fn estimate_phi(model: &QueueModel, cfg: &McConfig) -> Result<Curve> {
    let grid = cfg.grid;
    let n = grid.n_points();
    let sums = run_blocks(
        cfg.replications,
        || Sums::new(n),
        |r, acc| {
            let mut rng = replication_rng(cfg.base_seed, r);
            let mut start = 0.0;
            let mut i = 0;
            while i < n {
                let cycle = simulate_cycle(model, &mut rng)?;
                let end = start + cycle.cycle_length();
                while i < n && grid.t(i) < end {
                    let w = cycle.workload_unchecked(grid.t(i) - start);
                    if w > 0.0 {
                        acc.add(i, w);
                    }
                    i += 1;
                }
                start = end;
            }
            Ok(())
        },
        |total, part| total.merge(&part),
    )?;
    Ok(sums.into_curve(grid, cfg.replications))
}

/// Statistics of first cycles started at `W(0) = 0`, all on one grid.
#[derive(Debug, Clone)]
pub struct FirstCycleStats {
    /// `q(t) = E[W(t)·𝟙(ζ1 > t)]`.
    pub q: Curve,
    /// `E[(ζ1 − t)⁺]`, the bound that dominates `q` pathwise.
    pub excess: Curve,
    /// Empirical `P(ζ1 ≤ t)` at each grid point.
    pub cycle_cdf: Vec<f64>,
    /// Sample moments of `τ` and `ζ`.
    pub moments: CycleMoments,
    /// Sample variance of the busy-period length.
    pub busy_variance: f64,
    /// Sample variance of the cycle length.
    pub cycle_variance: f64,
    pub replications: u64,
}

#[derive(Debug, Clone)]
struct FirstCycleAcc {
    q: Sums,
    excess: Sums,
    /// `hits[i]` counts cycles whose first grid point at or after `ζ` is `i`.
    hits: Vec<u64>,
    busy: f64,
    busy_sq: f64,
    cycle: f64,
    cycle_sq: f64,
}

impl FirstCycleAcc {
    fn new(n: usize) -> Self {
        FirstCycleAcc {
            q: Sums::new(n),
            excess: Sums::new(n),
            hits: vec![0; n + 1],
            busy: 0.0,
            busy_sq: 0.0,
            cycle: 0.0,
            cycle_sq: 0.0,
        }
    }

    fn merge(&mut self, other: FirstCycleAcc) {
        self.q.merge(&other.q);
        self.excess.merge(&other.excess);
        for (a, b) in self.hits.iter_mut().zip(&other.hits) {
            *a += b;
        }
        self.busy += other.busy;
        self.busy_sq += other.busy_sq;
        self.cycle += other.cycle;
        self.cycle_sq += other.cycle_sq;
    }
}

/// Simulates only the first cycle of each replication.
pub fn first_cycle_stats(model: &QueueModel, cfg: &McConfig) -> Result<FirstCycleStats> {
    let grid = cfg.grid;
    let n = grid.n_points();
    let acc = run_blocks(
        cfg.replications,
        || FirstCycleAcc::new(n),
        |r, acc| {
            let mut rng = replication_rng(cfg.base_seed, r);
            let cycle = simulate_cycle(model, &mut rng)?;
            let zeta = cycle.cycle_length();
            let first_after = grid.first_index_at_or_after(zeta);
            for i in 0..first_after.min(n) {
                let t = grid.t(i);
                let w = cycle.workload_unchecked(t);
                if w > 0.0 {
                    acc.q.add(i, w);
                }
                acc.excess.add(i, zeta - t);
            }
            acc.hits[first_after] += 1;
            let busy = cycle.busy_length();
            acc.busy += busy;
            acc.busy_sq += busy * busy;
            acc.cycle += zeta;
            acc.cycle_sq += zeta * zeta;
            Ok(())
        },
        |total, part| total.merge(part),
    )?;
    let reps = cfg.replications;
    let nf = reps as f64;
    let mut cumulative = 0u64;
    let cycle_cdf = (0..n)
        .map(|i| {
            cumulative += acc.hits[i];
            cumulative as f64 / nf
        })
        .collect();
    let variance = |s: f64, s2: f64| {
        if reps > 1 {
            (s2 - s * s / nf).max(0.0) / (nf - 1.0)
        } else {
            0.0
        }
    };
    Ok(FirstCycleStats {
        q: acc.q.into_curve(grid, reps),
        excess: acc.excess.into_curve(grid, reps),
        cycle_cdf,
        moments: CycleMoments {
            busy_mean: acc.busy / nf,
            cycle_mean: acc.cycle / nf,
            cycle_second: acc.cycle_sq / nf,
            source: crate::busy::MomentSource::Simulated,
        },
        busy_variance: variance(acc.busy, acc.busy_sq),
        cycle_variance: variance(acc.cycle, acc.cycle_sq),
        replications: reps,
    })
}

/// `q(t) = E[W(t)·𝟙(ζ1 > t)]` from first cycles only.
pub fn estimate_q(model: &QueueModel, cfg: &McConfig) -> Result<Curve> {
    Ok(first_cycle_stats(model, cfg)?.q)
}

/// Long-run time average of `W` with a regenerative standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub cycles: u64,
    pub horizon: f64,
}

/// Simulates whole cycles on one path until `horizon` is covered and forms
/// the ratio estimator `Σ area / Σ ζ`.
pub fn estimate_stationary(model: &QueueModel, horizon: f64, seed: u64) -> Result<StationaryEstimate> {
    let required = 1000.0 * model.cycle_moments().cycle_mean;
    if !(horizon >= required) {
        return Err(Error::HorizonTooShort { horizon, required });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    let mut elapsed = 0.0;
    while elapsed < horizon {
        let cycle = simulate_cycle(model, &mut rng)?;
        elapsed += cycle.cycle_length();
        samples.push((cycle.area(), cycle.cycle_length()));
    }
    let n = samples.len() as f64;
    let total_area: f64 = samples.iter().map(|s| s.0).sum();
    let ratio = total_area / elapsed;
    let mean_len = elapsed / n;
    let resid: f64 = samples
        .iter()
        .map(|(a, z)| (a - ratio * z).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    Ok(StationaryEstimate {
        mean: ratio,
        stderr: (resid / n).sqrt() / mean_len,
        cycles: samples.len() as u64,
        horizon: elapsed,
    })
}
