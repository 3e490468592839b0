//! Renewal theory on a uniform grid.
//!
//! The renewal function includes the zeroth convolution power,
//! `H = Σ_{n≥0} F^{*n}`, so `H(0) = 1` and the solution of
//! `φ = q + φ * F` is `φ = q * dH` with a unit atom of `dH` at the origin.
//!
//! Stieltjes integrals over a grid cell `(t_{j-1}, t_j]` put the cell's mass
//! `ΔF_j = F(t_j) − F(t_{j−1})` at the cell midpoint and evaluate the
//! integrand there by averaging its two grid neighbours. This is second-order
//! accurate for smooth `F` and keeps every weight nonnegative.

use rayon::prelude::*;

use crate::busy::{CycleMoments, QueueModel};
use crate::curve::{Curve, TimeGrid};
use crate::error::{Error, Result};

/// Default grid resolving both idle (`1/λ`) and service (`b1`) time scales,
/// with a horizon of 80 mean busy periods.
pub fn default_grid(model: &QueueModel) -> Result<TimeGrid> {
    let b1 = model.service().mean();
    let step = (1.0 / (20.0 * model.lambda())).min(b1 / 20.0);
    TimeGrid::with_horizon(step, 80.0 * model.busy_mean())
}

fn validate_cdf(cdf: &[f64], grid: &TimeGrid) -> Result<()> {
    if cdf.len() != grid.n_points() {
        return Err(Error::GridMismatch(format!(
            "CDF has {} values for a grid of {} points",
            cdf.len(),
            grid.n_points()
        )));
    }
    if cdf[0] != 0.0 {
        return Err(Error::invalid("cdf", format!("F(0) must be 0, got {}", cdf[0])));
    }
    for w in cdf.windows(2) {
        if w[1] < w[0] {
            return Err(Error::invalid("cdf", "must be nondecreasing"));
        }
    }
    if cdf.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("cdf", "values must lie in [0, 1]"));
    }
    Ok(())
}

fn increments(values: &[f64]) -> Vec<f64> {
    let mut d = Vec::with_capacity(values.len());
    d.push(0.0);
    d.extend(values.windows(2).map(|w| w[1] - w[0]));
    d
}

/// Renewal function `H` of the inter-renewal CDF sampled on `grid`.
///
/// Solves `H_i = 1 + Σ_{j=1..i} ΔF_j · (H_{i−j} + H_{i−j+1})/2` forward in `i`;
/// the `j = 1` term contains `H_i` itself and is moved to the left-hand side.
pub fn renewal_function(cdf: &[f64], grid: &TimeGrid) -> Result<Curve> {
    validate_cdf(cdf, grid)?;
    let df = increments(cdf);
    let n = grid.n_points();
    let mut h = vec![0.0; n];
    h[0] = 1.0;
    for i in 1..n {
        let mut acc = 1.0 + 0.5 * df[1] * h[i - 1];
        for j in 2..=i {
            acc += df[j] * 0.5 * (h[i - j] + h[i - j + 1]);
        }
        h[i] = acc / (1.0 - 0.5 * df[1]);
    }
    Curve::new(*grid, h)
}

/// [`renewal_function`] for the cycles of `model`, flagging grids too coarse
/// to resolve a busy period (`step > busy_mean/10`).
pub fn renewal_function_for(model: &QueueModel, cdf: &[f64], grid: &TimeGrid) -> Result<Curve> {
    let mut h = renewal_function(cdf, grid)?;
    let limit = model.busy_mean() / 10.0;
    if grid.step() > limit {
        h.push_warning(format!(
            "grid step {} exceeds busy_mean/10 = {limit}; renewal function is under-resolved",
            grid.step()
        ));
    }
    Ok(h)
}

/// Residual of the discrete renewal equation for a candidate `H`.
pub fn renewal_residual(cdf: &[f64], h: &Curve) -> Result<Vec<f64>> {
    validate_cdf(cdf, h.grid())?;
    let df = increments(cdf);
    let h = h.values();
    Ok((0..h.len())
        .map(|i| {
            let conv: f64 = (1..=i).map(|j| df[j] * 0.5 * (h[i - j] + h[i - j + 1])).sum();
            h[i] - 1.0 - conv
        })
        .collect())
}

/// Renewal density `h = H'` by central differences, one-sided at the ends.
pub fn renewal_density(h: &Curve) -> Curve {
    let v = h.values();
    let step = h.grid().step();
    let n = v.len();
    let d = (0..n)
        .map(|i| {
            if i == 0 {
                (v[1] - v[0]) / step
            } else if i == n - 1 {
                (v[n - 1] - v[n - 2]) / step
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * step)
            }
        })
        .collect();
    Curve::new(*h.grid(), d).expect("same length as input")
}

/// Splits `H` into its linear asymptote `t/μ + μ2/(2μ²)` and the remainder `R`.
pub fn asymptote_remainder(h: &Curve, moments: &CycleMoments) -> (Curve, Curve) {
    let offset = moments.renewal_offset();
    let slope = 1.0 / moments.cycle_mean;
    let asymptote = Curve::from_fn(*h.grid(), |t| t * slope + offset);
    let remainder = h
        .values()
        .iter()
        .zip(asymptote.values())
        .map(|(a, b)| a - b)
        .collect();
    let remainder = Curve::new(*h.grid(), remainder).expect("same grid");
    (asymptote, remainder)
}

/// Stieltjes convolution `φ(t) = ∫_{[0,t]} q(t − y) dH(y)`.
///
/// `H(0) = 1` is the atom at the origin, so `φ ≥ q` whenever `q ≥ 0`.
/// Standard errors of `q`, when present, are carried through the same
/// nonnegative weights, which bounds the error of `φ` without assuming
/// independence between grid points.
pub fn phi_via_renewal(q: &Curve, h: &Curve) -> Result<Curve> {
    if !q.grid().same_as(h.grid()) {
        return Err(Error::GridMismatch(format!(
            "q has {:?}, H has {:?}",
            q.grid(),
            h.grid()
        )));
    }
    let grid = *q.grid();
    let mut dh = increments(h.values());
    dh[0] = h.values()[0];
    let convolve = |x: &[f64]| -> Vec<f64> {
        (0..x.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = dh[0] * x[i];
                for j in 1..=i {
                    acc += dh[j] * 0.5 * (x[i - j] + x[i - j + 1]);
                }
                acc
            })
            .collect()
    };
    let values = convolve(q.values());
    match q.stderr() {
        Some(se) => {
            let abs_dh: Vec<f64> = dh.iter().map(|d| d.abs()).collect();
            let se_out = (0..se.len())
                .into_par_iter()
                .map(|i| {
                    let mut acc = abs_dh[0] * se[i];
                    for j in 1..=i {
                        acc += abs_dh[j] * 0.5 * (se[i - j] + se[i - j + 1]);
                    }
                    acc
                })
                .collect();
            Curve::with_stderr(grid, values, se_out)
        }
        None => Curve::new(grid, values),
    }
}
