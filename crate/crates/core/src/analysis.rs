//! Stationary limits, decay-rate fits and cross-method comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::busy::QueueModel;
use crate::curve::{Curve, TimeGrid};
use crate::error::{Error, Result};
use crate::mm1::Mm1Model;
use crate::renewal::{phi_via_renewal, renewal_function_for};
use crate::sim::{estimate_phi, first_cycle_stats, FirstCycleStats, McConfig};

/// Fewest points a decay fit accepts.
pub const MIN_FIT_POINTS: usize = 10;

/// Multiple of the pointwise standard error below which a Monte-Carlo gap is noise.
pub const NOISE_SIGMAS: f64 = 3.0;

/// Relative discretisation budget of the renewal route.
pub const RENEWAL_REL_TOL: f64 = 0.02;

/// Fraction of grid points where Monte-Carlo must sit within three standard errors.
pub const MC_COVERAGE: f64 = 0.95;

/// Pollaczek–Khinchine mean wait `λ b2 / (2(1 − ρ))`, the limit of `φ(t)`.
pub fn stationary_pk(model: &QueueModel) -> f64 {
    let b2 = model.service().moment(2).expect("second moment is finite for every kind");
    model.lambda() * b2 / (2.0 * (1.0 - model.rho()))
}

/// Shape assumed for `|φ(t) − φ|` in a decay fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `log|gap| = c − r·t`
    PureExponential,
    /// `log|gap| = c − r·t − ½ log t`
    ExpWithSqrtT,
}

impl std::str::FromStr for FitModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pure" | "pure_exponential" => Ok(FitModel::PureExponential),
            "sqrt" | "exp_with_sqrt_t" => Ok(FitModel::ExpWithSqrtT),
            other => Err(Error::parse(other, "fit model must be `pure` or `sqrt`")),
        }
    }
}

/// Outcome of a log-linear decay fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub rate: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub model: FitModel,
    pub points: usize,
}

/// Least-squares fit of the exponential decay of `|curve − phi_inf|` over `window`.
///
/// Points whose gap is within three standard errors (Monte-Carlo curves) or
/// within a few hundred ulps of `phi_inf` (deterministic curves) are dropped.
/// A gap that changes sign inside the window is rejected as oscillating.
pub fn fit_decay_rate(curve: &Curve, phi_inf: f64, window: (f64, f64), model: FitModel) -> Result<FitResult> {
    let (lo, hi) = window;
    let grid = curve.grid();
    if !(lo < hi) {
        return Err(Error::invalid("window", format!("need t_lo < t_hi, got {lo}:{hi}")));
    }
    if lo < 0.0 || hi > grid.horizon() * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "window",
            format!("{lo}:{hi} is not inside the grid [0, {}]", grid.horizon()),
        ));
    }
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    let mut sign = 0.0;
    for (i, (t, v)) in curve.points().enumerate() {
        if t < lo * (1.0 - 1e-12) || t > hi * (1.0 + 1e-12) {
            continue;
        }
        if model == FitModel::ExpWithSqrtT && t <= 0.0 {
            continue;
        }
        let gap = v - phi_inf;
        let floor = match curve.stderr() {
            Some(se) => NOISE_SIGMAS * se[i],
            None => 100.0 * f64::EPSILON * phi_inf.abs().max(v.abs()),
        };
        if gap.abs() <= floor {
            continue;
        }
        if sign != 0.0 && gap.signum() != sign {
            return Err(Error::Unfit(format!("φ(t) − φ changes sign near t = {t}")));
        }
        sign = gap.signum();
        let mut y = gap.abs().ln();
        if model == FitModel::ExpWithSqrtT {
            y += 0.5 * t.ln();
        }
        ts.push(t);
        ys.push(y);
    }
    if ts.len() < MIN_FIT_POINTS {
        return Err(Error::Unfit(format!(
            "only {} usable points in {lo}:{hi}, need {MIN_FIT_POINTS}",
            ts.len()
        )));
    }
    let n = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in ts.iter().zip(&ys) {
        let (dt, dy) = (t - t_mean, y - y_mean);
        sxy += dt * dy;
        sxx += dt * dt;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let r_squared = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    let rate = -slope;
    if !(rate > 0.0) {
        return Err(Error::Unfit(format!("fitted slope {slope} is not a decay")));
    }
    Ok(FitResult {
        rate,
        intercept,
        window,
        r_squared,
        model,
        points: ts.len(),
    })
}

/// Exact `φ(t)` on every grid point.
pub fn mm1_phi_curve(model: &Mm1Model, grid: &TimeGrid, paper_literal: bool) -> Result<Curve> {
    let values = (0..grid.n_points())
        .into_par_iter()
        .map(|i| model.phi_exact(grid.t(i), paper_literal))
        .collect::<Result<Vec<f64>>>()?;
    Curve::new(*grid, values)
}

/// Everything produced on the way from first cycles to `φ` by the renewal route.
#[derive(Debug, Clone)]
pub struct RenewalEstimate {
    pub first_cycles: FirstCycleStats,
    /// `H` built from the empirical cycle CDF.
    pub renewal: Curve,
    pub phi: Curve,
}

/// `q̂` and `F̂` from first cycles, then `H` from `F̂`, then `φ = q̂ * dH`.
pub fn renewal_estimate(model: &QueueModel, cfg: &McConfig) -> Result<RenewalEstimate> {
    let first_cycles = first_cycle_stats(model, cfg)?;
    let renewal = renewal_function_for(model, &first_cycles.cycle_cdf, &cfg.grid)?;
    let phi = phi_via_renewal(&first_cycles.q, &renewal)?;
    Ok(RenewalEstimate {
        first_cycles,
        renewal,
        phi,
    })
}

/// Pointwise agreement between two curves on the same grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub reference: String,
    pub candidate: String,
    /// Largest `|candidate − reference| / combined stderr`.
    pub max_z: Option<f64>,
    /// Fraction of compared points with `|z| ≤ 3`.
    pub coverage: Option<f64>,
    /// Largest relative gap over points where the reference exceeds 0.1.
    pub max_rel_gap: Option<f64>,
    pub points: usize,
    pub pass: bool,
}

/// Fit of the decay rate reported by [`compare_methods`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub curve: String,
    pub rate: f64,
    pub theoretical_rate: Option<f64>,
    pub rel_err: Option<f64>,
    pub window: (f64, f64),
    pub model: FitModel,
}

/// Machine-readable outcome of [`compare_methods`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub model: QueueModel,
    pub seed: u64,
    pub replications: u64,
    pub phi_stationary: f64,
    pub methods: Vec<String>,
    pub pairs: Vec<PairSummary>,
    pub max_z: Option<f64>,
    pub max_rel_gap: Option<f64>,
    pub fit: Option<FitSummary>,
    pub fit_error: Option<String>,
    pub pass: bool,
}

/// Curves computed by [`compare_methods`], aligned on one grid.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub exact: Option<Curve>,
    pub renewal: Curve,
    pub monte_carlo: Curve,
    pub report: ComparisonReport,
}

fn rel_gap_above(reference: &Curve, candidate: &Curve, threshold: f64) -> (Option<f64>, usize) {
    let mut worst: Option<f64> = None;
    let mut n = 0;
    for (r, c) in reference.values().iter().zip(candidate.values()) {
        if *r > threshold {
            let g = ((c - r) / r).abs();
            worst = Some(worst.map_or(g, |w: f64| w.max(g)));
            n += 1;
        }
    }
    (worst, n)
}

/// z-scores of `candidate − reference` over `t > 0`, with an absolute
/// allowance added to the combined standard error.
fn z_scores(reference: &Curve, candidate: &Curve, allowance: impl Fn(f64) -> f64) -> (Option<f64>, Option<f64>, usize) {
    let zero = vec![0.0; reference.len()];
    let se_r = reference.stderr().unwrap_or(&zero);
    let se_c = candidate.stderr().unwrap_or(&zero);
    let mut max_z: Option<f64> = None;
    let mut inside = 0usize;
    let mut n = 0usize;
    for i in 1..reference.len() {
        let (r, c) = (reference.value_at(i), candidate.value_at(i));
        let se = (se_r[i] * se_r[i] + se_c[i] * se_c[i]).sqrt();
        let gap = (c - r).abs() - allowance(r);
        let z = if gap <= 0.0 {
            0.0
        } else if se > 0.0 {
            gap / se
        } else {
            f64::INFINITY
        };
        max_z = Some(max_z.map_or(z, |m: f64| m.max(z)));
        if z <= NOISE_SIGMAS {
            inside += 1;
        }
        n += 1;
    }
    let coverage = (n > 0).then(|| inside as f64 / n as f64);
    (max_z, coverage, n)
}

/// Runs every applicable method on `cfg.grid` and scores their agreement.
///
/// M/M/1 models get the exact series, the renewal route and simulation;
/// other models get the renewal route and simulation. The decay rate is
/// fitted on the exact curve when there is one (model `exp_with_sqrt_t`),
/// otherwise on the renewal curve (model `pure_exponential`), over the last
/// three quarters of the grid.
pub fn compare_methods(model: &QueueModel, cfg: &McConfig) -> Result<Comparison> {
    let grid = cfg.grid;
    let phi_inf = stationary_pk(model);
    let mm1 = Mm1Model::from_queue(model);
    let exact = mm1.map(|m| mm1_phi_curve(&m, &grid, false)).transpose()?;
    let renewal = renewal_estimate(model, cfg)?.phi;
    let monte_carlo = estimate_phi(model, cfg)?;

    let mut methods = Vec::new();
    if exact.is_some() {
        methods.push("mm1_exact".to_string());
    }
    methods.push("renewal".to_string());
    methods.push("monte_carlo".to_string());

    let mut pairs = Vec::new();
    if let Some(exact) = &exact {
        let (max_z, coverage, n) = z_scores(exact, &monte_carlo, |_| 0.0);
        pairs.push(PairSummary {
            reference: "mm1_exact".into(),
            candidate: "monte_carlo".into(),
            max_z,
            coverage,
            max_rel_gap: None,
            points: n,
            pass: coverage.is_some_and(|c| c >= MC_COVERAGE),
        });
        let (max_rel_gap, n) = rel_gap_above(exact, &renewal, 0.1);
        pairs.push(PairSummary {
            reference: "mm1_exact".into(),
            candidate: "renewal".into(),
            max_z: None,
            coverage: None,
            max_rel_gap,
            points: n,
            pass: max_rel_gap.is_some_and(|g| g <= RENEWAL_REL_TOL),
        });
    } else {
        let (max_z, coverage, n) = z_scores(&monte_carlo, &renewal, |r| RENEWAL_REL_TOL * r.abs());
        pairs.push(PairSummary {
            reference: "monte_carlo".into(),
            candidate: "renewal".into(),
            max_z,
            coverage,
            max_rel_gap: None,
            points: n,
            pass: coverage.is_some_and(|c| c >= MC_COVERAGE),
        });
    }

    let lo = 0.25 * grid.horizon();
    let window = (lo, grid.horizon());
    let (fit_curve, fit_name, fit_model) = match &exact {
        Some(c) => (c, "mm1_exact", FitModel::ExpWithSqrtT),
        None => (&renewal, "renewal", FitModel::PureExponential),
    };
    let theoretical = mm1.map(|m| m.theoretical_rate());
    let (fit, fit_error) = match fit_decay_rate(fit_curve, phi_inf, window, fit_model) {
        Ok(f) => (
            Some(FitSummary {
                curve: fit_name.into(),
                rate: f.rate,
                theoretical_rate: theoretical,
                rel_err: theoretical.map(|r| (f.rate - r).abs() / r),
                window,
                model: fit_model,
            }),
            None,
        ),
        Err(e) => (None, Some(e.to_string())),
    };

    let max_z = pairs.iter().filter_map(|p| p.max_z).reduce(f64::max);
    let max_rel_gap = pairs.iter().filter_map(|p| p.max_rel_gap).reduce(f64::max);
    let pass = pairs.iter().all(|p| p.pass);
    Ok(Comparison {
        exact,
        renewal,
        monte_carlo,
        report: ComparisonReport {
            model: model.clone(),
            seed: cfg.base_seed,
            replications: cfg.replications,
            phi_stationary: phi_inf,
            methods,
            pairs,
            max_z,
            max_rel_gap,
            fit,
            fit_error,
            pass,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::ServiceDistribution;
    use proptest::prelude::*;

    fn synthetic(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Curve {
        Curve::from_fn(grid, f)
    }

    #[test]
    fn pk_examples() {
        let mm1 = QueueModel::new(0.5, ServiceDistribution::exponential(1.0).unwrap()).unwrap();
        assert!((stationary_pk(&mm1) - 1.0).abs() < 1e-15);
        let md1 = QueueModel::new(0.5, ServiceDistribution::deterministic(1.0).unwrap()).unwrap();
        assert!((stationary_pk(&md1) - 0.5).abs() < 1e-15);
        let light = QueueModel::new(1e-9, ServiceDistribution::exponential(1.0).unwrap()).unwrap();
        assert!(stationary_pk(&light) < 1e-8);
    }

    proptest! {
        #[test]
        fn pk_matches_mm1_closed_form(mu in 0.05f64..20.0, load in 0.001f64..0.95) {
            let lambda = load * mu;
            let q = QueueModel::new(lambda, ServiceDistribution::exponential(mu).unwrap()).unwrap();
            let rho = lambda / mu;
            let closed = rho / (mu * (1.0 - rho));
            prop_assert!((stationary_pk(&q) - closed).abs() <= 1e-14 * closed.max(1.0));
        }

        #[test]
        fn fit_rate_is_scale_equivariant(scale in 1e-3f64..1e3, rate in 0.05f64..1.0) {
            let grid = TimeGrid::with_horizon(0.1, 40.0).unwrap();
            for model in [FitModel::PureExponential, FitModel::ExpWithSqrtT] {
                let base = synthetic(grid, |t| (-rate * t).exp() / (1.0 + t).sqrt());
                let scaled = synthetic(grid, |t| scale * (-rate * t).exp() / (1.0 + t).sqrt());
                let a = fit_decay_rate(&base, 0.0, (5.0, 30.0), model).unwrap();
                let b = fit_decay_rate(&scaled, 0.0, (5.0, 30.0), model).unwrap();
                prop_assert!((a.rate - b.rate).abs() <= 1e-9 * a.rate);
                prop_assert!((b.intercept - a.intercept - scale.ln()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn exact_exponential_is_recovered() {
        let grid = TimeGrid::with_horizon(0.1, 50.0).unwrap();
        let c = synthetic(grid, |t| 1.0 + (-0.3 * t).exp());
        for window in [(1.0, 10.0), (5.0, 40.0), (0.0, 50.0)] {
            let f = fit_decay_rate(&c, 1.0, window, FitModel::PureExponential).unwrap();
            assert!((f.rate - 0.3).abs() < 1e-6, "{f:?}");
            assert!(f.r_squared > 0.999_999);
        }
    }

    #[test]
    fn sqrt_prefactor_biases_pure_fits() {
        let grid = TimeGrid::with_horizon(0.1, 80.0).unwrap();
        let c = synthetic(grid, |t| 1.0 + (-0.3 * t).exp() / t.sqrt());
        let early = fit_decay_rate(&c, 1.0, (10.0, 20.0), FitModel::PureExponential).unwrap();
        let late = fit_decay_rate(&c, 1.0, (40.0, 80.0), FitModel::PureExponential).unwrap();
        assert!((early.rate - late.rate).abs() > 1e-3);
        assert!(early.rate > 0.27 && late.rate > 0.27);
        let matched = fit_decay_rate(&c, 1.0, (10.0, 20.0), FitModel::ExpWithSqrtT).unwrap();
        assert!((matched.rate - 0.3).abs() < 1e-9);
    }

    #[test]
    fn oscillating_gap_is_unfit() {
        let grid = TimeGrid::with_horizon(0.1, 50.0).unwrap();
        let c = synthetic(grid, |t| 1.0 + (-0.1 * t).exp() * t.cos());
        assert!(matches!(
            fit_decay_rate(&c, 1.0, (0.0, 50.0), FitModel::PureExponential),
            Err(Error::Unfit(_))
        ));
    }

    #[test]
    fn too_few_points_is_unfit() {
        let grid = TimeGrid::with_horizon(1.0, 50.0).unwrap();
        let c = synthetic(grid, |t| 1.0 + (-0.1 * t).exp());
        assert!(matches!(
            fit_decay_rate(&c, 1.0, (10.0, 15.0), FitModel::PureExponential),
            Err(Error::Unfit(_))
        ));
        // converged curve: everything is below the floor
        let flat = synthetic(grid, |_| 1.0);
        assert!(fit_decay_rate(&flat, 1.0, (0.0, 50.0), FitModel::PureExponential).is_err());
    }

    #[test]
    fn noisy_points_below_three_sigma_are_dropped() {
        let grid = TimeGrid::with_horizon(0.5, 40.0).unwrap();
        let values: Vec<f64> = grid.times().map(|t| 1.0 + (-0.2 * t).exp()).collect();
        let stderr = vec![1e-3; grid.n_points()];
        let c = Curve::with_stderr(grid, values, stderr).unwrap();
        let f = fit_decay_rate(&c, 1.0, (0.0, 40.0), FitModel::PureExponential).unwrap();
        // e^{-0.2t} > 3e-3 only for t ≤ 29.0
        assert_eq!(f.points, 59);
        assert!((f.rate - 0.2).abs() < 1e-9);
    }

    #[test]
    fn window_outside_grid_is_rejected() {
        let grid = TimeGrid::with_horizon(0.1, 10.0).unwrap();
        let c = synthetic(grid, |t| (-t).exp());
        assert!(fit_decay_rate(&c, 0.0, (5.0, 20.0), FitModel::PureExponential).is_err());
        assert!(fit_decay_rate(&c, 0.0, (5.0, 5.0), FitModel::PureExponential).is_err());
    }

    #[test]
    fn fit_model_names() {
        assert_eq!("pure".parse::<FitModel>().unwrap(), FitModel::PureExponential);
        assert_eq!("sqrt".parse::<FitModel>().unwrap(), FitModel::ExpWithSqrtT);
        assert!("cubic".parse::<FitModel>().is_err());
    }
}
