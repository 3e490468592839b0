use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use transient_queue::analysis::{compare_methods, fit_decay_rate, mm1_phi_curve, renewal_estimate, stationary_pk, FitModel};
use transient_queue::curve::{write_atomic, write_table};
use transient_queue::dist::Transform;
use transient_queue::mm1::Mm1Model;
use transient_queue::sim::estimate_phi;
use transient_queue::{Curve, Error, McConfig, QueueModel, ServiceDistribution, TimeGrid};

/// Transient mean workload of the M/G/1 queue started empty.
#[derive(Debug, Parser)]
#[command(name = "transient-queue", version)]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte-Carlo estimate of φ(t) from independent replications.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        mc: McArgs,
        /// CSV `t,value,stderr`.
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the JSON summary here (it always goes to stdout).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Exact M/M/1 curve alongside its large-t asymptotic form.
    #[command(name = "mm1-exact")]
    Mm1Exact {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        mu: f64,
        #[command(flatten)]
        grid: GridArgs,
        /// Measure `abs_gap` on the curve that keeps the P0(t) addend.
        #[arg(long)]
        paper_literal: bool,
        /// CSV `t,phi_exact,phi_paper_literal,phi_asymptotic,abs_gap`.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// φ = q * dH with q and the cycle law taken from simulated first cycles.
    Renewal {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        mc: McArgs,
        /// CSV `t,value,stderr` of φ.
        #[arg(short, long)]
        output: PathBuf,
        /// CSV `t,cycle_cdf,q,q_stderr,renewal_function`.
        #[arg(long)]
        components: Option<PathBuf>,
    },
    /// Busy-period transform on a grid of s, and its convergence abscissa.
    #[command(name = "busy-period")]
    BusyPeriod {
        #[command(flatten)]
        model: ModelArgs,
        /// `start:stop:step`; negative s give exponential moments E e^{|s|τ}.
        #[arg(long, default_value = "0:2:0.05")]
        s_grid: String,
        /// Locate the busy-period abscissa and add it to the summary.
        #[arg(long)]
        abscissa: bool,
        /// CSV `s,busy_lst`; divergent values are written as `inf`.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Log-linear fit of the decay rate of |φ(t) − φ| from a CSV curve.
    #[command(name = "fit-rate")]
    FitRate {
        #[arg(long)]
        input: PathBuf,
        /// Column holding φ (default: the second one).
        #[arg(long)]
        column: Option<String>,
        /// Limit of the curve; computed from the model flags when omitted.
        #[arg(long)]
        phi_inf: Option<f64>,
        /// `lo:hi`
        #[arg(long)]
        window: String,
        /// `pure` or `sqrt`
        #[arg(long, default_value = "pure")]
        model: String,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, conflicts_with = "mu")]
        service: Option<ServiceDistribution>,
        /// Exponential service rate; also reports the theoretical M/M/1 rate.
        #[arg(long)]
        mu: Option<f64>,
        /// Also write the JSON result here (it always goes to stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Runs every applicable method and scores their agreement.
    Compare {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        mc: McArgs,
        /// JSON report.
        #[arg(short, long)]
        output: PathBuf,
        /// CSV with the aligned curves.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    lambda: f64,
    /// e.g. `exp:rate=1`, `det:value=1`, `erlang:shape=2,rate=2`,
    /// `hyperexp:w=0.5|0.5,rate=1|3`, `uniform:lo=0,hi=2`
    #[arg(long)]
    service: ServiceDistribution,
}

impl ModelArgs {
    fn build(&self) -> Result<QueueModel, Error> {
        QueueModel::new(self.lambda, self.service.clone())
    }
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long)]
    t_max: f64,
    #[arg(long)]
    step: f64,
}

impl GridArgs {
    fn build(&self) -> Result<TimeGrid, Error> {
        TimeGrid::with_horizon(self.step, self.t_max)
    }
}

#[derive(Debug, Args)]
struct McArgs {
    #[arg(long)]
    reps: u64,
    #[arg(long)]
    seed: u64,
}

impl McArgs {
    fn build(&self, grid: TimeGrid) -> Result<McConfig, Error> {
        McConfig::new(self.reps, self.seed, grid)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.threads {
        Some(0) => Err(invalid("threads", "must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| invalid("threads", e.to_string()))
            .and_then(|pool| pool.install(|| run(cli.command))),
        None => run(cli.command),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

fn describe(e: &Error) -> String {
    match e {
        Error::Unstable { rho } => format!("--lambda/--service give rho = {rho}, which must be < 1"),
        other => other.to_string(),
    }
}

/// 2 for bad input, 1 when a valid computation fails.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter { .. }
        | Error::Unstable { .. }
        | Error::Parse { .. }
        | Error::MomentOutOfRange { .. }
        | Error::NegativeTime(_)
        | Error::HorizonTooShort { .. }
        | Error::GridMismatch(_) => 2,
        _ => 1,
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn print_json(value: &serde_json::Value) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn parse_floats(text: &str, name: &'static str, count: usize) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != count {
        return Err(invalid(name, format!("`{text}` needs {count} colon-separated numbers")));
    }
    parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| invalid(name, format!("`{p}` is not a number")))
        })
        .collect()
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Simulate {
            model,
            grid,
            mc,
            output,
            summary,
        } => {
            let model = model.build()?;
            let cfg = mc.build(grid.build()?)?;
            let phi = estimate_phi(&model, &cfg)?;
            phi.write_csv(&output)?;
            let last = phi.len() - 1;
            let report = json!({
                "model": model,
                "seed": cfg.base_seed,
                "replications": cfg.replications,
                "t": cfg.grid.t(last),
                "phi_stationary_estimate": phi.value_at(last),
                "stderr": phi.stderr().map(|s| s[last]),
                "phi_stationary": stationary_pk(&model),
            });
            if let Some(path) = summary {
                write_json(&path, &report)?;
            }
            print_json(&report)
        }
        Command::Mm1Exact {
            lambda,
            mu,
            grid,
            paper_literal,
            output,
        } => {
            let m = Mm1Model::new(lambda, mu)?;
            let grid = grid.build()?;
            let exact = mm1_phi_curve(&m, &grid, false)?;
            let literal = mm1_phi_curve(&m, &grid, true)?;
            let asymptotic: Vec<f64> = grid
                .times()
                .map(|t| if t > 0.0 { m.phi_asymptotic(t) } else { Ok(f64::INFINITY) })
                .collect::<Result<_, _>>()?;
            let (curve, limit) = if paper_literal {
                (&literal, 1.0 - m.rho() + m.stationary_workload())
            } else {
                (&exact, m.stationary_workload())
            };
            let gap: Vec<f64> = curve.values().iter().map(|v| (v - limit).abs()).collect();
            write_table(
                &output,
                &grid,
                &["phi_exact", "phi_paper_literal", "phi_asymptotic", "abs_gap"],
                &[exact.values(), literal.values(), &asymptotic, &gap],
            )
        }
        Command::Renewal {
            model,
            grid,
            mc,
            output,
            components,
        } => {
            let model = model.build()?;
            let cfg = mc.build(grid.build()?)?;
            let est = renewal_estimate(&model, &cfg)?;
            est.phi.write_csv(&output)?;
            if let Some(path) = components {
                let fc = &est.first_cycles;
                let zero = vec![0.0; cfg.grid.n_points()];
                write_table(
                    &path,
                    &cfg.grid,
                    &["cycle_cdf", "q", "q_stderr", "renewal_function"],
                    &[&fc.cycle_cdf, fc.q.values(), fc.q.stderr().unwrap_or(&zero), est.renewal.values()],
                )?;
            }
            let analytic = model.cycle_moments();
            print_json(&json!({
                "model": model,
                "seed": cfg.base_seed,
                "replications": cfg.replications,
                "cycle_moments_simulated": est.first_cycles.moments,
                "cycle_moments_analytic": analytic,
                "phi_stationary": stationary_pk(&model),
                "warnings": est.renewal.warnings(),
            }))
        }
        Command::BusyPeriod {
            model,
            s_grid,
            abscissa,
            output,
        } => {
            let model = model.build()?;
            let spec = parse_floats(&s_grid, "s-grid", 3)?;
            let (start, stop, step) = (spec[0], spec[1], spec[2]);
            if !(step > 0.0 && stop >= start) {
                return Err(invalid("s-grid", "need start <= stop and step > 0"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            let mut text = String::from("s,busy_lst\n");
            for i in 0..n {
                let s = start + step * i as f64;
                let value = if s >= 0.0 {
                    Transform::Finite(model.busy_lst(s, 1e-14)?)
                } else {
                    model.busy_exponential_moment(-s)
                };
                let cell = match value {
                    Transform::Finite(v) => transient_queue::curve::format_full(v),
                    Transform::Divergent => "inf".to_string(),
                };
                text.push_str(&format!("{},{cell}\n", transient_queue::curve::format_full(s)));
            }
            write_atomic(&output, text.as_bytes())?;
            let mut report = json!({
                "model": model,
                "rho": model.rho(),
                "busy_mean": model.busy_mean(),
                "busy_second_moment": model.busy_second_moment(),
            });
            if abscissa {
                report["busy_abscissa"] = json!(model.busy_cramer_abscissa(1e-10)?);
                report["service_abscissa"] = json!(model.service().cramer_abscissa().finite());
            }
            print_json(&report)
        }
        Command::FitRate {
            input,
            column,
            phi_inf,
            window,
            model,
            lambda,
            service,
            mu,
            output,
        } => {
            let fit_model: FitModel = model.parse()?;
            let w = parse_floats(&window, "window", 2)?;
            let curve = Curve::read_csv_column(&input, column.as_deref())?;
            let service = match (service, mu) {
                (Some(s), _) => Some(s),
                (None, Some(mu)) => Some(ServiceDistribution::exponential(mu)?),
                (None, None) => None,
            };
            let queue = match (lambda, service) {
                (Some(l), Some(s)) => Some(QueueModel::new(l, s)?),
                (None, None) => None,
                _ => return Err(invalid("lambda", "--lambda and --service/--mu go together")),
            };
            let phi_inf = match (phi_inf, &queue) {
                (Some(p), _) => p,
                (None, Some(q)) => stationary_pk(q),
                (None, None) => {
                    return Err(invalid("phi-inf", "give --phi-inf or the model flags --lambda with --service/--mu"))
                }
            };
            let fit = fit_decay_rate(&curve, phi_inf, (w[0], w[1]), fit_model)?;
            let theoretical = queue.as_ref().and_then(Mm1Model::from_queue).map(|m| m.theoretical_rate());
            let report = json!({
                "rate": fit.rate,
                "intercept": fit.intercept,
                "window": fit.window,
                "r_squared": fit.r_squared,
                "model": fit.model,
                "points": fit.points,
                "phi_inf": phi_inf,
                "theoretical_rate": theoretical,
                "rel_err": theoretical.map(|r| (fit.rate - r) / r),
            });
            if let Some(path) = output {
                write_json(&path, &report)?;
            }
            print_json(&report)
        }
        Command::Compare {
            model,
            grid,
            mc,
            output,
            curves,
        } => {
            let model = model.build()?;
            let cfg = mc.build(grid.build()?)?;
            let cmp = compare_methods(&model, &cfg)?;
            if let Some(path) = curves {
                let zero = vec![0.0; cfg.grid.n_points()];
                let nan = vec![f64::NAN; cfg.grid.n_points()];
                write_table(
                    &path,
                    &cfg.grid,
                    &["exact", "renewal", "renewal_stderr", "monte_carlo", "monte_carlo_stderr"],
                    &[
                        cmp.exact.as_ref().map_or(&nan[..], |c| c.values()),
                        cmp.renewal.values(),
                        cmp.renewal.stderr().unwrap_or(&zero),
                        cmp.monte_carlo.values(),
                        cmp.monte_carlo.stderr().unwrap_or(&zero),
                    ],
                )?;
            }
            write_json(&output, &serde_json::to_value(&cmp.report)?)?;
            print_json(&json!({ "pass": cmp.report.pass, "max_z": cmp.report.max_z, "max_rel_gap": cmp.report.max_rel_gap }))
        }
    }
}
