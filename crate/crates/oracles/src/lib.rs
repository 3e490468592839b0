//! Reference values computed by methods that share no code with the
//! library: power series, a plain ODE integrator and closed forms.
//! Slow and simple on purpose; only tests depend on this crate.

/// `e^{-x} I_n(x)` from the defining power series
/// `Σ_k (x/2)^{2k+n} / (k! (k+n)!)`.
pub fn bessel_i_scaled_series(n: usize, x: f64) -> f64 {
    assert!(x > 0.0, "series oracle needs x > 0");
    let half = 0.5 * x;
    let log_first = n as f64 * half.ln() - (1..=n).map(|j| (j as f64).ln()).sum::<f64>() - x;
    let mut term = log_first.exp();
    let mut sum = term;
    let mut k = 0usize;
    loop {
        k += 1;
        term *= half * half / (k as f64 * (k + n) as f64);
        sum += term;
        if term < 1e-18 * sum && k as f64 > half {
            return sum;
        }
    }
}

/// Queue-length law of the M/M/1 queue started empty, obtained by
/// integrating the forward equations with classical RK4.
///
/// The chain is truncated to `states` levels with a reflecting top (no
/// arrivals into level `states`). Returns `P_0(t) ..= P_{states-1}(t)`.
pub fn birth_death_rk4(lambda: f64, mu: f64, states: usize, t: f64, h: f64) -> Vec<f64> {
    let steps = (t / h).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let rhs = |p: &[f64], out: &mut [f64]| {
        let last = states - 1;
        for n in 0..states {
            let birth_out = if n < last { lambda } else { 0.0 };
            let death_out = if n > 0 { mu } else { 0.0 };
            let mut d = -(birth_out + death_out) * p[n];
            if n > 0 {
                d += lambda * p[n - 1];
            }
            if n < last {
                d += mu * p[n + 1];
            }
            out[n] = d;
        }
    };
    let mut p = vec![0.0; states];
    p[0] = 1.0;
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![0.0; states], vec![0.0; states], vec![0.0; states], vec![0.0; states]);
    let mut tmp = vec![0.0; states];
    for _ in 0..steps {
        rhs(&p, &mut k1);
        for i in 0..states {
            tmp[i] = p[i] + 0.5 * h * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..states {
            tmp[i] = p[i] + 0.5 * h * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..states {
            tmp[i] = p[i] + h * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..states {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    p
}

/// Closed-form busy-period LST of the M/M/1 queue.
pub fn mm1_busy_lst(lambda: f64, mu: f64, s: f64) -> f64 {
    let a = lambda + mu + s;
    (a - (a * a - 4.0 * lambda * mu).sqrt()) / (2.0 * lambda)
}

/// Renewal function (with the `n = 0` term) for Exponential(`rate`) interrenewals.
pub fn exponential_renewal(rate: f64, t: f64) -> f64 {
    1.0 + rate * t
}

/// Renewal function (with the `n = 0` term) for Erlang(2, `rate`) interrenewals.
pub fn erlang2_renewal(rate: f64, t: f64) -> f64 {
    1.0 + rate * t / 2.0 - 0.25 + 0.25 * (-2.0 * rate * t).exp()
}

/// Pollaczek–Khinchine stationary mean workload.
pub fn pollaczek_khinchine(lambda: f64, b1: f64, b2: f64) -> f64 {
    lambda * b2 / (2.0 * (1.0 - lambda * b1))
}

/// Stationary M/M/1 mean workload `ρ/(μ(1−ρ))`.
pub fn mm1_stationary_workload(lambda: f64, mu: f64) -> f64 {
    let rho = lambda / mu;
    rho / (mu * (1.0 - rho))
}

/// Mean workload `Σ n P_n / μ` of a queue-length law.
pub fn mean_workload(law: &[f64], mu: f64) -> f64 {
    law.iter().enumerate().map(|(n, p)| n as f64 * p).sum::<f64>() / mu
}
