//! Closed-form and deterministic reference values used by the integration
//! tests. Nothing here calls into the library's estimators.

#![allow(dead_code)]

/// `Σ_{j ≥ m} j^{-s}` for `s > 1`, `m ≥ 1`: explicit terms up to `m + 2000`
/// and an Euler–Maclaurin remainder.
pub fn zeta_tail(s: f64, m: u64) -> f64 {
    const DIRECT: u64 = 2000;
    let mut sum = 0.0;
    // summed from the smallest term up
    for j in (m..m + DIRECT).rev() {
        sum += (j as f64).powf(-s);
    }
    let a = (m + DIRECT) as f64;
    let f = a.powf(-s);
    let f1 = -s * a.powf(-s - 1.0);
    let f3 = -s * (s + 1.0) * (s + 2.0) * a.powf(-s - 3.0);
    sum + a.powf(1.0 - s) / (s - 1.0) + 0.5 * f - f1 / 12.0 + f3 / 720.0
}

pub fn zeta(s: f64) -> f64 {
    zeta_tail(s, 1)
}

/// `P(φ ≥ n)` for the Pareto return time `φ = ⌊U^{-1/β}⌋`.
pub fn pareto_tail_ge(beta: f64, n: u64) -> f64 {
    if n <= 1 {
        1.0
    } else {
        (n as f64).powf(-beta)
    }
}

/// Exact `E[θ^{ψ_n}]` for the Pareto tower from a stationary start, by the
/// renewal recursion on the return process.
pub struct RenewalOracle {
    beta: f64,
    theta: f64,
    /// `h[m]`: expectation over `m` steps started at a fresh return.
    h: Vec<f64>,
}

impl RenewalOracle {
    pub fn new(beta: f64, theta: f64, n_max: usize) -> Self {
        let f: Vec<f64> = (0..=n_max as u64)
            .map(|j| if j == 0 { 0.0 } else { pareto_tail_ge(beta, j) - pareto_tail_ge(beta, j + 1) })
            .collect();
        let mut h = vec![0.0; n_max + 1];
        for m in 0..=n_max {
            let mut acc = 0.0;
            for j in 1..=m {
                acc += f[j] * h[m - j];
            }
            h[m] = pareto_tail_ge(beta, m as u64 + 1) + theta * acc;
        }
        RenewalOracle { beta, theta, h }
    }

    /// `∫ θ^{ψ_n} dμ_Δ`
    pub fn stationary(&self, n: usize) -> f64 {
        let mean = zeta(self.beta);
        let no_return = zeta_tail(self.beta, n as u64 + 1) / mean;
        let mut acc = 0.0;
        for r in 1..=n {
            acc += pareto_tail_ge(self.beta, r as u64) / mean * self.h[n - r];
        }
        no_return + self.theta * acc
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `∫_0^1 (x - 1/2)(2^l x mod 1 - 1/2) dx` by two-point Gauss–Legendre on
/// each of the `2^l` branches, which is exact for the piecewise quadratic
/// integrand. Lags above 24 are below `2^{-24}/12` and returned as 0.
pub fn doubling_correlation_quadrature(lag: u32) -> f64 {
    if lag > 24 {
        return 0.0;
    }
    let branches = 1u64 << lag;
    let h = 1.0 / branches as f64;
    let node = 0.5 / 3f64.sqrt();
    let mut total = 0.0;
    for j in 0..branches {
        let mid = (j as f64 + 0.5) * h;
        for s in [-node, node] {
            let x = mid + s * h;
            let tx = x * branches as f64 - j as f64;
            total += 0.5 * h * (x - 0.5) * (tx - 0.5);
        }
    }
    total
}

/// `c(0) + 2 Σ_{1 ≤ l ≤ max_lag} c(l)` from the quadrature values.
pub fn doubling_green_kubo_quadrature(max_lag: u32) -> f64 {
    doubling_correlation_quadrature(0) + 2.0 * (1..=max_lag).map(doubling_correlation_quadrature).sum::<f64>()
}

/// `Σ_{i<j} v_i w_j` by explicit enumeration of pairs, with Kahan
/// compensation on both loops.
pub fn double_loop_iterated_sum(v: &[f64], w: &[f64]) -> f64 {
    let (mut total, mut c_total) = (0.0f64, 0.0f64);
    for i in 0..v.len() {
        let (mut row, mut c_row) = (0.0f64, 0.0f64);
        for &wj in &w[i + 1..] {
            let y = wj - c_row;
            let t = row + y;
            c_row = (t - row) - y;
            row = t;
        }
        let y = v[i] * row - c_total;
        let t = total + y;
        c_total = (t - total) - y;
        total = t;
    }
    total
}
