//! Fast–slow Euler scheme
//! `x_{k+1} = x_k + n^{-1} a(x_k) + n^{-1/2} b(x_k, y_k)`, `y_{k+1} = T y_k`,
//! its homogenised Itô limit, and the coefficients that limit needs.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::maps::{MapSystem, OrbitCursor, Point};
use crate::observables::HolderObservable;
use crate::parallel::{derive_seed, map_chunks, map_indexed, pairwise_mean, stream_rng};
use crate::special::normal_cdf;
use crate::stats::{ks_critical_95, ks_distance, ks_distance_to_cdf};
use crate::McConfig;

/// Paths with `|x|` above this are abandoned.
pub const OVERFLOW_GUARD: f64 = 1e6;
/// Default Euler–Maruyama step as a fraction of the horizon.
pub const DEFAULT_DT_FRACTION: f64 = 1e-4;

/// Slow drift `a(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Drift {
    Zero,
    Constant { value: f64 },
    /// `a(x) = slope · x + intercept`
    Linear { slope: f64, intercept: f64 },
}

impl Drift {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Drift::Zero => 0.0,
            Drift::Constant { value } => value,
            Drift::Linear { slope, intercept } => slope * x + intercept,
        }
    }
}

/// Noise amplitude `h(x)` of a product diffusion `b(x, y) = h(x) v(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseScale {
    Constant { value: f64 },
    Affine { slope: f64, intercept: f64 },
}

impl NoiseScale {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            NoiseScale::Constant { value } => value,
            NoiseScale::Affine { slope, intercept } => slope * x + intercept,
        }
    }

    pub fn derivative(&self, _x: f64) -> f64 {
        match *self {
            NoiseScale::Constant { .. } => 0.0,
            NoiseScale::Affine { slope, .. } => slope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Diffusion {
    Zero,
    /// `b(x, y) = v(y)`
    Additive { v: HolderObservable },
    /// `b(x, y) = h(x) v(y)`
    Product { h: NoiseScale, v: HolderObservable },
}

impl Diffusion {
    pub fn eval(&self, x: f64, y: &Point) -> f64 {
        match self {
            Diffusion::Zero => 0.0,
            Diffusion::Additive { v } => v.eval(y),
            Diffusion::Product { h, v } => h.eval(x) * v.eval(y),
        }
    }

    /// `h` with `h ≡ 1` for additive noise, `None` without noise.
    pub fn scale(&self) -> Option<NoiseScale> {
        match self {
            Diffusion::Zero => None,
            Diffusion::Additive { .. } => Some(NoiseScale::Constant { value: 1.0 }),
            Diffusion::Product { h, .. } => Some(*h),
        }
    }

    pub fn observable(&self) -> Option<&HolderObservable> {
        match self {
            Diffusion::Zero => None,
            Diffusion::Additive { v } | Diffusion::Product { v, .. } => Some(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastSlowSpec {
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub xi: f64,
    pub n: u64,
    pub fast_map: MapSystem,
    pub t_end: f64,
}

impl FastSlowSpec {
    pub fn new(fast_map: MapSystem, drift: Drift, diffusion: Diffusion, xi: f64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        if !xi.is_finite() {
            return Err(invalid("xi", "must be finite"));
        }
        Ok(FastSlowSpec {
            drift,
            diffusion,
            xi,
            n,
            fast_map,
            t_end: 1.0,
        })
    }

    pub fn with_t_end(mut self, t_end: f64) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(invalid("t_end", format!("{t_end} must be positive")));
        }
        self.t_end = t_end;
        Ok(self)
    }

    pub fn with_n(mut self, n: u64) -> Self {
        self.n = n.max(1);
        self
    }

    /// Number of scheme steps `[n · t_end]`.
    pub fn steps(&self) -> u64 {
        (self.n as f64 * self.t_end).floor() as u64
    }
}

/// `X_n(t) = x_{[nt]}` at each requested time, with the fast orbit started
/// at `y0`.
pub fn fastslow_trajectory(spec: &FastSlowSpec, y0: Point, record: &[f64]) -> Result<Vec<f64>> {
    fastslow_trajectory_from(spec, OrbitCursor::at(spec.fast_map, y0), record)
}

/// As [`fastslow_trajectory`], continuing the fast orbit held by `cursor`.
pub fn fastslow_trajectory_from(spec: &FastSlowSpec, mut cursor: OrbitCursor, record: &[f64]) -> Result<Vec<f64>> {
    let mut idx: Vec<(u64, usize)> = Vec::with_capacity(record.len());
    for (j, &t) in record.iter().enumerate() {
        if !(t >= 0.0) || t > spec.t_end {
            return Err(invalid("record", format!("time {t} outside [0, {}]", spec.t_end)));
        }
        idx.push(((spec.n as f64 * t).floor() as u64, j));
    }
    idx.sort_unstable();
    let mut out = vec![0.0; record.len()];
    let (inv_n, inv_sqrt_n) = (1.0 / spec.n as f64, 1.0 / (spec.n as f64).sqrt());
    let last = idx.last().map(|e| e.0).unwrap_or(0);
    let mut x = spec.xi;
    let mut next = 0;
    for k in 0..=last {
        while next < idx.len() && idx[next].0 == k {
            out[idx[next].1] = x;
            next += 1;
        }
        if k == last {
            break;
        }
        let y = cursor.next_point();
        x += inv_n * spec.drift.eval(x) + inv_sqrt_n * spec.diffusion.eval(x, &y);
        if !(x.abs() <= OVERFLOW_GUARD) {
            return Err(Error::Overflow { step: k + 1, value: x });
        }
    }
    Ok(out)
}

/// Green–Kubo variance with a direct cross-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenKubo {
    /// `ĉ(0) + 2 Σ_{1 ≤ ℓ ≤ L} ĉ(ℓ)`
    pub sigma2: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub l_max: u64,
    /// `n^{-1} E[S_v(n)²]` at `direct_n`.
    pub direct: f64,
    pub direct_std_error: f64,
    pub direct_n: u64,
    /// The two estimates differ by at most three joint standard errors.
    pub consistent: bool,
}

/// Window length for the direct variance cross-check.
pub const DIRECT_VARIANCE_N: u64 = 1 << 12;

struct OrbitValues {
    values: Vec<f64>,
    prefix: Vec<f64>,
}

fn orbit_values(map: &MapSystem, v: &HolderObservable, len: usize, burn_in: u64, seed: u64, t: u64) -> OrbitValues {
    let mut rng = stream_rng(seed, t);
    let mut cursor = OrbitCursor::stationary(*map, &mut rng, burn_in);
    let values: Vec<f64> = (0..len).map(|_| v.eval(&cursor.next_point())).collect();
    let mut prefix = Vec::with_capacity(len + 1);
    let mut acc = crate::sums::CompensatedSum::default();
    prefix.push(0.0);
    for &x in &values {
        acc.add(x);
        prefix.push(acc.value());
    }
    OrbitValues { values, prefix }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = pairwise_mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// Series and direct estimates of `σ² = lim n^{-1} E[S_v(n)²]`.
///
/// Orbit `t` contributes the time average over `0 ≤ i < mc.orbit_len` of
/// `v_i (v_i + 2 Σ_{ℓ=1}^{L} v_{i+ℓ})` for the series, and the average of
/// `S_v(i, i + 2^{12})² / 2^{12}` over the same starting points for the direct
/// estimate. Standard errors come from the spread across orbits.
pub fn green_kubo_sigma(map: &MapSystem, v: &HolderObservable, l_max: u64, mc: &McConfig) -> Result<GreenKubo> {
    if l_max == 0 {
        return Err(invalid("l_max", "must be at least 1"));
    }
    if mc.trials < 2 {
        return Err(invalid("trials", "need at least two orbits"));
    }
    let len = mc.orbit_len.max(1) as usize;
    let (l, dn) = (l_max as usize, DIRECT_VARIANCE_N as usize);
    let burn_in = mc.burn_in.unwrap_or_else(|| map.default_burn_in());
    let per_orbit: Vec<(f64, f64, f64)> = map_indexed(mc.exec, mc.trials as usize, |t| {
        let o = orbit_values(map, v, len + l.max(dn), burn_in, mc.seed, t as u64);
        let series: Vec<f64> = (0..len)
            .map(|i| {
                let ahead = o.prefix[i + l + 1] - o.prefix[i + 1];
                o.values[i] * (o.values[i] + 2.0 * ahead)
            })
            .collect();
        let direct: Vec<f64> = (0..len)
            .map(|i| (o.prefix[i + dn] - o.prefix[i]).powi(2) / dn as f64)
            .collect();
        let (s, d) = (pairwise_mean(&series), pairwise_mean(&direct));
        (s, d, s - d)
    });
    let (sigma2, se) = mean_se(&per_orbit.iter().map(|r| r.0).collect::<Vec<_>>());
    let (direct, dse) = mean_se(&per_orbit.iter().map(|r| r.1).collect::<Vec<_>>());
    let (diff, diff_se) = mean_se(&per_orbit.iter().map(|r| r.2).collect::<Vec<_>>());
    Ok(GreenKubo {
        sigma2,
        std_error: se,
        ci_low: sigma2 - 1.96 * se,
        ci_high: sigma2 + 1.96 * se,
        l_max,
        direct,
        direct_std_error: dse,
        direct_n: DIRECT_VARIANCE_N,
        consistent: diff.abs() <= 3.0 * diff_se || diff == 0.0,
    })
}

/// `n^{-1} E[𝕊_{v,v}(n)]` at two levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftCoefficient {
    pub e_c: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
    /// Estimate at `n / 2`.
    pub half_level: f64,
    pub half_level_std_error: f64,
    /// The two levels agree within three standard errors of their difference.
    pub converged: bool,
}

/// Estimates `n^{-1} E_μ[𝕊_{v,v}(n)]` and compares it with the same quantity
/// at `n / 2`, using `𝕊_{v,v} = (S_v² - Σ v_i²) / 2` on sliding windows.
pub fn iterated_drift_coeff(map: &MapSystem, v: &HolderObservable, n: u64, mc: &McConfig) -> Result<DriftCoefficient> {
    if n < 2 {
        return Err(invalid("n", "must be at least 2"));
    }
    if mc.trials < 2 {
        return Err(invalid("trials", "need at least two orbits"));
    }
    let len = mc.orbit_len.max(1) as usize;
    let burn_in = mc.burn_in.unwrap_or_else(|| map.default_burn_in());
    let (full, half) = (n as usize, (n / 2) as usize);
    let per_orbit: Vec<(f64, f64, f64)> = map_indexed(mc.exec, mc.trials as usize, |t| {
        let o = orbit_values(map, v, len + full, burn_in, mc.seed, t as u64);
        let mut sq_prefix = Vec::with_capacity(o.values.len() + 1);
        let mut acc = crate::sums::CompensatedSum::default();
        sq_prefix.push(0.0);
        for &x in &o.values {
            acc.add(x * x);
            sq_prefix.push(acc.value());
        }
        let level = |m: usize| -> f64 {
            let xs: Vec<f64> = (0..len)
                .map(|i| {
                    let s = o.prefix[i + m] - o.prefix[i];
                    let q = sq_prefix[i + m] - sq_prefix[i];
                    0.5 * (s * s - q) / m as f64
                })
                .collect();
            pairwise_mean(&xs)
        };
        let (a, b) = (level(full), level(half));
        (a, b, a - b)
    });
    let (e_c, se) = mean_se(&per_orbit.iter().map(|r| r.0).collect::<Vec<_>>());
    let (h, hse) = mean_se(&per_orbit.iter().map(|r| r.1).collect::<Vec<_>>());
    let (d, dse) = mean_se(&per_orbit.iter().map(|r| r.2).collect::<Vec<_>>());
    Ok(DriftCoefficient {
        e_c,
        std_error: se,
        ci_low: e_c - 1.96 * se,
        ci_high: e_c + 1.96 * se,
        n,
        half_level: h,
        half_level_std_error: hse,
        converged: d.abs() <= 3.0 * dse || d == 0.0,
    })
}

/// The limiting Itô equation `dX = (a(X) + E_c h(X) h'(X)) dt + σ h(X) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSde {
    pub drift: Drift,
    pub h: NoiseScale,
    pub sigma2: f64,
    pub e_c: f64,
}

impl LimitSde {
    pub fn additive(drift: Drift, sigma2: f64) -> Self {
        LimitSde {
            drift,
            h: NoiseScale::Constant { value: 1.0 },
            sigma2,
            e_c: 0.0,
        }
    }

    fn drift_at(&self, x: f64) -> f64 {
        self.drift.eval(x) + self.e_c * self.h.eval(x) * self.h.derivative(x)
    }
}

fn check_dt(dt: f64, t_end: f64) -> Result<u64> {
    if !(t_end > 0.0) || !(dt > 0.0) || dt > 1e-3 * t_end {
        return Err(Error::StepSize { dt, t_end });
    }
    Ok((t_end / dt).round() as u64)
}

/// Euler–Maruyama path of `sde` on the grid `0, dt, 2dt, ..., T_end`
/// (`dt ≤ 10⁻³ T_end`).
pub fn euler_maruyama<R: Rng + ?Sized>(sde: &LimitSde, xi: f64, dt: f64, t_end: f64, rng: &mut R) -> Result<Vec<f64>> {
    let steps = check_dt(dt, t_end)?;
    let mut path = Vec::with_capacity(steps as usize + 1);
    let mut x = xi;
    path.push(x);
    let noise = sde.sigma2.max(0.0).sqrt() * dt.sqrt();
    for step in 1..=steps {
        let z: f64 = rng.sample(StandardNormal);
        x += sde.drift_at(x) * dt + noise * sde.h.eval(x) * z;
        if !(x.abs() <= OVERFLOW_GUARD) {
            return Err(Error::Overflow { step, value: x });
        }
        path.push(x);
    }
    Ok(path)
}

/// Endpoint `X(T_end)` of [`euler_maruyama`] without storing the path.
pub fn euler_maruyama_endpoint<R: Rng + ?Sized>(sde: &LimitSde, xi: f64, dt: f64, t_end: f64, rng: &mut R) -> Result<f64> {
    let steps = check_dt(dt, t_end)?;
    let noise = sde.sigma2.max(0.0).sqrt() * dt.sqrt();
    let mut x = xi;
    for step in 1..=steps {
        let z: f64 = rng.sample(StandardNormal);
        x += sde.drift_at(x) * dt + noise * sde.h.eval(x) * z;
        if !(x.abs() <= OVERFLOW_GUARD) {
            return Err(Error::Overflow { step, value: x });
        }
    }
    Ok(x)
}

/// What `X_n(T_end)` is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reference {
    /// Exact law `Normal(mean, var)`.
    Gaussian { mean: f64, var: f64 },
    /// Ensemble of Euler–Maruyama endpoints with `paths` paths and step `dt`.
    EulerMaruyama { sde: LimitSde, dt: f64, paths: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogenisationRow {
    pub n: u64,
    pub ks: f64,
    /// Asymptotic 95% critical value for the sample sizes involved.
    pub ks_critical: f64,
    pub mean_fast: f64,
    pub mean_ref: f64,
    pub var_fast: f64,
    pub var_ref: f64,
    pub mean_diff: f64,
    pub var_diff: f64,
    /// Paths discarded by the overflow guard.
    pub discarded: u64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let m = pairwise_mean(xs);
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0).max(1.0);
    (m, v)
}

/// `mc.trials` endpoints `X_n(T_end)` from independent stationary fast
/// orbits; paths that trip the overflow guard are dropped and counted.
pub fn fastslow_endpoints(spec: &FastSlowSpec, mc: &McConfig) -> (Vec<f64>, u64) {
    let burn_in = mc.burn_in.unwrap_or_else(|| spec.fast_map.default_burn_in());
    let record = [spec.t_end];
    let results: Vec<Option<f64>> = map_chunks(mc.exec, mc.trials, 64, |range| {
        range
            .map(|t| {
                let mut rng = stream_rng(mc.seed, t);
                let cursor = OrbitCursor::stationary(spec.fast_map, &mut rng, burn_in);
                fastslow_trajectory_from(spec, cursor, &record).ok().map(|p| p[0])
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let discarded = results.iter().filter(|r| r.is_none()).count() as u64;
    (results.into_iter().flatten().collect(), discarded)
}

/// Endpoints of the reference ensemble (empty for a Gaussian reference).
pub fn reference_endpoints(reference: &Reference, xi: f64, t_end: f64, seed: u64, exec: crate::Exec) -> Result<Vec<f64>> {
    match *reference {
        Reference::Gaussian { .. } => Ok(Vec::new()),
        Reference::EulerMaruyama { sde, dt, paths } => {
            check_dt(dt, t_end)?;
            let out: Vec<Option<f64>> = map_chunks(exec, paths, 64, |range| {
                range
                    .map(|t| euler_maruyama_endpoint(&sde, xi, dt, t_end, &mut stream_rng(seed, t)).ok())
                    .collect::<Vec<_>>()
            })
            .into_iter()
            .flatten()
            .collect();
            Ok(out.into_iter().flatten().collect())
        }
    }
}

/// Rows of [`homogenisation_compare`] plus the samples behind the last row.
#[derive(Debug, Clone)]
pub struct HomogenisationRun {
    pub rows: Vec<HomogenisationRow>,
    /// Surviving endpoints `X_n(T_end)` for the last `n` of the scan.
    pub last_endpoints: Vec<f64>,
    /// Reference ensemble (empty for a Gaussian reference).
    pub reference_endpoints: Vec<f64>,
}

/// Distance between the law of `X_n(T_end)` and the reference for each `n`.
///
/// Fast–slow paths use streams of `derive_seed(mc.seed, 1)`, shared across
/// `n`; the reference ensemble (if any) is drawn once from
/// `derive_seed(mc.seed, 2)`.
pub fn homogenisation_compare(
    spec: &FastSlowSpec,
    reference: &Reference,
    n_list: &[u64],
    mc: &McConfig,
) -> Result<Vec<HomogenisationRow>> {
    homogenisation_run(spec, reference, n_list, mc).map(|r| r.rows)
}

/// Same scan as [`homogenisation_compare`], keeping the endpoint samples.
pub fn homogenisation_run(
    spec: &FastSlowSpec,
    reference: &Reference,
    n_list: &[u64],
    mc: &McConfig,
) -> Result<HomogenisationRun> {
    if mc.trials < 2 {
        return Err(invalid("trials", "need at least two paths"));
    }
    let ref_samples = reference_endpoints(reference, spec.xi, spec.t_end, derive_seed(mc.seed, 2), mc.exec)?;
    let (mean_ref, var_ref) = match *reference {
        Reference::Gaussian { mean, var } => (mean, var),
        Reference::EulerMaruyama { .. } => mean_var(&ref_samples),
    };
    let mut rows = Vec::with_capacity(n_list.len());
    let mut last = Vec::new();
    for &n in n_list {
        let s = spec.clone().with_n(n);
        let (xs, discarded) = fastslow_endpoints(&s, &mc.with_seed(derive_seed(mc.seed, 1)));
        if xs.len() < 2 {
            return Err(invalid("paths", "fewer than two paths survived the overflow guard"));
        }
        let (mean_fast, var_fast) = mean_var(&xs);
        let (ks, ks_critical) = match *reference {
            Reference::Gaussian { mean, var } => {
                let ks = if var > 0.0 {
                    let sd = var.sqrt();
                    ks_distance_to_cdf(&xs, |x| normal_cdf((x - mean) / sd))?
                } else {
                    ks_distance(&xs, &[mean])?
                };
                (ks, 1.358 / (xs.len() as f64).sqrt())
            }
            Reference::EulerMaruyama { .. } => (
                ks_distance(&xs, &ref_samples)?,
                ks_critical_95(xs.len(), ref_samples.len()),
            ),
        };
        rows.push(HomogenisationRow {
            n,
            ks,
            ks_critical,
            mean_fast,
            mean_ref,
            var_fast,
            var_ref,
            mean_diff: mean_fast - mean_ref,
            var_diff: var_fast - var_ref,
            discarded,
        });
        last = xs;
    }
    Ok(HomogenisationRun {
        rows,
        last_endpoints: last,
        reference_endpoints: ref_samples,
    })
}
