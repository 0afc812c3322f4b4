//! Monte Carlo moment estimation, bootstrap intervals, log-log scaling fits,
//! correlation estimates and Kolmogorov–Smirnov distances.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::maps::{MapSystem, OrbitCursor};
use crate::observables::HolderObservable;
use crate::parallel::{derive_seed, map_chunks, map_indexed, pairwise_mean, pairwise_sum, stream_rng};
use crate::McConfig;

/// Samples above this size are bootstrapped through batch means.
pub const EXACT_BOOTSTRAP_MAX: usize = 20_000;
const BOOTSTRAP_BATCHES: usize = 1_000;

/// `‖X‖_p = (E|X|^p)^{1/p}` with a 95% percentile-bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub p: f64,
    pub n: u64,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Delta-method standard error of `value`.
    pub std_error: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Least-squares fit of `log value = exponent · log n + log_prefactor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub log_prefactor: f64,
    pub r_squared: f64,
    /// Standard error of the fitted exponent (0 for exactly three collinear
    /// points or fewer degrees of freedom).
    pub exponent_std_error: f64,
    pub points: Vec<(f64, f64)>,
}

/// Mean, standard error and 95% percentile-bootstrap interval of the mean.
///
/// Up to [`EXACT_BOOTSTRAP_MAX`] values are resampled individually; larger
/// samples are cut into 1000 contiguous batches whose means are resampled.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, seed: u64) -> (f64, f64, (f64, f64)) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, (f64::NAN, f64::NAN));
    }
    let mean = pairwise_mean(values);
    let var = if n > 1 {
        values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let se = (var / n as f64).sqrt();
    if var == 0.0 || resamples == 0 {
        return (mean, se, (mean, mean));
    }
    let batch_means: Vec<f64>;
    let units: &[f64] = if n <= EXACT_BOOTSTRAP_MAX {
        values
    } else {
        batch_means = (0..BOOTSTRAP_BATCHES)
            .map(|b| {
                let lo = b * n / BOOTSTRAP_BATCHES;
                let hi = (b + 1) * n / BOOTSTRAP_BATCHES;
                pairwise_mean(&values[lo..hi])
            })
            .collect();
        &batch_means
    };
    let mut rng = stream_rng(derive_seed(seed, 0xB007), 0);
    let m = units.len();
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| (0..m).map(|_| units[rng.random_range(0..m)]).sum::<f64>() / m as f64)
        .collect();
    stats.sort_by(|a, b| a.total_cmp(b));
    (mean, se, (quantile_sorted(&stats, 0.025), quantile_sorted(&stats, 0.975)))
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// `(mean |x|^p)^{1/p}` of the given values. The bootstrap interval of the
/// mean of `|x|^p` is mapped through the (monotone) `1/p` power.
pub fn lp_norm_from_values(values: &[f64], p: f64, n: u64, seed: u64) -> Result<MomentEstimate> {
    if !(p >= 1.0) {
        return Err(invalid("p", format!("{p} must be at least 1")));
    }
    if values.is_empty() {
        return Err(invalid("values", "empty sample"));
    }
    let powers: Vec<f64> = values.iter().map(|x| x.abs().powf(p)).collect();
    let (mean, se, (lo, hi)) = bootstrap_mean_ci(&powers, 1000, seed);
    let value = mean.powf(1.0 / p);
    let std_error = if mean > 0.0 {
        se * value / (p * mean)
    } else {
        0.0
    };
    Ok(MomentEstimate {
        p,
        n,
        value,
        ci_low: lo.max(0.0).powf(1.0 / p).min(value),
        ci_high: hi.max(0.0).powf(1.0 / p).max(value),
        std_error,
        trials: values.len() as u64,
        seed,
    })
}

/// Monte Carlo `‖X‖_p` from `trials` independent draws; draw `t` uses its
/// own stream `(seed, t)`.
pub fn lp_norm_estimate<S>(sampler: S, p: f64, trials: u64, seed: u64) -> Result<MomentEstimate>
where
    S: Fn(&mut ChaCha8Rng) -> f64 + Sync + Send,
{
    if trials < 100 {
        return Err(invalid("trials", format!("{trials} < 100")));
    }
    let values = draw_values(&sampler, trials, seed, crate::parallel::Exec::default());
    lp_norm_from_values(&values, p, 0, seed)
}

pub(crate) fn draw_values<S>(sampler: &S, trials: u64, seed: u64, exec: crate::parallel::Exec) -> Vec<f64>
where
    S: Fn(&mut ChaCha8Rng) -> f64 + Sync + Send,
{
    map_chunks(exec, trials, 4096, |range| {
        range
            .map(|t| sampler(&mut stream_rng(seed, t)))
            .collect::<Vec<f64>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Ordinary least squares of `ln value` on `ln n`.
pub fn scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints(points.len()));
    }
    for &(n, value) in points {
        if !(value > 0.0) || !(n > 0.0) {
            return Err(Error::NonPositive { n, value });
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("points", "all n are equal"));
    }
    let exponent = sxy / sxx;
    let log_prefactor = my - exponent * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - log_prefactor - exponent * x).powi(2))
        .sum();
    let r_squared = if syy <= f64::EPSILON * m * my.abs().max(1.0) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    let exponent_std_error = if points.len() > 2 {
        (ss_res / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(ScalingFit {
        exponent,
        log_prefactor,
        r_squared,
        exponent_std_error,
        points: points.to_vec(),
    })
}

/// `E[v · v∘T^lag]` with a normal 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub lag: u64,
    pub value: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Time-and-ensemble estimates of `∫ v · v∘T^n dμ` for every `n` in `lags`.
///
/// `mc.trials` independent orbits are started near stationarity; orbit `t`
/// averages `v(T^i x) v(T^{i+n} x)` over `0 ≤ i < mc.orbit_len`. The
/// interval uses the spread of the per-orbit averages. `v` should already
/// be centered.
pub fn autocorrelation(
    map: &MapSystem,
    v: &HolderObservable,
    lags: &[u64],
    mc: &McConfig,
) -> Result<Vec<CorrelationEstimate>> {
    if mc.trials < 2 {
        return Err(invalid("trials", "need at least two orbits"));
    }
    let max_lag = lags.iter().copied().max().unwrap_or(0) as usize;
    let orbit_len = mc.orbit_len.max(1) as usize;
    let burn_in = mc.burn_in.unwrap_or_else(|| map.default_burn_in());
    let per_orbit: Vec<Vec<f64>> = map_indexed(mc.exec, mc.trials as usize, |t| {
        let mut rng = stream_rng(mc.seed, t as u64);
        let mut cursor = OrbitCursor::stationary(*map, &mut rng, burn_in);
        let values: Vec<f64> = (0..orbit_len + max_lag)
            .map(|_| v.eval(&cursor.next_point()))
            .collect();
        lags.iter()
            .map(|&lag| {
                let lag = lag as usize;
                let products: Vec<f64> = (0..orbit_len).map(|i| values[i] * values[i + lag]).collect();
                pairwise_mean(&products)
            })
            .collect()
    });
    let trials = per_orbit.len() as f64;
    Ok(lags
        .iter()
        .enumerate()
        .map(|(j, &lag)| {
            let xs: Vec<f64> = per_orbit.iter().map(|row| row[j]).collect();
            let mean = pairwise_sum(&xs) / trials;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1.0);
            let se = (var / trials).sqrt();
            CorrelationEstimate {
                lag,
                value: mean,
                std_error: se,
                ci_low: mean - 1.96 * se,
                ci_high: mean + 1.96 * se,
            }
        })
        .collect())
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Two-sample Kolmogorov–Smirnov distance `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("sample", "both samples must be nonempty"));
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0_f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// One-sample Kolmogorov–Smirnov distance against a continuous CDF.
pub fn ks_distance_to_cdf<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    if sample.is_empty() {
        return Err(invalid("sample", "must be nonempty"));
    }
    let s = sorted(sample);
    let n = s.len() as f64;
    Ok(s.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    }))
}

/// Asymptotic 95% critical value of the two-sample KS statistic.
pub fn ks_critical_95(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.358 * ((n + m) / (n * m)).sqrt()
}

/// One row of the independent-sums moment check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependentSumRow {
    pub k: usize,
    /// `E|Σ X_i|^p`
    pub lhs: f64,
    /// `(Σ E X_i²)^{p/2} + Σ E|X_i|^p` for `p > 2`, `Σ E|X_i|^p` otherwise.
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependentSumReport {
    pub p: f64,
    pub rows: Vec<IndependentSumRow>,
    /// Largest observed ratio, the empirical constant.
    pub c_fit: f64,
    /// The ratio has levelled off: its last doubling step grew it by less
    /// than 10%.
    pub bounded: bool,
}

/// Empirical check of the von Bahr–Esseen (`p ≤ 2`) and Rosenthal (`p > 2`)
/// inequalities for sums of `k` i.i.d. mean-zero draws of `dist`.
pub fn independent_sum_moment_check<S>(
    dist: S,
    ks: &[usize],
    p: f64,
    trials: u64,
    seed: u64,
) -> Result<IndependentSumReport>
where
    S: Fn(&mut ChaCha8Rng) -> f64 + Sync + Send,
{
    if !(p >= 1.0) {
        return Err(invalid("p", format!("{p} must be at least 1")));
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(invalid("k", "need a nonempty list of positive block counts"));
    }
    let marginal = draw_values(&dist, trials, derive_seed(seed, 1), Default::default());
    let m2 = pairwise_mean(&marginal.iter().map(|x| x * x).collect::<Vec<_>>());
    let mp = pairwise_mean(&marginal.iter().map(|x| x.abs().powf(p)).collect::<Vec<_>>());
    let rows: Vec<IndependentSumRow> = ks
        .iter()
        .map(|&k| {
            let sums = draw_values(
                &|rng: &mut ChaCha8Rng| (0..k).map(|_| dist(rng)).sum::<f64>(),
                trials,
                derive_seed(seed, 2 + k as u64),
                Default::default(),
            );
            let lhs = pairwise_mean(&sums.iter().map(|s| s.abs().powf(p)).collect::<Vec<_>>());
            let kf = k as f64;
            let rhs = if p > 2.0 {
                (kf * m2).powf(p / 2.0) + kf * mp
            } else {
                kf * mp
            };
            let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
            IndependentSumRow { k, lhs, rhs, ratio }
        })
        .collect();
    let c_fit = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let bounded = match rows.as_slice() {
        [.., prev, last] => last.ratio <= 1.1 * prev.ratio + 1e-12,
        _ => true,
    };
    Ok(IndependentSumReport {
        p,
        rows,
        c_fit,
        bounded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn lp_constant_and_coin() {
        let c = lp_norm_estimate(|_| -2.5, 3.0, 200, 1).unwrap();
        assert_eq!(c.value, 2.5);
        assert_eq!((c.ci_low, c.ci_high), (2.5, 2.5));
        let coin = lp_norm_estimate(|r| if r.random::<bool>() { 1.0 } else { -1.0 }, 2.0, 500, 1).unwrap();
        assert_eq!(coin.value, 1.0);
        assert!(lp_norm_estimate(|_| 1.0, 2.0, 99, 1).is_err());
        assert!(lp_norm_estimate(|_| 1.0, 0.5, 200, 1).is_err());
    }

    #[test]
    fn lp_uniform_second_moment() {
        let e = lp_norm_estimate(|r| r.random::<f64>(), 2.0, 100_000, 3).unwrap();
        let truth = 1.0 / 3f64.sqrt();
        assert!(e.ci_low <= e.value && e.value <= e.ci_high);
        assert!((e.value - truth).abs() < 4.0 * e.std_error, "{} vs {truth}", e.value);
        assert!(e.ci_high - e.ci_low < 8.0 * e.std_error);
    }

    #[test]
    fn lp_monotone_in_p() {
        let values = draw_values(
            &|r: &mut ChaCha8Rng| StandardNormal.sample(r),
            5000,
            2,
            Default::default(),
        );
        let mut last = 0.0;
        for p in [1.0, 1.5, 2.0, 3.0, 4.0] {
            let v = lp_norm_from_values(&values, p, 0, 1).unwrap().value;
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn bootstrap_covers_gaussian_mean() {
        let covered = (0..100)
            .filter(|&rep| {
                let xs = draw_values(
                    &|r: &mut ChaCha8Rng| StandardNormal.sample(r),
                    400,
                    1000 + rep,
                    Default::default(),
                );
                let (_, _, (lo, hi)) = bootstrap_mean_ci(&xs, 1000, rep);
                lo <= 0.0 && 0.0 <= hi
            })
            .count();
        assert!(covered >= 90, "coverage {covered}/100");
    }

    #[test]
    fn batch_bootstrap_width_matches_normal_theory() {
        let xs = draw_values(
            &|r: &mut ChaCha8Rng| StandardNormal.sample(r),
            200_000,
            5,
            Default::default(),
        );
        let (_, se, (lo, hi)) = bootstrap_mean_ci(&xs, 1000, 5);
        assert_relative_eq!(hi - lo, 2.0 * 1.96 * se, max_relative = 0.15);
    }

    #[test]
    fn fit_examples() {
        let pts: Vec<(f64, f64)> = [64.0, 128.0, 256.0, 512.0].iter().map(|&n: &f64| (n, 2.0 * n.sqrt())).collect();
        let f = scaling_fit(&pts).unwrap();
        assert_relative_eq!(f.exponent, 0.5, epsilon = 1e-12);
        assert_relative_eq!(f.log_prefactor, 2f64.ln(), epsilon = 1e-10);
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);

        let flat = scaling_fit(&[(1.0, 3.0), (2.0, 3.0), (4.0, 3.0)]).unwrap();
        assert_relative_eq!(flat.exponent, 0.0, epsilon = 1e-12);
        assert_eq!(flat.r_squared, 1.0);

        let decay: Vec<(f64, f64)> = [2.0, 4.0, 8.0, 16.0].iter().map(|&n: &f64| (n, n.powf(-1.5))).collect();
        assert_relative_eq!(scaling_fit(&decay).unwrap().exponent, -1.5, epsilon = 1e-12);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(scaling_fit(&[(1.0, 1.0), (2.0, 2.0)]), Err(Error::TooFewPoints(2))));
        assert!(matches!(
            scaling_fit(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]),
            Err(Error::NonPositive { .. })
        ));
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(ks_distance(&[0.0; 5], &[1.0; 7]).unwrap(), 1.0);
        assert!(ks_distance(&[], &[1.0]).is_err());
        let a = draw_values(&|r: &mut ChaCha8Rng| r.random::<f64>(), 10_000, 1, Default::default());
        let b = draw_values(&|r: &mut ChaCha8Rng| r.random::<f64>(), 10_000, 2, Default::default());
        assert!(ks_distance(&a, &b).unwrap() < 0.03);
        assert!(ks_distance_to_cdf(&a, |x| x.clamp(0.0, 1.0)).unwrap() < 0.02);
    }

    #[test]
    fn rosenthal_rademacher() {
        let coin = |r: &mut ChaCha8Rng| if r.random::<bool>() { 1.0 } else { -1.0 };
        let ks = [1, 2, 4, 8, 16, 32, 64];
        let rep = independent_sum_moment_check(coin, &ks, 4.0, 40_000, 9).unwrap();
        assert!(rep.bounded);
        for row in &rep.rows {
            let k = row.k as f64;
            let exact = 3.0 * k * k - 2.0 * k;
            assert_relative_eq!(row.lhs, exact, max_relative = 0.08);
        }
        let last = rep.rows.last().unwrap();
        assert_relative_eq!(last.lhs / (last.k * last.k) as f64, 3.0, max_relative = 0.08);
        // k = 1: |X|^4 = 1 on both sides, rhs = 1 + 1.
        assert_relative_eq!(rep.rows[0].ratio, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn von_bahr_esseen_branch_and_zero() {
        let u = |r: &mut ChaCha8Rng| r.random::<f64>() - 0.5;
        let rep = independent_sum_moment_check(u, &[1, 4, 16, 64], 1.5, 20_000, 3).unwrap();
        assert!(rep.c_fit.is_finite() && rep.c_fit > 0.0);
        let zero = independent_sum_moment_check(|_| 0.0, &[1, 2, 4], 3.0, 1000, 3).unwrap();
        assert!(zero.rows.iter().all(|r| r.lhs == 0.0 && r.rhs == 0.0));
    }
}
