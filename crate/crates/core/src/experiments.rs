//! Scaling experiments built from the lower-level modules: Birkhoff and
//! iterated-sum moments across `n`, tower return counts, correlation decay,
//! and gap scans of functional correlations.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::maps::{MapSystem, OrbitCursor};
use crate::observables::HolderObservable;
use crate::parallel::{map_chunks, stream_rng};
use crate::stats::{autocorrelation, lp_norm_from_values, scaling_fit, CorrelationEstimate, MomentEstimate, ScalingFit};
use crate::sums::SumAccumulator;
use crate::tower::{theta_psi_moment, PsiEstimator, TowerSpec};
use crate::weakdep::{fcb_functional_experiment_multi, FcbEstimate, PointFunctional};
use crate::McConfig;

/// Points with `n` below this are left out of scaling fits unless a caller
/// chooses otherwise; the bounds being tested are asymptotic.
pub const DEFAULT_MIN_FIT_N: u64 = 64;

/// Estimates at several `n` together with the log-log fit through them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<MomentEstimate>,
    /// `None` when fewer than three rows qualify.
    pub fit: Option<ScalingFit>,
}

/// Fits `value` against `n` over rows with `n ≥ min_n` and positive value.
pub fn fit_rows(rows: &[MomentEstimate], min_n: u64) -> Option<ScalingFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.n >= min_n && r.value > 0.0)
        .map(|r| (r.n as f64, r.value))
        .collect();
    scaling_fit(&pts).ok()
}

/// Per-trial samples of `S_v(n)` and `𝕊_{v,w}(n)` for every `n` in a list,
/// all read off one orbit per trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SumSamples {
    pub n_list: Vec<u64>,
    /// `s_v[j][t]` is `S_v(n_list[j])` along orbit `t`.
    pub s_v: Vec<Vec<f64>>,
    pub ss_vw: Vec<Vec<f64>>,
    pub seed: u64,
}

fn check_n_list(n_list: &[u64]) -> Result<()> {
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(invalid("n_list", "need a nonempty list of positive n"));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("n_list", "must be strictly increasing"));
    }
    Ok(())
}

/// Runs `mc.trials` stationary orbits of length `max(n_list)` and records the
/// Birkhoff sum of `v` and the iterated sum of `(v, w)` at each `n`.
pub fn sample_sums(
    map: &MapSystem,
    v: &HolderObservable,
    w: &HolderObservable,
    n_list: &[u64],
    mc: &McConfig,
) -> Result<SumSamples> {
    check_n_list(n_list)?;
    let burn_in = mc.burn_in.unwrap_or_else(|| map.default_burn_in());
    let per_trial: Vec<Vec<(f64, f64)>> = map_chunks(mc.exec, mc.trials, 16, |range| {
        range
            .map(|t| {
                let mut rng = stream_rng(mc.seed, t);
                let mut cursor = OrbitCursor::stationary(*map, &mut rng, burn_in);
                let mut acc = SumAccumulator::new();
                let mut out = Vec::with_capacity(n_list.len());
                let mut time = 0;
                for &n in n_list {
                    while time < n {
                        let p = cursor.next_point();
                        acc.push(v.eval(&p), w.eval(&p));
                        time += 1;
                    }
                    out.push((acc.s_v(), acc.ss_vw()));
                }
                out
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let column = |j: usize, pick: fn(&(f64, f64)) -> f64| per_trial.iter().map(|r| pick(&r[j])).collect();
    Ok(SumSamples {
        n_list: n_list.to_vec(),
        s_v: (0..n_list.len()).map(|j| column(j, |x| x.0)).collect(),
        ss_vw: (0..n_list.len()).map(|j| column(j, |x| x.1)).collect(),
        seed: mc.seed,
    })
}

impl SumSamples {
    /// `‖S_v(n)‖_p` at each `n` and its scaling fit.
    pub fn birkhoff_moments(&self, p: f64, min_fit_n: u64) -> Result<ScalingReport> {
        self.moments(&self.s_v, p, min_fit_n)
    }

    /// `‖𝕊_{v,w}(n)‖_p` at each `n` and its scaling fit.
    pub fn iterated_moments(&self, p: f64, min_fit_n: u64) -> Result<ScalingReport> {
        self.moments(&self.ss_vw, p, min_fit_n)
    }

    fn moments(&self, columns: &[Vec<f64>], p: f64, min_fit_n: u64) -> Result<ScalingReport> {
        let rows = self
            .n_list
            .iter()
            .zip(columns)
            .map(|(&n, xs)| lp_norm_from_values(xs, p, n, self.seed))
            .collect::<Result<Vec<_>>>()?;
        let fit = fit_rows(&rows, min_fit_n);
        Ok(ScalingReport { rows, fit })
    }
}

/// `∫ θ^{ψ_n} dμ_Δ` for each `n` and the fit of its decay.
pub fn tower_psi_scan(
    spec: &TowerSpec,
    theta: f64,
    n_list: &[u64],
    mc: &McConfig,
    estimator: PsiEstimator,
    min_fit_n: u64,
) -> Result<ScalingReport> {
    check_n_list(n_list)?;
    let rows = n_list
        .iter()
        .map(|&n| theta_psi_moment(spec, theta, n, mc, estimator))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_rows(&rows, min_fit_n);
    Ok(ScalingReport { rows, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationEstimate>,
    /// Log-log fit of `|ĉ(n)|` against `n` over the resolved lags.
    pub power_fit: Option<ScalingFit>,
    /// `exp` of the slope of `ln |ĉ(n)|` against `n` over the resolved
    /// lags, the per-step decay factor of an exponentially mixing system.
    pub geometric_ratio: Option<f64>,
    /// Leading positive lags (from `min_fit_lag` on) whose estimate exceeds
    /// twice its standard error; both summaries use only these.
    pub rows_above_noise: usize,
}

/// Least-squares slope of `ln |value|` against the lag, exponentiated.
pub fn geometric_ratio(rows: &[CorrelationEstimate]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.value != 0.0)
        .map(|r| (r.lag as f64, r.value.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| (sxy / sxx).exp())
}

/// Autocorrelations at `lags` with power-law and geometric summaries.
pub fn correlation_scan(
    map: &MapSystem,
    v: &HolderObservable,
    lags: &[u64],
    mc: &McConfig,
    min_fit_lag: u64,
) -> Result<CorrelationReport> {
    let rows = autocorrelation(map, v, lags, mc)?;
    let resolved: Vec<CorrelationEstimate> = rows
        .iter()
        .filter(|r| r.lag >= min_fit_lag.max(1))
        .take_while(|r| r.value.abs() > 2.0 * r.std_error)
        .copied()
        .collect();
    let pts: Vec<(f64, f64)> = resolved.iter().map(|r| (r.lag as f64, r.value.abs())).collect();
    Ok(CorrelationReport {
        power_fit: scaling_fit(&pts).ok(),
        geometric_ratio: geometric_ratio(&resolved),
        rows_above_noise: resolved.len(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcbReport {
    pub rows: Vec<FcbEstimate>,
    /// Fit of `delta` against the gap over the leading rows that stay above
    /// the noise floor.
    pub fit: Option<ScalingFit>,
    /// Number of leading rows used by the fit.
    pub rows_above_noise: usize,
}

/// Time tuples `(0, g, g + 1, ..., g + q - 2)` with the split after the
/// first coordinate, for each gap `g`.
pub fn fcb_times(q: usize, gaps: &[u64]) -> Vec<Vec<u64>> {
    gaps.iter()
        .map(|&g| std::iter::once(0).chain((0..q as u64 - 1).map(|j| g + j)).collect())
        .collect()
}

/// Runs the functional correlation experiment at each gap and fits the decay
/// of `delta` until it first falls to within twice its standard error.
pub fn fcb_gap_scan(map: &MapSystem, g: &PointFunctional, gaps: &[u64], mc: &McConfig) -> Result<FcbReport> {
    if g.split() != 1 {
        return Err(invalid("split", "gap scans place the split after the first coordinate"));
    }
    let rows = fcb_functional_experiment_multi(map, g, &fcb_times(g.arity(), gaps), mc)?;
    let rows_above_noise = rows.iter().take_while(|r| !r.below_noise()).count();
    let pts: Vec<(f64, f64)> = rows[..rows_above_noise]
        .iter()
        .map(|r| (r.gap as f64, r.delta))
        .collect();
    Ok(FcbReport {
        fit: scaling_fit(&pts).ok(),
        rows,
        rows_above_noise,
    })
}

/// `n = 2^lo, ..., 2^hi`.
pub fn powers_of_two(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|j| 1u64 << j).collect()
}
