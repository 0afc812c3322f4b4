//! Acceptance thresholds and the checks that apply them. Both the CLI's
//! `--check` flag and the acceptance test suite read from this table.

use serde::Serialize;

use crate::experiments::{CorrelationReport, FcbReport};
use crate::fastslow::{GreenKubo, HomogenisationRow};
use crate::stats::ScalingFit;
use crate::weakdep::GapRow;

pub const CHEN_REL_TOL: f64 = 1e-9;
pub const CHEN_INSTANCES: usize = 1_000;
pub const STREAM_REL_TOL: f64 = 1e-9;
pub const STREAM_MAX_WINDOW: u64 = 10_000;
pub const PARTITION_MAX_N: u64 = 10_000;
pub const PARTITION_MAX_K: u64 = 64;
pub const FUNCTIONAL_BOUND_PAIRS: u64 = 100_000;
pub const RETURN_TAIL_DRAWS: u64 = 10_000_000;
pub const RETURN_TAIL_SIGMAS: f64 = 3.0;

pub const TOWER_BETAS: [f64; 3] = [1.5, 2.5, 4.0];
pub const TOWER_THETA: f64 = 0.5;
pub const TOWER_TRIALS: u64 = 1_000_000;
pub const TOWER_SLOPE_TOL: f64 = 0.2;

pub const LSV_ALPHA: f64 = 0.4;
pub const CORRELATION_SLOPE: (f64, f64) = (-1.8, -1.2);
pub const DOUBLING_RATIO: f64 = 0.5;
pub const DOUBLING_RATIO_TOL: f64 = 0.05;

pub const MOMENT_TRIALS: u64 = 100_000;
pub const BIRKHOFF_EXPONENT_LSV: (f64, f64) = (0.45, 0.60);
pub const BIRKHOFF_EXPONENT_DOUBLING: (f64, f64) = (0.48, 0.53);
pub const ITERATED_EXPONENT: (f64, f64) = (0.90, 1.10);

pub const FCB_SLOPE_MAX: f64 = -1.2;
pub const WEAKDEP_DOUBLING_GAP: f64 = 60.0;

pub const HOMOGENISATION_KS_MAX: f64 = 0.05;
pub const HOMOGENISATION_PATHS: u64 = 100_000;
pub const GREEN_KUBO_DOUBLING: f64 = 0.25;
pub const GREEN_KUBO_TOL: f64 = 0.01;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }

    /// `PASS name: detail` or `FAIL name: detail`.
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub fn in_range(name: &str, value: f64, (lo, hi): (f64, f64)) -> Verdict {
    Verdict::new(
        name,
        value >= lo && value <= hi,
        format!("{value:.4} in [{lo}, {hi}]"),
    )
}

fn fit_exponent(fit: Option<&ScalingFit>) -> f64 {
    fit.map(|f| f.exponent).unwrap_or(f64::NAN)
}

/// Fitted decay of `∫ θ^{ψ_n}` within `TOWER_SLOPE_TOL` of `-(β - 1)`.
pub fn tower_slope(beta: f64, fit: Option<&ScalingFit>) -> Verdict {
    let target = -(beta - 1.0);
    let e = fit_exponent(fit);
    Verdict::new(
        format!("tower slope beta={beta}"),
        (e - target).abs() <= TOWER_SLOPE_TOL,
        format!("slope {e:.4}, target {target} ± {TOWER_SLOPE_TOL}"),
    )
}

pub fn birkhoff_exponent(doubling: bool, fit: Option<&ScalingFit>) -> Verdict {
    let (name, range) = if doubling {
        ("birkhoff exponent doubling", BIRKHOFF_EXPONENT_DOUBLING)
    } else {
        ("birkhoff exponent lsv", BIRKHOFF_EXPONENT_LSV)
    };
    in_range(name, fit_exponent(fit), range)
}

pub fn iterated_exponent(fit: Option<&ScalingFit>) -> Verdict {
    in_range("iterated exponent", fit_exponent(fit), ITERATED_EXPONENT)
}

pub fn correlation_slope(report: &CorrelationReport) -> Verdict {
    in_range("correlation slope", fit_exponent(report.power_fit.as_ref()), CORRELATION_SLOPE)
}

pub fn doubling_ratio(ratio: Option<f64>) -> Verdict {
    let r = ratio.unwrap_or(f64::NAN);
    Verdict::new(
        "doubling geometric ratio",
        (r - DOUBLING_RATIO).abs() <= DOUBLING_RATIO_TOL,
        format!("ratio {r:.4}, target {DOUBLING_RATIO} ± {DOUBLING_RATIO_TOL}"),
    )
}

pub fn fcb_slope(report: &FcbReport) -> Verdict {
    let e = fit_exponent(report.fit.as_ref());
    Verdict::new(
        "fcb slope",
        e <= FCB_SLOPE_MAX,
        format!(
            "slope {e:.4} over {} gaps above the noise floor, need ≤ {FCB_SLOPE_MAX}",
            report.rows_above_noise
        ),
    )
}

/// Smallest gap at which `delta` is within twice its standard error.
pub fn first_gap_below_noise(rows: &[GapRow]) -> Option<f64> {
    rows.iter().find(|r| r.below_noise()).map(|r| r.gap)
}

/// `delta` shrinks from the first to the last row and reaches the noise
/// floor somewhere in the scan.
pub fn weakdep_decay(name: &str, rows: &[GapRow]) -> Verdict {
    let (first, last) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (a.delta, b.delta),
        _ => return Verdict::new(name, false, "no rows"),
    };
    let floor = first_gap_below_noise(rows);
    Verdict::new(
        name,
        last <= first && floor.is_some(),
        format!(
            "delta {first:.3e} -> {last:.3e}, first gap below 2 SE: {}",
            floor.map_or("none".to_string(), |g| g.to_string())
        ),
    )
}

pub fn weakdep_doubling(rows: &[GapRow]) -> Verdict {
    let floor = first_gap_below_noise(rows);
    Verdict::new(
        "weakdep doubling",
        floor.is_some_and(|g| g <= WEAKDEP_DOUBLING_GAP),
        format!(
            "first gap below 2 SE: {}, need ≤ {WEAKDEP_DOUBLING_GAP}",
            floor.map_or("none".to_string(), |g| g.to_string())
        ),
    )
}

pub fn homogenisation_ks(row: &HomogenisationRow) -> Verdict {
    Verdict::new(
        format!("homogenisation ks n={}", row.n),
        row.ks < HOMOGENISATION_KS_MAX,
        format!("KS {:.4} < {HOMOGENISATION_KS_MAX}", row.ks),
    )
}

/// KS distances do not increase along the rows by more than the sampling
/// resolution (the 95% critical value of each later row).
pub fn homogenisation_trend(rows: &[HomogenisationRow]) -> Verdict {
    let ok = rows.windows(2).all(|w| w[1].ks <= w[0].ks + w[1].ks_critical);
    let ks: Vec<String> = rows.iter().map(|r| format!("{}:{:.4}", r.n, r.ks)).collect();
    Verdict::new("homogenisation trend", ok && !rows.is_empty(), format!("KS by n {}", ks.join(" ")))
}

pub fn green_kubo_doubling(gk: &GreenKubo) -> Verdict {
    Verdict::new(
        "green-kubo doubling",
        (gk.sigma2 - GREEN_KUBO_DOUBLING).abs() <= GREEN_KUBO_TOL,
        format!("sigma2 {:.5}, target {GREEN_KUBO_DOUBLING} ± {GREEN_KUBO_TOL}", gk.sigma2),
    )
}
