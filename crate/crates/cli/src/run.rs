use anyhow::{Context, Result};
use slowmix::criteria::{self, Verdict};
use slowmix::experiments::{correlation_scan, fcb_gap_scan, sample_sums, tower_psi_scan, ScalingReport};
use slowmix::fastslow::{
    green_kubo_sigma, homogenisation_run, Diffusion, Drift, FastSlowSpec, HomogenisationRun, LimitSde, Reference,
};
use slowmix::parallel::derive_seed;
use slowmix::selftest::{run_selftest, SelftestConfig};
use slowmix::special::normal_cdf;
use slowmix::tower::{PsiEstimator, TowerSpec};
use slowmix::weakdep::{weakdep_gap_experiment, Functional, PointFunctional};
use slowmix::{HolderObservable, MapSystem, McConfig};

use crate::config::{EstimatorChoice, Experiment, ExperimentConfig, MapChoice, ObservableId};
use crate::output::{Cell, Outcome, Table};

/// Phase step between the cosine factors of the fcb functional.
const FCB_PHASE_STEP: f64 = 0.05;

/// Grid intervals in `distribution.csv`.
const DISTRIBUTION_GRID: usize = 400;

/// Orbit length used when estimating `∫ v dμ` by simulation.
const CENTER_ORBIT_LEN: u64 = 100_000;

fn base_observable(id: ObservableId) -> HolderObservable {
    match id {
        ObservableId::Cos => HolderObservable::cosine(1.0),
        ObservableId::X => HolderObservable::coordinate(0),
    }
}

/// Mean-zero version of `id` under the invariant measure. The doubling map
/// preserves Lebesgue measure, so its means are exact.
fn centered(cfg: &ExperimentConfig, map: &MapSystem, id: ObservableId, role: u64) -> HolderObservable {
    let v = base_observable(id);
    if cfg.map == MapChoice::Doubling {
        return v.with_offset(if id == ObservableId::X { 0.5 } else { 0.0 });
    }
    let samples = cfg.center_samples.unwrap_or(10_000_000);
    let orbits = (samples / CENTER_ORBIT_LEN).max(10);
    v.center(
        map,
        &McConfig::new(orbits, derive_seed(cfg.seed, 100 + role)).with_orbit_len(CENTER_ORBIT_LEN),
    )
}

fn mc(cfg: &ExperimentConfig) -> McConfig {
    let mut mc = McConfig::new(cfg.trials(), cfg.seed).with_orbit_len(cfg.orbit_len());
    if let Some(b) = cfg.burn_in {
        mc = mc.with_burn_in(b);
    }
    mc
}

/// The acceptance thresholds are stated for the doubling map and for LSV at
/// one parameter value.
fn acceptance_map(cfg: &ExperimentConfig) -> Option<bool> {
    match cfg.map {
        MapChoice::Doubling => Some(true),
        MapChoice::Lsv if cfg.alpha == Some(criteria::LSV_ALPHA) => Some(false),
        _ => None,
    }
}

fn offset_extra(out: &mut Outcome, name: &str, v: &HolderObservable) {
    out.extra(&format!("{name}_offset"), v.mean_offset);
    out.extra(&format!("{name}_offset_std_error"), v.offset_std_error);
}

fn moment_table(report: &ScalingReport) -> Table {
    let mut t = Table::new(&["n", "p", "value", "ci_low", "ci_high", "std_error", "trials"]);
    for r in &report.rows {
        t.push(vec![
            r.n.into(),
            r.p.into(),
            r.value.into(),
            r.ci_low.into(),
            r.ci_high.into(),
            r.std_error.into(),
            r.trials.into(),
        ]);
    }
    t
}

fn first_n(cfg: &ExperimentConfig) -> u64 {
    cfg.n_list().first().copied().unwrap_or(1)
}

fn moments(cfg: &ExperimentConfig, iterated: bool) -> Result<Outcome> {
    let map = cfg.map_system()?;
    let v = centered(cfg, &map, cfg.v.unwrap_or(ObservableId::Cos), 0);
    let w = centered(cfg, &map, cfg.w.unwrap_or(ObservableId::X), 1);
    let samples = sample_sums(&map, &v, &w, cfg.n_list(), &mc(cfg))?;
    let p = cfg.p.context("p was not resolved")?;
    let min_fit = first_n(cfg);
    let report = if iterated {
        samples.iterated_moments(p, min_fit)?
    } else {
        samples.birkhoff_moments(p, min_fit)?
    };
    let mut out = Outcome {
        table: moment_table(&report),
        ..Outcome::default()
    };
    offset_extra(&mut out, "v", &v);
    if iterated {
        offset_extra(&mut out, "w", &w);
    }
    if let Some(doubling) = acceptance_map(cfg) {
        out.checks.push(if iterated {
            criteria::iterated_exponent(report.fit.as_ref())
        } else {
            criteria::birkhoff_exponent(doubling, report.fit.as_ref())
        });
    }
    out.fits.push((if iterated { "iterated" } else { "birkhoff" }.to_string(), report.fit));
    Ok(out)
}

fn correlation(cfg: &ExperimentConfig) -> Result<Outcome> {
    let map = cfg.map_system()?;
    let v = centered(cfg, &map, cfg.v.unwrap_or(ObservableId::Cos), 0);
    let report = correlation_scan(&map, &v, cfg.n_list(), &mc(cfg), first_n(cfg))?;
    let mut t = Table::new(&["lag", "value", "std_error", "ci_low", "ci_high"]);
    for r in &report.rows {
        t.push(vec![r.lag.into(), r.value.into(), r.std_error.into(), r.ci_low.into(), r.ci_high.into()]);
    }
    let mut out = Outcome {
        table: t,
        ..Outcome::default()
    };
    offset_extra(&mut out, "v", &v);
    out.extra("geometric_ratio", report.geometric_ratio);
    out.extra("rows_above_noise", report.rows_above_noise);
    match acceptance_map(cfg) {
        Some(true) => out.checks.push(criteria::doubling_ratio(report.geometric_ratio)),
        Some(false) => out.checks.push(criteria::correlation_slope(&report)),
        None => {}
    }
    if let Some(r) = report.geometric_ratio {
        out.notes.push(format!("geometric ratio: {r:.5}"));
    }
    out.fits.push(("correlation".to_string(), report.power_fit));
    Ok(out)
}

fn tower(cfg: &ExperimentConfig) -> Result<Outcome> {
    let beta = cfg.beta.context("beta was not resolved")?;
    let theta = cfg.theta.context("theta was not resolved")?;
    let spec = TowerSpec::pareto(beta, theta)?;
    let estimator = match cfg.estimator.unwrap_or_default() {
        EstimatorChoice::Conditional => PsiEstimator::Conditional,
        EstimatorChoice::Direct => PsiEstimator::Direct,
    };
    let report = tower_psi_scan(&spec, theta, cfg.n_list(), &mc(cfg), estimator, first_n(cfg))?;
    let mut out = Outcome {
        table: moment_table(&report),
        ..Outcome::default()
    };
    out.table.columns[1] = "theta";
    out.checks.push(criteria::tower_slope(beta, report.fit.as_ref()));
    out.fits.push(("tower".to_string(), report.fit));
    Ok(out)
}

fn weakdep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let map = cfg.map_system()?;
    let v = centered(cfg, &map, cfg.v.unwrap_or(ObservableId::Cos), 0);
    let k = cfg.k.unwrap_or(2);
    let f = Functional::tanh_product(k as usize)?;
    let rows = weakdep_gap_experiment(&map, &v, &f, cfg.n_list(), k, &mc(cfg))?;
    let mut t = Table::new(&[
        "n",
        "k",
        "gap",
        "min_gap",
        "joint_mean",
        "independent_mean",
        "delta",
        "std_error",
        "ci_low",
        "ci_high",
        "below_noise",
    ]);
    for r in &rows {
        t.push(vec![
            r.n.into(),
            r.k.into(),
            r.gap.into(),
            r.min_gap.into(),
            r.joint_mean.into(),
            r.independent_mean.into(),
            r.delta.into(),
            r.std_error.into(),
            r.ci_low.into(),
            r.ci_high.into(),
            r.below_noise().into(),
        ]);
    }
    let mut out = Outcome {
        table: t,
        ..Outcome::default()
    };
    offset_extra(&mut out, "v", &v);
    out.extra("first_gap_below_noise", criteria::first_gap_below_noise(&rows));
    match acceptance_map(cfg) {
        Some(true) => out.checks.push(criteria::weakdep_doubling(&rows)),
        Some(false) => out.checks.push(criteria::weakdep_decay("weakdep lsv", &rows)),
        None => {}
    }
    Ok(out)
}

fn fcb(cfg: &ExperimentConfig) -> Result<Outcome> {
    let map = cfg.map_system()?;
    let q = cfg.q.unwrap_or(3);
    let observables = (0..q)
        .map(|j| HolderObservable::shifted_cosine(1.0, FCB_PHASE_STEP * j as f64))
        .collect();
    let g = PointFunctional::product(observables, 1)?;
    let report = fcb_gap_scan(&map, &g, cfg.n_list(), &mc(cfg))?;
    let mut t = Table::new(&["gap", "times", "joint", "split", "delta", "std_error", "ci_low", "ci_high", "below_noise"]);
    for r in &report.rows {
        let times: Vec<String> = r.times.iter().map(u64::to_string).collect();
        t.push(vec![
            r.gap.into(),
            Cell::Text(times.join(";")),
            r.joint.into(),
            r.split.into(),
            r.delta.into(),
            r.std_error.into(),
            r.ci_low.into(),
            r.ci_high.into(),
            r.below_noise().into(),
        ]);
    }
    let mut out = Outcome {
        table: t,
        ..Outcome::default()
    };
    out.extra("rows_above_noise", report.rows_above_noise);
    out.notes.push(format!("rows above the noise floor: {}", report.rows_above_noise));
    if acceptance_map(cfg) == Some(false) {
        out.checks.push(criteria::fcb_slope(&report));
    }
    out.fits.push(("fcb".to_string(), report.fit));
    Ok(out)
}

fn fastslow(cfg: &ExperimentConfig) -> Result<Outcome> {
    let map = cfg.map_system()?;
    let id = cfg.v.unwrap_or(ObservableId::Cos);
    let v = centered(cfg, &map, id, 0);
    let xi = cfg.xi.unwrap_or(0.0);
    let t_end = cfg.t_end.unwrap_or(1.0);
    let l_max = cfg.l_max.context("l_max was not resolved")?;
    let gk_mc = McConfig::new(cfg.gk_orbits.unwrap_or(100), derive_seed(cfg.seed, 50))
        .with_orbit_len(cfg.gk_orbit_len.unwrap_or(100_000));
    let gk = green_kubo_sigma(&map, &v, l_max, &gk_mc)?;
    let var = gk.sigma2 * t_end;
    let reference = if cfg.map == MapChoice::Doubling {
        Reference::Gaussian { mean: xi, var }
    } else {
        Reference::EulerMaruyama {
            sde: LimitSde::additive(Drift::Zero, gk.sigma2),
            dt: cfg.dt.unwrap_or(1e-3 * t_end),
            paths: cfg.ref_paths.unwrap_or(cfg.trials()),
        }
    };
    let n_list = cfg.n_list();
    let spec = FastSlowSpec::new(map, Drift::Zero, Diffusion::Additive { v: v.clone() }, xi, n_list[0])?
        .with_t_end(t_end)?;
    let run = homogenisation_run(&spec, &reference, n_list, &mc(cfg))?;
    let rows = run.rows.clone();
    let mut t = Table::new(&[
        "n",
        "ks",
        "ks_critical",
        "mean_fast",
        "mean_ref",
        "var_fast",
        "var_ref",
        "mean_diff",
        "var_diff",
        "discarded",
    ]);
    for r in &rows {
        t.push(vec![
            r.n.into(),
            r.ks.into(),
            r.ks_critical.into(),
            r.mean_fast.into(),
            r.mean_ref.into(),
            r.var_fast.into(),
            r.var_ref.into(),
            r.mean_diff.into(),
            r.var_diff.into(),
            r.discarded.into(),
        ]);
    }
    let mut out = Outcome {
        table: t,
        ..Outcome::default()
    };
    offset_extra(&mut out, "v", &v);
    out.extra("green_kubo", &gk);
    out.extra("reference", reference);
    out.aux.push(("distribution.csv", distribution_table(&run, reference)));
    out.notes.push(format!(
        "green-kubo sigma2: {:.6} (se {:.2e}); direct n^-1 E S^2 at n={}: {:.6}",
        gk.sigma2, gk.std_error, gk.direct_n, gk.direct
    ));
    match acceptance_map(cfg) {
        Some(true) => {
            if let Some(last) = rows.last() {
                out.checks.push(criteria::homogenisation_ks(last));
            }
            if id == ObservableId::X {
                out.checks.push(criteria::green_kubo_doubling(&gk));
            }
        }
        Some(false) => out.checks.push(criteria::homogenisation_trend(&rows)),
        None => {}
    }
    Ok(out)
}

/// Empirical CDF of the fast–slow endpoints at the largest `n` against the
/// reference CDF, on an even grid over the pooled sample range.
fn distribution_table(run: &HomogenisationRun, reference: Reference) -> Table {
    let mut fast = run.last_endpoints.clone();
    fast.sort_by(f64::total_cmp);
    let mut refs = run.reference_endpoints.clone();
    refs.sort_by(f64::total_cmp);
    let ecdf = |xs: &[f64], x: f64| xs.partition_point(|&y| y <= x) as f64 / xs.len() as f64;
    let ends = |xs: &[f64]| xs.first().copied().zip(xs.last().copied());
    let (mut lo, mut hi) = ends(&fast).unwrap_or((0.0, 0.0));
    match reference {
        Reference::Gaussian { mean, var } => {
            lo = lo.min(mean - 4.0 * var.sqrt());
            hi = hi.max(mean + 4.0 * var.sqrt());
        }
        Reference::EulerMaruyama { .. } => {
            if let Some((a, b)) = ends(&refs) {
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
    }
    let n = run.rows.last().map_or(0, |r| r.n);
    let mut t = Table::new(&["n", "x", "cdf_fast", "cdf_reference"]);
    for i in 0..=DISTRIBUTION_GRID {
        let x = lo + (hi - lo) * i as f64 / DISTRIBUTION_GRID as f64;
        let r = match reference {
            Reference::Gaussian { mean, var } if var > 0.0 => normal_cdf((x - mean) / var.sqrt()),
            Reference::Gaussian { mean, .. } => f64::from(u8::from(x >= mean)),
            Reference::EulerMaruyama { .. } => ecdf(&refs, x),
        };
        t.push(vec![n.into(), x.into(), ecdf(&fast, x).into(), r.into()]);
    }
    t
}

fn selftest(cfg: &ExperimentConfig) -> Outcome {
    let st = if cfg.quick.unwrap_or(false) {
        SelftestConfig::quick(cfg.seed)
    } else {
        SelftestConfig::full(cfg.seed)
    };
    let verdicts: Vec<Verdict> = run_selftest(&st);
    let mut t = Table::new(&["check", "pass", "detail"]);
    for v in &verdicts {
        t.push(vec![Cell::Text(v.name.clone()), v.pass.into(), Cell::Text(v.detail.clone())]);
    }
    let mut out = Outcome {
        table: t,
        checks: verdicts,
        ..Outcome::default()
    };
    out.extra("selftest", st);
    out
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::Moments => moments(cfg, false),
        Experiment::IteratedMoments => moments(cfg, true),
        Experiment::Correlation => correlation(cfg),
        Experiment::TowerPsi => tower(cfg),
        Experiment::Weakdep => weakdep(cfg),
        Experiment::Fcb => fcb(cfg),
        Experiment::Fastslow => fastslow(cfg),
        Experiment::Selftest => Ok(selftest(cfg)),
    }
}
