//! Weak dependence of block sums and multi-time functional correlations.
//!
//! [`weakdep_gap_experiment`] compares `E F(X_0, ..., X_{k-1})` for block
//! Birkhoff sums `X_i` taken from one orbit with the same expectation over
//! independent copies. [`fcb_functional_experiment`] compares the single-orbit
//! integral of a multi-time functional with its version split across two
//! independent orbits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::maps::{MapSystem, OrbitCursor, Point};
use crate::observables::HolderObservable;
use crate::parallel::{derive_seed, map_chunks, map_indexed, pairwise_mean, stream_rng};
use crate::sums::BlockScheme;
use crate::McConfig;

/// One coordinate factor `f(y)` of a product functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Factor {
    /// `f(y) = y`. Unbounded, so only meaningful inside [`PointFunctional`]
    /// where the argument is a bounded observable.
    Identity,
    /// `f(y) = tanh(scale · y)`
    Tanh { scale: f64 },
    /// `f(y) = cos(freq · y + phase)`
    Cosine { freq: f64, phase: f64 },
    Constant { value: f64 },
}

impl Factor {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            Factor::Identity => y,
            Factor::Tanh { scale } => (scale * y).tanh(),
            Factor::Cosine { freq, phase } => (freq * y + phase).cos(),
            Factor::Constant { value } => value,
        }
    }

    /// `sup |f|`, over `|y| ≤ radius` for the unbounded identity factor.
    pub fn sup_on(&self, radius: f64) -> f64 {
        match *self {
            Factor::Identity => radius,
            Factor::Tanh { .. } => 1.0,
            Factor::Cosine { .. } => 1.0,
            Factor::Constant { value } => value.abs(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Factor::Identity => 1.0,
            Factor::Tanh { scale } => scale.abs(),
            Factor::Cosine { freq, .. } => freq.abs(),
            Factor::Constant { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FunctionalKind {
    /// `F(y) = Π f_i(y_i)`
    Product { factors: Vec<Factor> },
    /// `F(y) = |Σ c(y_i)|^p` where `c` clamps to `[-radius, radius]`.
    PowerOfSum { p: f64, radius: f64 },
    /// Piecewise-linear interpolation of `values` on an equispaced grid over
    /// `[lo, hi]`, applied to `Σ y_i` (constant extension outside).
    Tabulated { lo: f64, hi: f64, values: Vec<f64> },
}

/// A real functional `F: R^q -> R` with known sup and Lipschitz bounds.
///
/// Lipschitz constants are taken with respect to the `ℓ¹` norm on `R^q`.
/// `split` is the index `p` at which a split (two-orbit) evaluation hands
/// over from the first orbit to the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub kind: FunctionalKind,
    pub arity: usize,
    pub split: usize,
    /// Coordinates are assumed to lie in `[-radius, radius]` when bounding a
    /// product containing [`Factor::Identity`].
    pub radius: f64,
}

impl Functional {
    pub fn product(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(invalid("factors", "need at least one factor"));
        }
        for f in &factors {
            let ok = match *f {
                Factor::Identity => true,
                Factor::Tanh { scale } => scale.is_finite(),
                Factor::Cosine { freq, phase } => freq.is_finite() && phase.is_finite(),
                Factor::Constant { value } => value.is_finite(),
            };
            if !ok {
                return Err(invalid("factors", "non-finite factor parameter"));
            }
        }
        let arity = factors.len();
        Ok(Functional {
            kind: FunctionalKind::Product { factors },
            arity,
            split: 0,
            radius: 1.0,
        })
    }

    /// `Π tanh(y_i)` in `k` variables.
    pub fn tanh_product(k: usize) -> Result<Self> {
        Self::product(vec![Factor::Tanh { scale: 1.0 }; k])
    }

    pub fn constant(k: usize, value: f64) -> Result<Self> {
        let mut factors = vec![Factor::Constant { value: 1.0 }; k];
        if let Some(f) = factors.first_mut() {
            *f = Factor::Constant { value };
        }
        Self::product(factors)
    }

    pub fn power_of_sum(k: usize, p: f64, radius: f64) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        if !(p >= 1.0) || !p.is_finite() {
            return Err(invalid("p", format!("{p} must be a finite number ≥ 1")));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid("radius", format!("{radius} must be positive")));
        }
        Ok(Functional {
            kind: FunctionalKind::PowerOfSum { p, radius },
            arity: k,
            split: 0,
            radius,
        })
    }

    pub fn tabulated(k: usize, lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        if !(lo < hi) || values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("table", "need lo < hi and at least two finite values"));
        }
        Ok(Functional {
            kind: FunctionalKind::Tabulated { lo, hi, values },
            arity: k,
            split: 0,
            radius: hi.abs().max(lo.abs()),
        })
    }

    pub fn with_split(mut self, split: usize) -> Result<Self> {
        if split >= self.arity {
            return Err(invalid("split", format!("{split} must be below the arity {}", self.arity)));
        }
        self.split = split;
        Ok(self)
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.arity);
        match &self.kind {
            FunctionalKind::Product { factors } => {
                factors.iter().zip(y).map(|(f, &yi)| f.eval(yi)).product()
            }
            FunctionalKind::PowerOfSum { p, radius } => y
                .iter()
                .map(|yi| yi.clamp(-radius, *radius))
                .sum::<f64>()
                .abs()
                .powf(*p),
            FunctionalKind::Tabulated { lo, hi, values } => {
                let s: f64 = y.iter().sum();
                let cells = (values.len() - 1) as f64;
                let pos = ((s - lo) / (hi - lo) * cells).clamp(0.0, cells);
                let i = (pos.floor() as usize).min(values.len() - 2);
                let frac = pos - i as f64;
                values[i] * (1.0 - frac) + values[i + 1] * frac
            }
        }
    }

    pub fn sup_bound(&self) -> f64 {
        match &self.kind {
            FunctionalKind::Product { factors } => {
                factors.iter().map(|f| f.sup_on(self.radius)).product()
            }
            FunctionalKind::PowerOfSum { p, radius } => (self.arity as f64 * radius).powf(*p),
            FunctionalKind::Tabulated { values, .. } => {
                values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }
        }
    }

    /// Lipschitz bound with respect to `ℓ¹`.
    pub fn lipschitz_bound(&self) -> f64 {
        match &self.kind {
            FunctionalKind::Product { factors } => {
                let sups: Vec<f64> = factors.iter().map(|f| f.sup_on(self.radius)).collect();
                factors
                    .iter()
                    .enumerate()
                    .map(|(i, f)| {
                        let others: f64 = sups
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != i)
                            .map(|(_, s)| s)
                            .product();
                        f.lipschitz() * others
                    })
                    .fold(0.0, f64::max)
            }
            FunctionalKind::PowerOfSum { p, radius } => {
                p * (self.arity as f64 * radius).powf(p - 1.0)
            }
            FunctionalKind::Tabulated { lo, hi, values } => {
                let h = (hi - lo) / (values.len() - 1) as f64;
                values
                    .windows(2)
                    .map(|w| (w[1] - w[0]).abs() / h)
                    .fold(0.0, f64::max)
            }
        }
    }
}

/// Result of sampling a functional against its declared bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub pairs: u64,
    pub max_abs: f64,
    pub max_quotient: f64,
    pub sup_bound: f64,
    pub lipschitz_bound: f64,
    pub sup_violations: u64,
    pub lipschitz_violations: u64,
}

/// Relative rounding allowance per evaluated quantity. Functionals like
/// `|y_0 + y_1|` attain their Lipschitz constant exactly, so the computed
/// quotient may exceed it by the rounding error of `F(y) - F(y')` over
/// `‖y - y'‖₁`.
const ROUNDING_SLACK: f64 = 16.0 * f64::EPSILON;

/// Samples `pairs` pairs `y, y'` uniformly from `[-radius, radius]^k` and
/// compares `|F|` and `|F(y) - F(y')| / ‖y - y'‖₁` with the declared bounds.
/// Every third pair is a small perturbation of its first point, to probe the
/// local slope.
pub fn check_bounds(f: &Functional, radius: f64, pairs: u64, seed: u64) -> BoundCheck {
    let k = f.arity;
    let (sup_bound, lipschitz_bound) = (f.sup_bound(), f.lipschitz_bound());
    let mut rng = stream_rng(seed, 0);
    let mut out = BoundCheck {
        pairs,
        max_abs: 0.0,
        max_quotient: 0.0,
        sup_bound,
        lipschitz_bound,
        sup_violations: 0,
        lipschitz_violations: 0,
    };
    let mut y = vec![0.0; k];
    let mut z = vec![0.0; k];
    for pair in 0..pairs {
        for yi in y.iter_mut() {
            *yi = rng.random_range(-radius..=radius);
        }
        if pair % 3 == 2 {
            for (zi, yi) in z.iter_mut().zip(&y) {
                *zi = (yi + rng.random_range(-1e-3..1e-3) * radius).clamp(-radius, radius);
            }
        } else {
            for zi in z.iter_mut() {
                *zi = rng.random_range(-radius..=radius);
            }
        }
        let (fy, fz) = (f.eval(&y), f.eval(&z));
        for v in [fy, fz] {
            out.max_abs = out.max_abs.max(v.abs());
            if v.abs() > sup_bound * (1.0 + ROUNDING_SLACK) {
                out.sup_violations += 1;
            }
        }
        let d: f64 = y.iter().zip(&z).map(|(a, b)| (a - b).abs()).sum();
        if d > 0.0 {
            let q = (fy - fz).abs() / d;
            out.max_quotient = out.max_quotient.max(q);
            let scale: f64 = y.iter().chain(&z).map(|a| a.abs()).sum();
            let slack = ROUNDING_SLACK * (fy.abs() + fz.abs() + lipschitz_bound * scale) / d;
            if q > lipschitz_bound + slack {
                out.lipschitz_violations += 1;
            }
        }
    }
    out
}

/// `G(x_0, ..., x_{q-1}) = F(v_0(x_0), ..., v_{q-1}(x_{q-1}))` on points of
/// the phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFunctional {
    pub observables: Vec<HolderObservable>,
    pub outer: Functional,
}

impl PointFunctional {
    pub fn new(observables: Vec<HolderObservable>, outer: Functional) -> Result<Self> {
        if observables.len() != outer.arity {
            return Err(invalid(
                "observables",
                format!("{} observables for a functional of arity {}", observables.len(), outer.arity),
            ));
        }
        if observables.len() < 2 {
            return Err(invalid("arity", "need q ≥ 2"));
        }
        Ok(PointFunctional { observables, outer })
    }

    /// `Π v_i(x_i)` with the given split index.
    pub fn product(observables: Vec<HolderObservable>, split: usize) -> Result<Self> {
        let radius = observables.iter().map(|v| v.sup_bound()).fold(0.0, f64::max);
        let outer = Functional::product(vec![Factor::Identity; observables.len()])?
            .with_radius(radius)
            .with_split(split)?;
        Self::new(observables, outer)
    }

    pub fn arity(&self) -> usize {
        self.observables.len()
    }

    pub fn split(&self) -> usize {
        self.outer.split
    }

    pub fn eval(&self, points: &[Point]) -> f64 {
        let ys: Vec<f64> = self
            .observables
            .iter()
            .zip(points)
            .map(|(v, p)| v.eval(p))
            .collect();
        self.outer.eval(&ys)
    }
}

/// The odd-block Birkhoff sums `X_i = S_v(a_{2i}, a_{2i+1})` along one orbit
/// of length `n` started at `start`.
pub fn block_rvs(map: &MapSystem, v: &HolderObservable, scheme: &BlockScheme, start: Point) -> Vec<f64> {
    let mut cursor = OrbitCursor::at(*map, start);
    block_rvs_from(&mut cursor, v, scheme)
}

/// As [`block_rvs`], continuing from `cursor` (which is advanced by `n`).
pub fn block_rvs_from(cursor: &mut OrbitCursor, v: &HolderObservable, scheme: &BlockScheme) -> Vec<f64> {
    let mut out = Vec::with_capacity(scheme.k() as usize);
    let mut time = 0u64;
    for (lo, hi) in scheme.blocks() {
        cursor.skip(lo - time);
        let mut acc = 0.0;
        for _ in lo..hi {
            acc += v.eval(&cursor.next_point());
        }
        time = hi;
        out.push(acc);
    }
    cursor.skip(scheme.n() - time);
    out
}

/// `trials` draws of `(X̂_0, ..., X̂_{k-1})`: coordinate `i` of trial `t` is a
/// Birkhoff sum over the length of block `i`, along its own stationary orbit
/// drawn from stream `t` of a seed reserved for coordinate `i`.
pub fn independent_copies(
    map: &MapSystem,
    v: &HolderObservable,
    scheme: &BlockScheme,
    mc: &McConfig,
) -> Vec<Vec<f64>> {
    let burn_in = mc.burn_in.unwrap_or_else(|| map.default_burn_in());
    let lens: Vec<u64> = scheme.blocks().map(|(lo, hi)| hi - lo).collect();
    map_chunks(mc.exec, mc.trials, 256, |range| {
        range
            .map(|t| {
                lens.iter()
                    .enumerate()
                    .map(|(i, &len)| {
                        let mut rng = stream_rng(derive_seed(mc.seed, 2 + i as u64), t);
                        let mut cursor = OrbitCursor::stationary(*map, &mut rng, burn_in);
                        (0..len).map(|_| v.eval(&cursor.next_point())).sum()
                    })
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// `trials` draws of `(X_0, ..., X_{k-1})` from independent stationary orbits.
pub fn joint_block_samples(
    map: &MapSystem,
    v: &HolderObservable,
    scheme: &BlockScheme,
    mc: &McConfig,
) -> Vec<Vec<f64>> {
    let burn_in = mc.burn_in.unwrap_or_else(|| map.default_burn_in());
    map_chunks(mc.exec, mc.trials, 256, |range| {
        range
            .map(|t| {
                let mut rng = stream_rng(derive_seed(mc.seed, 1), t);
                let mut cursor = OrbitCursor::stationary(*map, &mut rng, burn_in);
                block_rvs_from(&mut cursor, v, scheme)
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// One row of the gap experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub n: u64,
    pub k: u64,
    /// `n / (2k)`
    pub gap: f64,
    /// Smallest actual gap `ℓ_{r+1} - u_r` of the block scheme.
    pub min_gap: u64,
    pub joint_mean: f64,
    pub independent_mean: f64,
    pub delta: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl GapRow {
    /// `delta` is within twice its Monte Carlo standard error.
    pub fn below_noise(&self) -> bool {
        self.delta <= 2.0 * self.std_error
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_mean(xs);
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, (var / n).sqrt())
}

fn difference_row(n: u64, scheme: &BlockScheme, joint: &[f64], indep: &[f64]) -> GapRow {
    let (mj, sj) = mean_and_se(joint);
    let (mi, si) = mean_and_se(indep);
    let diff = mj - mi;
    let se = (sj * sj + si * si).sqrt();
    let (lo, hi) = (diff - 1.96 * se, diff + 1.96 * se);
    let (ci_low, ci_high) = if lo <= 0.0 && hi >= 0.0 {
        (0.0, lo.abs().max(hi.abs()))
    } else {
        (lo.abs().min(hi.abs()), lo.abs().max(hi.abs()))
    };
    GapRow {
        n,
        k: scheme.k(),
        gap: n as f64 / (2 * scheme.k()) as f64,
        min_gap: scheme.gaps().min().unwrap_or(n),
        joint_mean: mj,
        independent_mean: mi,
        delta: diff.abs(),
        std_error: se,
        ci_low,
        ci_high,
    }
}

/// `|mean F(X) - mean F(X̂)|` for each `n` in `n_list` at fixed `k`.
///
/// Joint and independent samples use disjoint seed streams. The same
/// streams are reused across `n`, so neighbouring rows share randomness.
pub fn weakdep_gap_experiment(
    map: &MapSystem,
    v: &HolderObservable,
    f: &Functional,
    n_list: &[u64],
    k: u64,
    mc: &McConfig,
) -> Result<Vec<GapRow>> {
    if f.arity != k as usize {
        return Err(invalid("F", format!("arity {} does not match k = {k}", f.arity)));
    }
    if mc.trials < 2 {
        return Err(invalid("trials", "need at least two trials"));
    }
    n_list
        .iter()
        .map(|&n| {
            let scheme = crate::sums::block_partition(n, k)?;
            let joint: Vec<f64> = joint_block_samples(map, v, &scheme, mc)
                .iter()
                .map(|x| f.eval(x))
                .collect();
            let indep: Vec<f64> = independent_copies(map, v, &scheme, mc)
                .iter()
                .map(|x| f.eval(x))
                .collect();
            Ok(difference_row(n, &scheme, &joint, &indep))
        })
        .collect()
}

/// Estimate of the difference between the single-orbit and the split
/// two-orbit integrals of a point functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcbEstimate {
    pub times: Vec<u64>,
    /// `n_p - n_{p-1}` (0 when `p = 0`).
    pub gap: u64,
    pub joint: f64,
    pub split: f64,
    /// `|joint - split|`
    pub delta: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl FcbEstimate {
    pub fn below_noise(&self) -> bool {
        self.delta <= 2.0 * self.std_error
    }
}

/// Single call of [`fcb_functional_experiment_multi`].
pub fn fcb_functional_experiment(
    map: &MapSystem,
    g: &PointFunctional,
    times: &[u64],
    mc: &McConfig,
) -> Result<FcbEstimate> {
    Ok(fcb_functional_experiment_multi(map, g, &[times.to_vec()], mc)?.remove(0))
}

/// Estimates, for each time tuple `n_0 ≤ ... ≤ n_{q-1}`,
/// `∫ G(T^{n_0}x, ..., T^{n_{q-1}}x) dμ(x)` and its split version in which
/// coordinates from the split index `p` on are evaluated along an
/// independent orbit.
///
/// Trial `t` runs two independent stationary orbits `A` and `B` and averages
/// over `mc.orbit_len` starting offsets `s`: the joint term uses `A` shifted
/// by `s` throughout, the split term uses `A` before the split and `B`
/// after it. All tuples share the same orbits.
pub fn fcb_functional_experiment_multi(
    map: &MapSystem,
    g: &PointFunctional,
    time_sets: &[Vec<u64>],
    mc: &McConfig,
) -> Result<Vec<FcbEstimate>> {
    let q = g.arity();
    let p = g.split();
    for times in time_sets {
        if times.len() != q {
            return Err(invalid("times", format!("{} times for arity {q}", times.len())));
        }
        if times.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("times", "must be nondecreasing"));
        }
    }
    if mc.trials < 2 {
        return Err(invalid("trials", "need at least two trials"));
    }
    let max_time = time_sets.iter().flat_map(|t| t.iter().copied()).max().unwrap_or(0) as usize;
    let len = mc.orbit_len.max(1) as usize;
    let burn_in = mc.burn_in.unwrap_or_else(|| map.default_burn_in());
    // per_trial[t][j] = (mean joint, mean split) for tuple j.
    let per_trial: Vec<Vec<(f64, f64)>> = map_indexed(mc.exec, mc.trials as usize, |t| {
        let run = |role: u64| -> Vec<Vec<f64>> {
            let mut rng = stream_rng(derive_seed(mc.seed, role), t as u64);
            let mut cursor = OrbitCursor::stationary(*map, &mut rng, burn_in);
            let points: Vec<Point> = (0..len + max_time).map(|_| cursor.next_point()).collect();
            g.observables
                .iter()
                .map(|v| points.iter().map(|x| v.eval(x)).collect())
                .collect()
        };
        let a = run(1);
        let b = run(2);
        let mut ys = vec![0.0; q];
        let mut zs = vec![0.0; q];
        time_sets
            .iter()
            .map(|times| {
                let mut joint = Vec::with_capacity(len);
                let mut diff = Vec::with_capacity(len);
                for s in 0..len {
                    for i in 0..q {
                        let idx = s + times[i] as usize;
                        ys[i] = a[i][idx];
                        zs[i] = if i < p { a[i][idx] } else { b[i][idx] };
                    }
                    let gj = g.outer.eval(&ys);
                    joint.push(gj);
                    diff.push(gj - g.outer.eval(&zs));
                }
                (pairwise_mean(&joint), pairwise_mean(&diff))
            })
            .collect()
    });
    Ok(time_sets
        .iter()
        .enumerate()
        .map(|(j, times)| {
            let joints: Vec<f64> = per_trial.iter().map(|r| r[j].0).collect();
            let diffs: Vec<f64> = per_trial.iter().map(|r| r[j].1).collect();
            let (joint, _) = mean_and_se(&joints);
            let (d, se) = mean_and_se(&diffs);
            let (lo, hi) = (d - 1.96 * se, d + 1.96 * se);
            let (ci_low, ci_high) = if lo <= 0.0 && hi >= 0.0 {
                (0.0, lo.abs().max(hi.abs()))
            } else {
                (lo.abs().min(hi.abs()), lo.abs().max(hi.abs()))
            };
            FcbEstimate {
                times: times.clone(),
                gap: if p == 0 { 0 } else { times[p] - times[p - 1] },
                joint,
                split: joint - d,
                delta: d.abs(),
                std_error: se,
                ci_low,
                ci_high,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_distance;
    use crate::sums::block_partition;
    use approx::assert_relative_eq;

    #[test]
    fn block_rvs_examples() {
        let d = MapSystem::doubling();
        let id = HolderObservable::coordinate(0);
        let scheme = block_partition(10, 2).unwrap();
        let x = block_rvs(&d, &id, &scheme, Point::new1(0.1));
        let orbit: Vec<f64> = crate::maps::orbit(&d, Point::new1(0.1), 7)
            .unwrap()
            .iter()
            .map(|p| p.x())
            .collect();
        assert_eq!(x.len(), 2);
        assert_relative_eq!(x[0], 0.1 + 0.2, epsilon = 1e-15);
        assert_relative_eq!(x[1], orbit[5] + orbit[6], epsilon = 1e-15);

        let one = block_partition(10, 1).unwrap();
        let single = block_rvs(&d, &id, &one, Point::new1(0.1));
        assert_eq!(single.len(), 1);
        let zero = block_rvs(&d, &HolderObservable::zero(), &scheme, Point::new1(0.3));
        assert_eq!(zero, vec![0.0, 0.0]);
    }

    #[test]
    fn copies_match_marginals() {
        let lsv = MapSystem::lsv(0.4).unwrap();
        let v = HolderObservable::cosine(1.0).with_offset(0.097);
        let scheme = block_partition(64, 2).unwrap();
        let mc = McConfig::new(10_000, 3).with_burn_in(2_000);
        let joint = joint_block_samples(&lsv, &v, &scheme, &mc);
        let copies = independent_copies(&lsv, &v, &scheme, &mc);
        for i in 0..2 {
            let a: Vec<f64> = joint.iter().map(|x| x[i]).collect();
            let b: Vec<f64> = copies.iter().map(|x| x[i]).collect();
            let d = ks_distance(&a, &b).unwrap();
            assert!(d < 0.025, "coordinate {i}: KS {d}");
        }
        let zeros = independent_copies(&lsv, &HolderObservable::zero(), &scheme, &McConfig::new(10, 1));
        assert!(zeros.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn trivial_gap_experiments() {
        let lsv = MapSystem::lsv(0.4).unwrap();
        let v = HolderObservable::cosine(1.0).with_offset(0.097);
        let mc = McConfig::new(4000, 5).with_burn_in(2_000);
        let constant = Functional::constant(2, 0.7).unwrap();
        for row in weakdep_gap_experiment(&lsv, &v, &constant, &[32, 64], 2, &mc).unwrap() {
            assert_eq!(row.delta, 0.0);
        }
        let single = Functional::tanh_product(1).unwrap();
        for row in weakdep_gap_experiment(&lsv, &v, &single, &[32, 128], 1, &mc).unwrap() {
            assert!(row.delta < 3.5 * row.std_error, "{row:?}");
        }
        assert!(weakdep_gap_experiment(&lsv, &v, &single, &[32], 2, &mc).is_err());
    }

    #[test]
    fn product_bounds() {
        let f = Functional::product(vec![
            Factor::Tanh { scale: 2.0 },
            Factor::Cosine { freq: 3.0, phase: 0.1 },
        ])
        .unwrap();
        assert_eq!(f.sup_bound(), 1.0);
        assert_eq!(f.lipschitz_bound(), 3.0);
        let chk = check_bounds(&f, 5.0, 20_000, 1);
        assert_eq!(chk.sup_violations + chk.lipschitz_violations, 0);
        assert!(chk.max_quotient > 1.0);
    }

    #[test]
    fn power_of_sum_bounds() {
        for (k, p, r) in [(2usize, 1.0, 1.0), (4, 3.0, 0.5), (8, 2.5, 2.0)] {
            let f = Functional::power_of_sum(k, p, r).unwrap();
            assert_relative_eq!(f.sup_bound(), (k as f64 * r).powf(p));
            assert_relative_eq!(f.lipschitz_bound(), p * (k as f64 * r).powf(p - 1.0));
            let chk = check_bounds(&f, r, 30_000, 2);
            assert_eq!(chk.sup_violations + chk.lipschitz_violations, 0, "{chk:?}");
        }
    }

    #[test]
    fn tabulated_functional() {
        let f = Functional::tabulated(2, -1.0, 1.0, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(f.eval(&[0.0, 0.0]), 1.0);
        assert_eq!(f.eval(&[0.25, 0.25]), 0.5);
        assert_eq!(f.eval(&[5.0, 5.0]), 0.0);
        assert_eq!(f.lipschitz_bound(), 1.0);
        let chk = check_bounds(&f, 2.0, 10_000, 3);
        assert_eq!(chk.sup_violations + chk.lipschitz_violations, 0);
        assert!(Functional::tabulated(1, 1.0, 0.0, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn split_validation() {
        assert!(Functional::tanh_product(3).unwrap().with_split(3).is_err());
        assert!(PointFunctional::product(vec![HolderObservable::cosine(1.0)], 0).is_err());
    }

    #[test]
    fn fcb_split_null() {
        // G depends only on coordinates before the split: both integrals agree.
        let lsv = MapSystem::lsv(0.4).unwrap();
        let g = PointFunctional::product(
            vec![HolderObservable::cosine(1.0), HolderObservable::constant(1.0)],
            1,
        )
        .unwrap();
        let e = fcb_functional_experiment(&lsv, &g, &[0, 8], &McConfig::new(50, 2).with_orbit_len(200)).unwrap();
        assert_eq!(e.delta, 0.0);
    }

    #[test]
    fn fcb_two_point_is_autocorrelation() {
        let d = MapSystem::doubling();
        let v = HolderObservable::affine(0, 1.0, -0.5);
        let g = PointFunctional::product(vec![v.clone(), v], 1).unwrap();
        let mc = McConfig::new(100, 4).with_orbit_len(2000);
        let e = fcb_functional_experiment_multi(&d, &g, &[vec![0, 1], vec![0, 2], vec![0, 30]], &mc).unwrap();
        assert!((e[0].delta - 1.0 / 24.0).abs() < 4.0 * e[0].std_error.max(1e-4), "{:?}", e[0]);
        assert!((e[1].delta - 1.0 / 48.0).abs() < 4.0 * e[1].std_error.max(1e-4), "{:?}", e[1]);
        assert!(e[2].below_noise() || e[2].delta < 1e-3);
        assert_eq!(e[0].gap, 1);
    }
}
