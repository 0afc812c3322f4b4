//! Young tower over a Bernoulli full-shift base.
//!
//! At every return to the base a fresh `(symbol, φ)` pair is drawn
//! independently, so the return times form a renewal process. The tower map
//! climbs `(y, ℓ) ↦ (y, ℓ + 1)` while `ℓ < φ(y) - 1` and otherwise drops back
//! to level 0, counting one return.
//!
//! The Pareto law used by default has exact tails `P(φ ≥ n) = n^{-β}` for
//! `1 ≤ n ≤ max_phi`.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::parallel::{map_chunks, stream_rng};
use crate::special::power_sum;
use crate::stats::{bootstrap_mean_ci, MomentEstimate};
use crate::McConfig;

/// Default truncation of the Pareto return time. At `2^62` the discarded
/// tail `Σ_{j > 2^62} j^{-β}` is below `10^{-9}` for every `β ≥ 1.5`.
pub const DEFAULT_MAX_PHI: u64 = 1 << 62;

/// Symbols kept per trajectory for separation-time probes.
pub const HISTORY_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PhiLaw {
    /// `φ = ⌊U^{-1/β}⌋` with `U` uniform on `(0, 1]`.
    Pareto,
    /// `pmf[j] = P(φ = j + 1)`.
    Explicit { pmf: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerSpec {
    beta: f64,
    theta: f64,
    law: PhiLaw,
    max_phi: u64,
    #[serde(skip)]
    tables: Option<ExplicitTables>,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct ExplicitTables {
    /// `cdf[j] = P(φ ≤ j + 1)`
    cdf: Vec<f64>,
    /// `tail_ge[j] = P(φ ≥ j + 1)`, with a trailing 0.
    tail_ge: Vec<f64>,
    /// `residual_cdf[j] = P(R ≤ j + 1)` for the stationary residual time `R`.
    residual_cdf: Vec<f64>,
    /// `size_biased_cdf[j]`: cumulative `P(φ = j + 1) (j + 1) / E φ`.
    size_biased_cdf: Vec<f64>,
    mean: f64,
}

impl TowerSpec {
    /// Pareto return times with tail exponent `beta > 1`.
    pub fn pareto(beta: f64, theta: f64) -> Result<Self> {
        if !(beta > 1.0) || !beta.is_finite() {
            return Err(invalid("beta", format!("{beta} must be finite and > 1")));
        }
        check_theta(theta)?;
        Ok(TowerSpec {
            beta,
            theta,
            law: PhiLaw::Pareto,
            max_phi: DEFAULT_MAX_PHI,
            tables: None,
        })
    }

    /// Return times with the finitely supported law `pmf[j] = P(φ = j + 1)`.
    pub fn explicit(pmf: Vec<f64>, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        if pmf.is_empty() || pmf.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(invalid("pmf", "must be a nonempty list of nonnegative numbers"));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid("pmf", format!("sums to {total}, expected 1")));
        }
        let pmf: Vec<f64> = pmf.iter().map(|p| p / total).collect();
        let max_phi = pmf.len() as u64;
        let tables = ExplicitTables::build(&pmf);
        Ok(TowerSpec {
            beta: f64::INFINITY,
            theta,
            law: PhiLaw::Explicit { pmf },
            max_phi,
            tables: Some(tables),
        })
    }

    /// `φ ≡ 1`: every step returns to the base.
    pub fn constant_one(theta: f64) -> Result<Self> {
        Self::explicit(vec![1.0], theta)
    }

    pub fn with_max_phi(mut self, max_phi: u64) -> Result<Self> {
        if max_phi == 0 {
            return Err(invalid("max_phi", "must be at least 1"));
        }
        if let PhiLaw::Explicit { .. } = self.law {
            return Err(invalid("max_phi", "only applies to the Pareto law"));
        }
        self.max_phi = max_phi;
        Ok(self)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn max_phi(&self) -> u64 {
        self.max_phi
    }

    pub fn law(&self) -> &PhiLaw {
        &self.law
    }

    fn tables(&self) -> &ExplicitTables {
        self.tables.as_ref().expect("explicit law tables")
    }

    /// `P(φ ≥ n)`
    pub fn tail_ge(&self, n: u64) -> f64 {
        if n <= 1 {
            return 1.0;
        }
        if n > self.max_phi {
            return 0.0;
        }
        match self.law {
            PhiLaw::Pareto => (n as f64).powf(-self.beta),
            PhiLaw::Explicit { .. } => self.tables().tail_ge[(n - 1) as usize],
        }
    }

    /// `E φ = Σ_{n≥1} P(φ ≥ n)`
    pub fn mean_return_time(&self) -> f64 {
        match self.law {
            PhiLaw::Pareto => power_sum(self.beta, 1, self.max_phi),
            PhiLaw::Explicit { .. } => self.tables().mean,
        }
    }

    /// `P(R > n)` for the residual time `R` to the next return from a
    /// stationary start, `P(R = r) = P(φ ≥ r) / E φ`.
    pub fn residual_tail(&self, n: u64) -> f64 {
        if n >= self.max_phi {
            return 0.0;
        }
        match self.law {
            PhiLaw::Pareto => {
                power_sum(self.beta, n + 1, self.max_phi) / self.mean_return_time()
            }
            PhiLaw::Explicit { .. } => {
                if n == 0 {
                    1.0
                } else {
                    1.0 - self.tables().residual_cdf[(n - 1) as usize]
                }
            }
        }
    }

    /// Draws `φ` from a uniform variate `u ∈ (0, 1]`.
    pub fn return_time_from_uniform(&self, u: f64) -> u64 {
        match self.law {
            PhiLaw::Pareto => pareto_floor(u, self.beta).min(self.max_phi),
            PhiLaw::Explicit { .. } => search(&self.tables().cdf, 1.0 - u),
        }
    }

    /// Draws `φ` conditioned on `φ ≤ m`.
    fn return_time_at_most<R: Rng + ?Sized>(&self, m: u64, rng: &mut R) -> u64 {
        debug_assert!(m >= 1);
        if m >= self.max_phi {
            return sample_return_time(self, rng);
        }
        match self.law {
            PhiLaw::Pareto => {
                // φ ≤ m  ⇔  U > (m + 1)^{-β}
                let lo = ((m + 1) as f64).powf(-self.beta);
                let u = lo + (1.0 - lo) * (1.0 - rng.random::<f64>());
                pareto_floor(u, self.beta).clamp(1, m)
            }
            PhiLaw::Explicit { .. } => {
                let cdf = &self.tables().cdf;
                let top = cdf[(m - 1) as usize];
                search(cdf, rng.random::<f64>() * top).min(m)
            }
        }
    }

    /// Draws the residual time `R` conditioned on `R ≤ m`.
    fn residual_at_most<R: Rng + ?Sized>(&self, m: u64, rng: &mut R) -> u64 {
        let m = m.min(self.max_phi);
        match self.law {
            PhiLaw::Pareto => {
                let zipf = Zipf::new(m as f64, self.beta).expect("valid zipf parameters");
                (zipf.sample(rng) as u64).clamp(1, m)
            }
            PhiLaw::Explicit { .. } => {
                let cdf = &self.tables().residual_cdf;
                let top = cdf[(m - 1) as usize];
                search(cdf, rng.random::<f64>() * top).min(m)
            }
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(invalid("theta", format!("{theta} must lie in (0, 1)")))
    }
}

/// `⌊u^{-1/β}⌋`, saturating; `P(⌊U^{-1/β}⌋ ≥ n) = P(U ≤ n^{-β}) = n^{-β}`.
#[inline]
fn pareto_floor(u: f64, beta: f64) -> u64 {
    let x = u.powf(-1.0 / beta);
    if x >= u64::MAX as f64 {
        u64::MAX
    } else {
        (x.floor() as u64).max(1)
    }
}

/// Smallest `j + 1` with `cdf[j] > target` (or the last index).
fn search(cdf: &[f64], target: f64) -> u64 {
    let idx = cdf.partition_point(|&c| c <= target);
    (idx.min(cdf.len() - 1) + 1) as u64
}

fn cumulative(xs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    xs.map(|x| {
        acc += x;
        acc
    })
    .collect()
}

impl ExplicitTables {
    fn build(pmf: &[f64]) -> Self {
        let cdf = cumulative(pmf.iter().copied());
        let mut tail_ge: Vec<f64> = (0..pmf.len()).map(|j| pmf[j..].iter().sum()).collect();
        tail_ge.push(0.0);
        let mean: f64 = tail_ge.iter().sum();
        let residual_cdf = cumulative(tail_ge[..pmf.len()].iter().map(|t| t / mean));
        let size_biased_cdf =
            cumulative(pmf.iter().enumerate().map(|(j, p)| p * (j + 1) as f64 / mean));
        ExplicitTables {
            cdf,
            tail_ge,
            residual_cdf,
            size_biased_cdf,
            mean,
        }
    }
}

/// A point of the tower together with its return counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TowerState {
    /// Level `ℓ`, `0 ≤ ℓ < current_phi`.
    pub height: u64,
    /// Return time of the current excursion.
    pub current_phi: u64,
    /// Returns to level 0 so far.
    pub returns: u64,
    /// Most recent base symbols, oldest first.
    pub history: VecDeque<u64>,
}

impl TowerState {
    /// A base point at level 0 with the given return time.
    pub fn at_base(phi: u64) -> Self {
        TowerState {
            height: 0,
            current_phi: phi.max(1),
            returns: 0,
            history: VecDeque::from([phi.max(1)]),
        }
    }

    fn push_symbol(&mut self, symbol: u64) {
        if self.history.len() == HISTORY_LEN {
            self.history.pop_front();
        }
        self.history.push_back(symbol);
    }
}

/// One draw of the return time `φ`.
pub fn sample_return_time<R: Rng + ?Sized>(spec: &TowerSpec, rng: &mut R) -> u64 {
    let u = 1.0 - rng.random::<f64>();
    spec.return_time_from_uniform(u)
}

/// One step of the tower map. Returning to the base draws a fresh base
/// symbol and return time.
pub fn tower_step<R: Rng + ?Sized>(state: &mut TowerState, spec: &TowerSpec, rng: &mut R) {
    if state.height + 1 < state.current_phi {
        state.height += 1;
    } else {
        let phi = sample_return_time(spec, rng);
        state.height = 0;
        state.current_phi = phi;
        state.returns += 1;
        state.push_symbol(phi);
    }
}

/// A draw from the invariant measure `μ_Δ = (μ_Y × counting) / ∫ φ dμ_Y`:
/// an excursion chosen with size-biased probability `P(φ = m) m / E φ` and a
/// uniform level within it.
///
/// For the Pareto law the equivalent decomposition is sampled instead:
/// the level has `P(ℓ = j) = P(φ > j) / E φ`, and `φ` is then drawn
/// conditioned on `φ > ℓ`.
pub fn stationary_start<R: Rng + ?Sized>(spec: &TowerSpec, rng: &mut R) -> TowerState {
    let (phi, height) = match spec.law {
        PhiLaw::Pareto => {
            let zipf =
                Zipf::new(spec.max_phi as f64, spec.beta).expect("valid zipf parameters");
            let level_plus_one = (zipf.sample(rng) as u64).clamp(1, spec.max_phi);
            let top = (level_plus_one as f64).powf(-spec.beta);
            let u = top * (1.0 - rng.random::<f64>());
            let phi = pareto_floor(u, spec.beta).clamp(level_plus_one, spec.max_phi);
            (phi, level_plus_one - 1)
        }
        PhiLaw::Explicit { .. } => {
            let phi = search(&spec.tables().size_biased_cdf, rng.random::<f64>());
            (phi, rng.random_range(0..phi))
        }
    };
    TowerState {
        height,
        current_phi: phi,
        returns: 0,
        history: VecDeque::from([phi]),
    }
}

/// Number of returns to level 0 during `n` steps starting from `state`.
pub fn returns_in<R: Rng + ?Sized>(state: &TowerState, spec: &TowerSpec, n: u64, rng: &mut R) -> u64 {
    let mut s = state.clone();
    for _ in 0..n {
        tower_step(&mut s, spec, rng);
    }
    s.returns - state.returns
}

/// Index of the first disagreement between two symbol histories, or `None`
/// when they agree over the whole recorded window.
pub fn separation_time(a: &[u64], b: &[u64]) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| x != y)
}

/// `θ^{s(a, b)}`, zero when the histories never separate.
pub fn separation_distance(theta: f64, a: &[u64], b: &[u64]) -> f64 {
    separation_time(a, b).map_or(0.0, |s| theta.powi(s as i32))
}

/// Estimator for `∫ θ^{ψ_n} dμ_Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiEstimator {
    /// Average of `θ^{ψ_n}` over simulated stationary trajectories.
    Direct,
    /// Each trial integrates out, at every renewal, the event that the
    /// current excursion overshoots the horizon, and continues with the
    /// excursion conditioned to end inside it. That conditioned length is
    /// drawn from a mixture with a uniform component and reweighted, so
    /// excursions ending just before the horizon are sampled. Unbiased for the same
    /// expectation; the relative error stays bounded even when the answer
    /// is far below `1 / trials`.
    #[default]
    Conditional,
}

/// Per-trial contributions below `CONDITIONAL_CUTOFF · P(R > n)` are dropped;
/// the relative bias of the estimate is bounded by this constant.
pub const CONDITIONAL_CUTOFF: f64 = 1e-12;

/// Monte Carlo estimate of `∫ θ^{ψ_n} dμ_Δ` over `mc.trials` stationary
/// starts, with a bootstrap 95% interval.
pub fn theta_psi_moment(
    spec: &TowerSpec,
    theta: f64,
    n: u64,
    mc: &McConfig,
    estimator: PsiEstimator,
) -> Result<MomentEstimate> {
    check_theta(theta)?;
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if mc.trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let chunks = map_chunks(mc.exec, mc.trials, 1024, |range| {
        range
            .map(|t| {
                let mut rng = stream_rng(mc.seed, t);
                match estimator {
                    PsiEstimator::Direct => direct_trial(spec, theta, n, &mut rng),
                    PsiEstimator::Conditional => conditional_trial(spec, theta, n, &mut rng),
                }
            })
            .collect::<Vec<f64>>()
    });
    let values: Vec<f64> = chunks.into_iter().flatten().collect();
    let (mean, std_error, ci) = bootstrap_mean_ci(&values, 1000, mc.seed);
    Ok(MomentEstimate {
        p: 1.0,
        n,
        value: mean,
        ci_low: ci.0.min(mean),
        ci_high: ci.1.max(mean),
        std_error,
        trials: mc.trials,
        seed: mc.seed,
    })
}

fn direct_trial<R: Rng + ?Sized>(spec: &TowerSpec, theta: f64, n: u64, rng: &mut R) -> f64 {
    let start = stationary_start(spec, rng);
    // First return after φ - ℓ steps, then one return per excursion.
    let mut t = start.current_phi - start.height;
    let mut weight = 1.0;
    while t <= n {
        weight *= theta;
        if weight < f64::MIN_POSITIVE {
            return 0.0;
        }
        t = t.saturating_add(sample_return_time(spec, rng));
    }
    weight
}

fn conditional_trial<R: Rng + ?Sized>(spec: &TowerSpec, theta: f64, n: u64, rng: &mut R) -> f64 {
    // Stage 0: no return at all in [1, n].
    let head = spec.residual_tail(n);
    let mut total = head;
    let mut mass = 1.0 - head;
    if mass <= 0.0 {
        return total;
    }
    let floor = CONDITIONAL_CUTOFF * head;
    let mean = spec.mean_return_time();
    let (mut t, lr) = defensive_draw(
        n.min(spec.max_phi),
        |j| spec.tail_ge(j) / mean / mass,
        |rng| spec.residual_at_most(n, rng),
        rng,
    );
    let mut weight = mass * theta * lr;
    loop {
        let remaining = n - t;
        if remaining == 0 {
            return total + weight;
        }
        let overshoot = spec.tail_ge(remaining + 1);
        total += weight * overshoot;
        mass = 1.0 - overshoot;
        let (phi, lr) = defensive_draw(
            remaining.min(spec.max_phi),
            |j| (spec.tail_ge(j) - spec.tail_ge(j + 1)) / mass,
            |rng| spec.return_time_at_most(remaining, rng),
            rng,
        );
        weight *= mass * theta * lr;
        if weight <= floor || weight < f64::MIN_POSITIVE {
            return total;
        }
        t += phi;
    }
}

/// Share of conditional draws taken uniformly from `1..=m`.
const DEFENSIVE_SHARE: f64 = 0.1;

/// Draws from `q = (1 - ε) p + ε · Uniform{1..=m}`, where `p` is the pmf
/// sampled by `natural`, and returns the draw with the likelihood ratio
/// `p / q ≤ 1 / (1 - ε)`.
///
/// Excursions ending just before the horizon are rare under `p` but carry
/// weight of order one; the uniform share makes them visible at rate `ε/m`.
fn defensive_draw<R: Rng + ?Sized>(
    m: u64,
    pmf: impl Fn(u64) -> f64,
    natural: impl FnOnce(&mut R) -> u64,
    rng: &mut R,
) -> (u64, f64) {
    if m <= 1 {
        return (1, 1.0);
    }
    let j = if rng.random::<f64>() < DEFENSIVE_SHARE {
        rng.random_range(1..=m)
    } else {
        natural(rng)
    };
    let p = pmf(j);
    let q = (1.0 - DEFENSIVE_SHARE) * p + DEFENSIVE_SHARE / m as f64;
    (j, p / q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::zeta;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        stream_rng(seed, 0)
    }

    #[test]
    fn unit_uniform_gives_one() {
        let spec = TowerSpec::pareto(2.5, 0.5).unwrap();
        assert_eq!(spec.return_time_from_uniform(1.0), 1);
        // U slightly below 2^{-β} lands at φ = 2.
        assert_eq!(spec.return_time_from_uniform(2f64.powf(-2.5) * 0.999), 2);
        assert_eq!(spec.return_time_from_uniform(2f64.powf(-2.5) * 1.001), 1);
    }

    #[test]
    fn spec_validation() {
        assert!(TowerSpec::pareto(1.0, 0.5).is_err());
        assert!(TowerSpec::pareto(2.0, 1.0).is_err());
        assert!(TowerSpec::explicit(vec![0.5, 0.4], 0.5).is_err());
        assert!(TowerSpec::explicit(vec![], 0.5).is_err());
        assert!(TowerSpec::pareto(2.0, 0.5).unwrap().with_max_phi(0).is_err());
    }

    #[test]
    fn pareto_mean_is_zeta() {
        let spec = TowerSpec::pareto(2.5, 0.5).unwrap();
        assert!((spec.mean_return_time() - zeta(2.5)).abs() < 1e-10);
        let mut r = rng(1);
        let draws = 2_000_000;
        let mean = (0..draws).map(|_| sample_return_time(&spec, &mut r) as f64).sum::<f64>()
            / draws as f64;
        assert!((mean - 1.341_487).abs() < 0.01, "{mean}");
    }

    #[test]
    fn constant_law_returns_every_step() {
        let spec = TowerSpec::constant_one(0.5).unwrap();
        let mut r = rng(2);
        let s = stationary_start(&spec, &mut r);
        assert_eq!((s.height, s.current_phi), (0, 1));
        assert_eq!(returns_in(&s, &spec, 37, &mut r), 37);
    }

    #[test]
    fn deterministic_climb() {
        let spec = TowerSpec::pareto(2.5, 0.5).unwrap();
        let mut r = rng(3);
        let mut s = TowerState::at_base(3);
        for _ in 0..3 {
            tower_step(&mut s, &spec, &mut r);
        }
        assert_eq!(s.returns, 1);
        assert_eq!(s.height, 0);
    }

    #[test]
    fn size_biased_start_on_two_point_law() {
        let spec = TowerSpec::explicit(vec![0.5, 0.5], 0.5).unwrap();
        let mut r = rng(4);
        let trials = 300_000;
        let hits = (0..trials)
            .filter(|_| stationary_start(&spec, &mut r).current_phi == 2)
            .count();
        let freq = hits as f64 / trials as f64;
        let sd = (2.0 / 9.0 / trials as f64).sqrt();
        assert!((freq - 2.0 / 3.0).abs() < 4.0 * sd, "{freq}");
    }

    #[test]
    fn separation_examples() {
        assert_eq!(separation_time(&[1, 2, 3], &[1, 2, 3]), None);
        assert_eq!(separation_time(&[4, 2], &[1, 2]), Some(0));
        assert_eq!(separation_time(&[1, 1, 2], &[1, 1, 3]), Some(2));
        assert_eq!(separation_distance(0.5, &[1, 1, 2], &[1, 1, 3]), 0.25);
        assert_eq!(separation_distance(0.5, &[1], &[1]), 0.0);
    }

    #[test]
    fn history_is_bounded() {
        let spec = TowerSpec::constant_one(0.5).unwrap();
        let mut r = rng(5);
        let mut s = TowerState::at_base(1);
        for _ in 0..500 {
            tower_step(&mut s, &spec, &mut r);
        }
        assert_eq!(s.history.len(), HISTORY_LEN);
    }

    #[test]
    fn theta_psi_constant_law_is_exact() {
        let spec = TowerSpec::constant_one(0.5).unwrap();
        for n in [1, 5, 40] {
            for est in [PsiEstimator::Direct, PsiEstimator::Conditional] {
                let m = theta_psi_moment(&spec, 0.5, n, &McConfig::new(200, 1), est).unwrap();
                assert_eq!(m.value, 0.5f64.powi(n as i32));
            }
        }
    }

    #[test]
    fn theta_near_one_gives_near_one() {
        let spec = TowerSpec::pareto(2.5, 0.5).unwrap();
        let m = theta_psi_moment(&spec, 1.0 - 1e-9, 64, &McConfig::new(2000, 1), PsiEstimator::Conditional)
            .unwrap();
        assert!((m.value - 1.0).abs() < 5.0 * m.std_error + 1e-6, "{m:?}");
    }

    #[test]
    fn estimators_agree() {
        let spec = TowerSpec::pareto(1.5, 0.5).unwrap();
        let mc = McConfig::new(200_000, 8);
        let d = theta_psi_moment(&spec, 0.5, 64, &mc, PsiEstimator::Direct).unwrap();
        let c = theta_psi_moment(&spec, 0.5, 64, &mc, PsiEstimator::Conditional).unwrap();
        let se = d.std_error.hypot(c.std_error);
        assert!((d.value - c.value).abs() < 4.0 * se, "{} vs {}", d.value, c.value);
        assert!(c.std_error < d.std_error);
    }

    #[test]
    fn residual_tail_sums_to_mean() {
        let spec = TowerSpec::explicit(vec![0.2, 0.3, 0.5], 0.5).unwrap();
        assert!((spec.mean_return_time() - 2.3).abs() < 1e-12);
        assert_eq!(spec.residual_tail(0), 1.0);
        assert!((spec.residual_tail(1) - (1.0 - 1.0 / 2.3)).abs() < 1e-12);
        assert_eq!(spec.residual_tail(3), 0.0);
    }
}
