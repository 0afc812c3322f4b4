//! Exact property checks on randomized instances: Chen recombination,
//! streaming versus pairwise iterated sums, block-scheme bounds, functional
//! bounds and tower identities.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::criteria::{self, Verdict};
use crate::maps::{MapSystem, OrbitCursor};
use crate::observables::HolderObservable;
use crate::parallel::{derive_seed, map_indexed, stream_rng, Exec};
use crate::sums::{block_partition, chen_recombine, iterated_sum_pairs, SegmentSums, SumAccumulator};
use crate::tower::{sample_return_time, theta_psi_moment, tower_step, PsiEstimator, TowerSpec, TowerState};
use crate::weakdep::{check_bounds, Functional};
use crate::McConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelftestConfig {
    pub chen_instances: usize,
    pub stream_instances: usize,
    pub max_window: u64,
    pub partition_max_n: u64,
    pub partition_max_k: u64,
    pub bound_pairs: u64,
    pub tail_draws: u64,
    pub seed: u64,
    pub exec: Exec,
}

impl SelftestConfig {
    /// Instance counts of the acceptance suite.
    pub fn full(seed: u64) -> Self {
        SelftestConfig {
            chen_instances: criteria::CHEN_INSTANCES,
            stream_instances: criteria::CHEN_INSTANCES,
            max_window: criteria::STREAM_MAX_WINDOW,
            partition_max_n: criteria::PARTITION_MAX_N,
            partition_max_k: criteria::PARTITION_MAX_K,
            bound_pairs: criteria::FUNCTIONAL_BOUND_PAIRS,
            tail_draws: criteria::RETURN_TAIL_DRAWS,
            seed,
            exec: Exec::default(),
        }
    }

    /// A lighter configuration that finishes in a few seconds.
    pub fn quick(seed: u64) -> Self {
        SelftestConfig {
            chen_instances: 200,
            stream_instances: 100,
            max_window: 2_000,
            partition_max_n: 2_000,
            partition_max_k: 32,
            bound_pairs: 20_000,
            tail_draws: 1_000_000,
            ..Self::full(seed)
        }
    }
}

/// A random map, pair of observables and stationary start.
#[derive(Debug, Clone)]
pub struct SumInstance {
    pub map: MapSystem,
    pub v: HolderObservable,
    pub w: HolderObservable,
    pub cursor: OrbitCursor,
}

fn random_observable(rng: &mut ChaCha8Rng, dim: usize) -> HolderObservable {
    let coord = rng.random_range(0..dim);
    match rng.random_range(0..3) {
        0 => {
            let freq = rng.random_range(1..=3) as f64;
            HolderObservable::shifted_cosine(freq, rng.random()).with_offset(rng.random_range(-0.2..0.2))
        }
        1 => HolderObservable::affine(coord, rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)),
        _ => HolderObservable::coordinate(coord).with_offset(0.5),
    }
}

/// Draws a random instance from stream `index` of `seed`.
pub fn random_instance(seed: u64, index: u64) -> SumInstance {
    let mut rng = stream_rng(seed, index);
    let alpha = rng.random_range(0.1..0.9);
    let map = match rng.random_range(0..3) {
        0 => MapSystem::doubling(),
        1 => MapSystem::lsv(alpha).expect("alpha in range"),
        _ => MapSystem::baker(alpha).expect("alpha in range"),
    };
    let dim = map.state_dim();
    let v = random_observable(&mut rng, dim);
    let w = random_observable(&mut rng, dim);
    let cursor = OrbitCursor::stationary(map, &mut rng, 200);
    SumInstance { map, v, w, cursor }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Observable values along `len` steps of the instance's orbit.
pub fn instance_values(inst: &SumInstance, len: u64) -> (Vec<f64>, Vec<f64>) {
    let mut cursor = inst.cursor.clone();
    let mut vs = Vec::with_capacity(len as usize);
    let mut ws = Vec::with_capacity(len as usize);
    for _ in 0..len {
        let p = cursor.next_point();
        vs.push(inst.v.eval(&p));
        ws.push(inst.w.eval(&p));
    }
    (vs, ws)
}

fn streamed(vs: &[f64], ws: &[f64]) -> SegmentSums {
    let mut acc = SumAccumulator::new();
    for (&v, &w) in vs.iter().zip(ws) {
        acc.push(v, w);
    }
    acc.segment(0)
}

/// Recombining random partitions of a window reproduces the direct sums.
pub fn chen_check(instances: usize, max_window: u64, seed: u64, exec: Exec) -> Verdict {
    let errs: Vec<f64> = map_indexed(exec, instances, |i| {
        let inst = random_instance(seed, i as u64);
        let mut rng = stream_rng(derive_seed(seed, 1), i as u64);
        let len = rng.random_range(1..=max_window);
        let (vs, ws) = instance_values(&inst, len);
        let direct = streamed(&vs, &ws);
        let pieces = rng.random_range(1..=16u64.min(len));
        let mut cuts: Vec<u64> = (0..pieces - 1).map(|_| rng.random_range(0..=len)).collect();
        cuts.push(0);
        cuts.push(len);
        cuts.sort_unstable();
        let segments: Vec<SegmentSums> = cuts
            .windows(2)
            .map(|c| {
                let (a, b) = (c[0] as usize, c[1] as usize);
                SegmentSums::from_values(c[0], &vs[a..b], &ws[a..b])
            })
            .collect();
        let joined = chen_recombine(&segments).expect("contiguous");
        rel_err(joined.s_v, direct.s_v)
            .max(rel_err(joined.s_w, direct.s_w))
            .max(rel_err(joined.ss_vw, direct.ss_vw))
    });
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Verdict::new(
        "chen recombination",
        worst < criteria::CHEN_REL_TOL,
        format!("{instances} instances, worst relative error {worst:.3e}"),
    )
}

/// Streaming iterated sums equal the explicit double sum. Window lengths are
/// log-uniform on `[1, max_window]`; instance 0 uses the full length.
pub fn stream_check(instances: usize, max_window: u64, seed: u64, exec: Exec) -> Verdict {
    let errs: Vec<f64> = map_indexed(exec, instances, |i| {
        let inst = random_instance(derive_seed(seed, 2), i as u64);
        let mut rng = stream_rng(derive_seed(seed, 3), i as u64);
        let len = if i == 0 {
            max_window
        } else {
            ((max_window as f64).powf(rng.random::<f64>()).round() as u64).clamp(1, max_window)
        };
        let (vs, ws) = instance_values(&inst, len);
        rel_err(streamed(&vs, &ws).ss_vw, iterated_sum_pairs(&vs, &ws))
    });
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Verdict::new(
        "streaming vs pairwise",
        worst < criteria::STREAM_REL_TOL,
        format!("{instances} instances, windows up to {max_window}, worst relative error {worst:.3e}"),
    )
}

/// Every block scheme with `2k ≤ n ≤ max_n`, `k ≤ max_k` satisfies the
/// piece and gap bounds.
pub fn partition_check(max_n: u64, max_k: u64) -> Verdict {
    let mut checked = 0u64;
    let mut failures = 0u64;
    for k in 1..=max_k {
        for n in (2 * k)..=max_n {
            checked += 1;
            if !block_partition(n, k).map(|s| s.check_bounds()).unwrap_or(false) {
                failures += 1;
            }
        }
    }
    Verdict::new(
        "block scheme bounds",
        failures == 0,
        format!("{checked} schemes, {failures} violations"),
    )
}

/// `|Σ y_i|^p` on `[-R, R]^k` against `(kR)^p` and `p (kR)^{p-1}`.
pub fn functional_bounds_check(pairs: u64, seed: u64) -> Verdict {
    let cases = [(1usize, 1.0, 1.0), (2, 1.0, 1.0), (2, 2.0, 1.0), (4, 3.0, 0.5), (8, 1.5, 2.0), (16, 4.0, 0.25)];
    let mut violations = 0;
    for (j, &(k, p, r)) in cases.iter().enumerate() {
        let f = Functional::power_of_sum(k, p, r).expect("valid functional");
        let chk = check_bounds(&f, r, pairs, derive_seed(seed, j as u64));
        violations += chk.sup_violations + chk.lipschitz_violations;
    }
    Verdict::new(
        "functional bounds",
        violations == 0,
        format!("{} functionals × {pairs} pairs, {violations} violations", cases.len()),
    )
}

/// Return-count additivity, the `φ ≡ 1` identity, and the Pareto tail
/// `P(φ ≥ n) = n^{-β}` at `n = 1, 2, 4, 8, 16` within three binomial
/// standard deviations.
pub fn tower_identity_check(draws: u64, seed: u64, exec: Exec) -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;

    let spec = TowerSpec::pareto(2.5, 0.5).expect("valid tower");
    let mut rng = stream_rng(seed, 0);
    let mut additive = true;
    for _ in 0..200 {
        let mut s = TowerState::at_base(sample_return_time(&spec, &mut rng));
        let (m, n) = (rng.random_range(0..200), rng.random_range(0..200));
        let mut visits = [0u64; 2];
        let mut after_m = 0;
        for step in 0..m + n {
            if step == m {
                after_m = s.returns;
            }
            tower_step(&mut s, &spec, &mut rng);
            if s.height == 0 {
                visits[usize::from(step >= m)] += 1;
            }
        }
        if m + n == m {
            after_m = s.returns;
        }
        additive &= after_m == visits[0] && s.returns - after_m == visits[1];
    }
    ok &= additive;
    notes.push(format!("additivity {}", if additive { "ok" } else { "broken" }));
    let one = TowerSpec::constant_one(0.5).expect("valid tower");
    let mut exact = true;
    for n in [1u64, 5, 20, 64] {
        for est in [PsiEstimator::Direct, PsiEstimator::Conditional] {
            let m = theta_psi_moment(&one, 0.5, n, &McConfig::new(50, seed).with_exec(exec), est).expect("valid");
            exact &= m.value == 0.5f64.powi(n as i32);
        }
    }
    ok &= exact;
    notes.push(format!("phi=1 identity {}", if exact { "exact" } else { "off" }));

    for beta in criteria::TOWER_BETAS {
        let spec = TowerSpec::pareto(beta, 0.5).expect("valid tower");
        let counts: Vec<[u64; 5]> = crate::parallel::map_chunks(exec, draws, 1 << 16, |range| {
            let mut c = [0u64; 5];
            let mut rng = stream_rng(derive_seed(seed, 10 + (beta * 10.0) as u64), range.start / (1 << 16));
            for _ in range {
                let phi = sample_return_time(&spec, &mut rng);
                for (j, lvl) in [1u64, 2, 4, 8, 16].iter().enumerate() {
                    if phi >= *lvl {
                        c[j] += 1;
                    }
                }
            }
            c
        });
        for (j, lvl) in [1u64, 2, 4, 8, 16].iter().enumerate() {
            let hits: u64 = counts.iter().map(|c| c[j]).sum();
            let p = (*lvl as f64).powf(-beta);
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            let dev = (hits as f64 - draws as f64 * p).abs();
            if dev > criteria::RETURN_TAIL_SIGMAS * sd.max(f64::MIN_POSITIVE) && !(p == 1.0 && hits == draws) {
                ok = false;
                notes.push(format!("beta {beta} n {lvl}: {hits} vs {:.1}", draws as f64 * p));
            }
        }
    }
    notes.push(format!("tails checked over {draws} draws per beta"));
    Verdict::new("tower identities", ok, notes.join("; "))
}

/// All checks at the given sizes.
pub fn run_selftest(cfg: &SelftestConfig) -> Vec<Verdict> {
    vec![
        chen_check(cfg.chen_instances, cfg.max_window, cfg.seed, cfg.exec),
        stream_check(cfg.stream_instances, cfg.max_window, cfg.seed, cfg.exec),
        partition_check(cfg.partition_max_n, cfg.partition_max_k),
        functional_bounds_check(cfg.bound_pairs, cfg.seed),
        tower_identity_check(cfg.tail_draws, cfg.seed, cfg.exec),
    ]
}
