mod common;

use common::{loglog_slope, zeta, RenewalOracle};
use slowmix::tower::{theta_psi_moment, PsiEstimator, TowerSpec};
use slowmix::McConfig;

#[test]
fn zeta_matches_known_values() {
    let pi = std::f64::consts::PI;
    assert!((zeta(2.0) - pi * pi / 6.0).abs() < 1e-13);
    assert!((zeta(4.0) - pi.powi(4) / 90.0).abs() < 1e-13);
    assert!((zeta(1.5) - 2.612_375_348_685_488).abs() < 1e-12);
}

#[test]
fn mean_return_time_is_zeta() {
    for beta in [1.5, 2.5, 4.0] {
        let spec = TowerSpec::pareto(beta, 0.5).unwrap();
        // φ is truncated at 2^62
        let rel = (spec.mean_return_time() - zeta(beta)).abs() / zeta(beta);
        assert!(rel < 1e-8, "beta {beta}: {rel:e}");
    }
}

#[test]
fn renewal_values_at_reference_points() {
    let cases = [(1.5, 64, 0.0994), (2.5, 64, 1.028e-3), (4.0, 64, 1.282e-6)];
    for (beta, n, expected) in cases {
        let v = RenewalOracle::new(beta, 0.5, n).stationary(n);
        assert!((v - expected).abs() / expected < 2e-3, "beta {beta}: {v:e}");
    }
    let v = RenewalOracle::new(4.0, 0.5, 1 << 14).stationary(1 << 14);
    assert!((v - 6.99e-14).abs() / 6.99e-14 < 5e-3, "{v:e}");
}

#[test]
fn renewal_slopes_match_rate() {
    for (beta, expected) in [(1.5, -0.5055), (2.5, -1.508), (4.0, -3.0127)] {
        let oracle = RenewalOracle::new(beta, 0.5, 1 << 14);
        let pts: Vec<(f64, f64)> = (6..=14)
            .map(|j| (f64::from(1u32 << j), oracle.stationary(1 << j)))
            .collect();
        let slope = loglog_slope(&pts);
        assert!((slope - expected).abs() < 2e-3, "beta {beta}: {slope}");
        assert!((slope + (beta - 1.0)).abs() < 0.2);
    }
}

/// Both estimators agree with the recursion within five standard errors,
/// plus a relative `1e-6` for rounding in the zeta tails.
#[test]
fn monte_carlo_matches_renewal_oracle() {
    for beta in [1.5, 2.5, 4.0] {
        let spec = TowerSpec::pareto(beta, 0.5).unwrap();
        let oracle = RenewalOracle::new(beta, 0.5, 256);
        for n in [1u64, 4, 16, 64, 256] {
            let exact = oracle.stationary(n as usize);
            for (est, trials) in [(PsiEstimator::Conditional, 50_000u64), (PsiEstimator::Direct, 200_000)] {
                // plain averaging only resolves values well above 1/trials
                if est == PsiEstimator::Direct && exact * (trials as f64) < 1_000.0 {
                    continue;
                }
                let m = theta_psi_moment(&spec, 0.5, n, &McConfig::new(trials, 17), est).unwrap();
                assert!(
                    (m.value - exact).abs() < 5.0 * m.std_error + 1e-6 * exact,
                    "beta {beta} n {n} {est:?}: mc {} exact {exact} se {}",
                    m.value,
                    m.std_error
                );
            }
        }
    }
}
