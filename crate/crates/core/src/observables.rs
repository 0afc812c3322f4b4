//! Hölder observables on the state space, centering against the invariant
//! measure, and an empirical Hölder-seminorm probe.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::maps::{MapSystem, OrbitCursor, Point};
use crate::parallel::{map_indexed, pairwise_sum, stream_rng};
use crate::McConfig;

/// Closed-form shape of an observable, evaluated on one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ObservableForm {
    /// `x_i`
    Coordinate { coord: usize },
    /// `cos(2π (freq · x_i + phase))`
    Cosine { coord: usize, freq: f64, phase: f64 },
    /// `slope · x_i + intercept`
    Affine { coord: usize, slope: f64, intercept: f64 },
    /// Piecewise-linear interpolation of `values` on a uniform grid of
    /// `[0, 1]` (at least two nodes).
    Tabulated { coord: usize, values: Arc<[f64]> },
}

impl ObservableForm {
    #[inline]
    fn eval(&self, p: &Point) -> f64 {
        match self {
            ObservableForm::Coordinate { coord } => p.coord(*coord),
            ObservableForm::Cosine { coord, freq, phase } => {
                (TAU * (freq * p.coord(*coord) + phase)).cos()
            }
            ObservableForm::Affine {
                coord,
                slope,
                intercept,
            } => slope * p.coord(*coord) + intercept,
            ObservableForm::Tabulated { coord, values } => interpolate(values, p.coord(*coord)),
        }
    }

    fn coord(&self) -> usize {
        match self {
            ObservableForm::Coordinate { coord }
            | ObservableForm::Cosine { coord, .. }
            | ObservableForm::Affine { coord, .. }
            | ObservableForm::Tabulated { coord, .. } => *coord,
        }
    }
}

fn interpolate(values: &[f64], x: f64) -> f64 {
    let cells = (values.len() - 1) as f64;
    let t = (x.clamp(0.0, 1.0) * cells).min(cells);
    let i = (t.floor() as usize).min(values.len() - 2);
    let frac = t - i as f64;
    values[i] * (1.0 - frac) + values[i + 1] * frac
}

/// A real observable `v` together with its Hölder exponent and the constant
/// subtracted to make it mean zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderObservable {
    pub form: ObservableForm,
    pub eta: f64,
    pub mean_offset: f64,
    pub centered: bool,
    /// Monte Carlo standard error of `mean_offset` (0 when set exactly).
    pub offset_std_error: f64,
}

impl HolderObservable {
    pub fn new(form: ObservableForm, eta: f64) -> Self {
        HolderObservable {
            form,
            eta,
            mean_offset: 0.0,
            centered: false,
            offset_std_error: 0.0,
        }
    }

    /// `x ↦ x_coord`
    pub fn coordinate(coord: usize) -> Self {
        Self::new(ObservableForm::Coordinate { coord }, 1.0)
    }

    /// `x ↦ cos(2π freq x_0)`
    pub fn cosine(freq: f64) -> Self {
        Self::shifted_cosine(freq, 0.0)
    }

    /// `x ↦ cos(2π (freq x_0 + phase))`
    pub fn shifted_cosine(freq: f64, phase: f64) -> Self {
        Self::new(
            ObservableForm::Cosine {
                coord: 0,
                freq,
                phase,
            },
            1.0,
        )
    }

    pub fn affine(coord: usize, slope: f64, intercept: f64) -> Self {
        Self::new(
            ObservableForm::Affine {
                coord,
                slope,
                intercept,
            },
            1.0,
        )
    }

    pub fn constant(c: f64) -> Self {
        Self::affine(0, 0.0, c)
    }

    /// The zero observable.
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn tabulated(coord: usize, values: Vec<f64>, eta: f64) -> crate::Result<Self> {
        if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
            return Err(crate::error::invalid(
                "values",
                "need at least two finite grid values",
            ));
        }
        Ok(Self::new(
            ObservableForm::Tabulated {
                coord,
                values: values.into(),
            },
            eta,
        ))
    }

    /// Uses a known mean instead of estimating it.
    pub fn with_offset(mut self, offset: f64) -> Self {
        self.mean_offset = offset;
        self.centered = true;
        self.offset_std_error = 0.0;
        self
    }

    #[inline]
    pub fn eval(&self, p: &Point) -> f64 {
        self.form.eval(p) - self.mean_offset
    }

    /// Exact zero for constant observables (and the zero observable).
    pub fn is_constant(&self) -> bool {
        match &self.form {
            ObservableForm::Affine { slope, .. } => *slope == 0.0,
            ObservableForm::Cosine { freq, .. } => *freq == 0.0,
            ObservableForm::Tabulated { values, .. } => values.iter().all(|v| *v == values[0]),
            ObservableForm::Coordinate { .. } => false,
        }
    }

    /// Sup of `|v|` over the unit cube (after centering).
    pub fn sup_bound(&self) -> f64 {
        let m = self.mean_offset;
        match &self.form {
            ObservableForm::Coordinate { .. } => m.abs().max((1.0 - m).abs()),
            ObservableForm::Cosine { .. } => 1.0 + m.abs(),
            ObservableForm::Affine {
                slope, intercept, ..
            } => (intercept - m).abs().max((slope + intercept - m).abs()),
            ObservableForm::Tabulated { values, .. } => values
                .iter()
                .map(|v| (v - m).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Sets `mean_offset` to a Monte Carlo estimate of `∫ v dμ`.
    ///
    /// `mc.trials` orbits are started from approximately stationary points;
    /// each contributes `mc.orbit_len` consecutive samples. With
    /// `orbit_len = 1` every sample is an independent burned-in draw.
    pub fn center(&self, map: &MapSystem, mc: &McConfig) -> HolderObservable {
        let mut out = self.clone();
        out.mean_offset = 0.0;
        if self.is_constant() {
            out.mean_offset = self.form.eval(&Point::new2(0.0, 0.0));
            out.centered = true;
            out.offset_std_error = 0.0;
            return out;
        }
        let burn_in = mc.burn_in.unwrap_or_else(|| map.default_burn_in());
        let orbit_len = mc.orbit_len.max(1);
        let means = map_indexed(mc.exec, mc.trials as usize, |t| {
            let mut rng = stream_rng(mc.seed, t as u64);
            let mut cursor = OrbitCursor::stationary(*map, &mut rng, burn_in);
            let mut acc = 0.0;
            for _ in 0..orbit_len {
                acc += self.form.eval(&cursor.next_point());
            }
            acc / orbit_len as f64
        });
        let n = means.len() as f64;
        let mean = pairwise_sum(&means) / n;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        out.mean_offset = mean;
        out.centered = true;
        out.offset_std_error = (var / n).sqrt();
        out
    }

    /// Lower bound on the Hölder seminorm `[v]_η`: the maximum of
    /// `|v(x) - v(y)| / d(x, y)^η` over `pair_samples` uniformly drawn pairs.
    ///
    /// The pair sequence depends only on `seed`, so the estimate is a running
    /// maximum and never decreases as `pair_samples` grows.
    pub fn holder_seminorm_estimate(&self, pair_samples: u64, eta: f64, seed: u64) -> f64 {
        let mut rng = stream_rng(seed, 0);
        let dim = self.form.coord() + 1;
        let mut best = 0.0_f64;
        for _ in 0..pair_samples {
            let (x, y) = if dim >= 2 {
                (
                    Point::new2(rng.random(), rng.random()),
                    Point::new2(rng.random(), rng.random()),
                )
            } else {
                (Point::new1(rng.random()), Point::new1(rng.random()))
            };
            let d = x
                .coords()
                .iter()
                .zip(y.coords())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if d > 0.0 {
                let q = (self.eval(&x) - self.eval(&y)).abs() / d.powf(eta);
                best = best.max(q);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapSystem;
    use approx::assert_relative_eq;

    #[test]
    fn eval_examples() {
        let p = Point::new2(0.3, 0.9);
        assert_eq!(HolderObservable::coordinate(0).eval(&p), 0.3);
        assert_eq!(HolderObservable::coordinate(1).eval(&p), 0.9);
        assert_eq!(HolderObservable::cosine(1.0).eval(&Point::new1(0.0)), 1.0);
        let v = HolderObservable::coordinate(0).with_offset(0.5);
        assert_eq!(v.eval(&Point::new1(0.5)), 0.0);
    }

    #[test]
    fn tabulated_interpolates() {
        let v = HolderObservable::tabulated(0, vec![0.0, 2.0, 0.0], 1.0).unwrap();
        assert_eq!(v.eval(&Point::new1(0.25)), 1.0);
        assert_eq!(v.eval(&Point::new1(0.5)), 2.0);
        assert_eq!(v.eval(&Point::new1(1.0)), 0.0);
        assert!(HolderObservable::tabulated(0, vec![1.0], 1.0).is_err());
    }

    #[test]
    fn centering_examples_on_doubling() {
        let map = MapSystem::doubling();
        let mc = McConfig::new(1_000_000, 9);
        let x = HolderObservable::coordinate(0).center(&map, &mc);
        assert!(x.centered);
        assert!((x.mean_offset - 0.5).abs() < 0.002, "{}", x.mean_offset);
        let c = HolderObservable::cosine(1.0).center(&map, &mc);
        assert!(c.mean_offset.abs() < 0.002, "{}", c.mean_offset);
        let k = HolderObservable::constant(3.25).center(&map, &mc);
        assert_eq!(k.mean_offset, 3.25);
        assert_eq!(k.eval(&Point::new1(0.7)), 0.0);
    }

    #[test]
    fn centering_is_idempotent_within_error() {
        let map = MapSystem::lsv(0.4).unwrap();
        let mc = McConfig::new(200, 4).with_orbit_len(5_000).with_burn_in(2_000);
        let once = HolderObservable::cosine(1.0).center(&map, &mc);
        let twice = once.center(&map, &mc.with_seed(5));
        let se = once.offset_std_error.hypot(twice.offset_std_error);
        assert!((once.mean_offset - twice.mean_offset).abs() < 3.0 * se);
    }

    #[test]
    fn seminorm_examples() {
        assert_eq!(HolderObservable::constant(2.0).holder_seminorm_estimate(1000, 1.0, 1), 0.0);
        let lip = HolderObservable::coordinate(0).holder_seminorm_estimate(1000, 1.0, 1);
        assert!(lip > 0.0 && lip <= 1.0 + 1e-12);
        assert_relative_eq!(lip, 1.0, max_relative = 1e-9);
        let half = HolderObservable::coordinate(0).holder_seminorm_estimate(20_000, 0.5, 1);
        assert!(half > 0.95 && half <= 1.0 + 1e-12, "{half}");
    }

    #[test]
    fn seminorm_is_a_running_max() {
        let v = HolderObservable::cosine(3.0);
        let mut last = 0.0;
        for n in [1, 10, 100, 1000, 10_000] {
            let est = v.holder_seminorm_estimate(n, 0.7, 17);
            assert!(est >= last);
            last = est;
        }
    }

    #[test]
    fn sup_bounds_hold_on_grid() {
        let obs = [
            HolderObservable::coordinate(0).with_offset(0.3),
            HolderObservable::cosine(2.0).with_offset(0.1),
            HolderObservable::affine(0, -2.0, 1.0).with_offset(0.2),
        ];
        for v in &obs {
            let bound = v.sup_bound();
            for i in 0..=1000 {
                let p = Point::new1(i as f64 / 1000.0);
                assert!(v.eval(&p).abs() <= bound + 1e-12);
            }
        }
    }
}
