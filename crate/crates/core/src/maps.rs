//! Concrete dynamical systems: the doubling map, the LSV intermittent map and
//! the intermittent Baker's map on the unit square.
//!
//! All steps clamp their output into `[0, 1]`; rounding can otherwise push a
//! coordinate a few ulps outside the unit interval.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::parallel::stream_rng;

/// Default tolerance for the inverse of the left LSV branch.
pub const G_INVERSE_TOL: f64 = 1e-13;

const G_INVERSE_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Doubling,
    Lsv,
    #[serde(rename = "baker")]
    IntermittentBaker,
}

/// Arithmetic used for explicit doubling-map orbits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoublingArithmetic {
    #[default]
    Float,
    /// 64-bit binary fraction, multiply by two with wraparound.
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapSystem {
    kind: MapKind,
    alpha: f64,
    #[serde(default)]
    doubling_arithmetic: DoublingArithmetic,
}

impl MapSystem {
    pub fn doubling() -> Self {
        MapSystem {
            kind: MapKind::Doubling,
            alpha: f64::NAN,
            doubling_arithmetic: DoublingArithmetic::Float,
        }
    }

    pub fn lsv(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(MapSystem {
            kind: MapKind::Lsv,
            alpha,
            doubling_arithmetic: DoublingArithmetic::Float,
        })
    }

    pub fn baker(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(MapSystem {
            kind: MapKind::IntermittentBaker,
            alpha,
            doubling_arithmetic: DoublingArithmetic::Float,
        })
    }

    pub fn with_doubling_arithmetic(mut self, arithmetic: DoublingArithmetic) -> Self {
        self.doubling_arithmetic = arithmetic;
        self
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    /// Intermittency parameter; `None` for the doubling map.
    pub fn alpha(&self) -> Option<f64> {
        match self.kind {
            MapKind::Doubling => None,
            _ => Some(self.alpha),
        }
    }

    /// Return-time tail exponent `1 / alpha`; infinite for the doubling map
    /// (exponential tails).
    pub fn beta(&self) -> f64 {
        match self.kind {
            MapKind::Doubling => f64::INFINITY,
            _ => 1.0 / self.alpha,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            MapKind::IntermittentBaker => 2,
            _ => 1,
        }
    }

    /// Burn-in used when sampling the invariant measure, scaled to the
    /// mixing time of the map.
    pub fn default_burn_in(&self) -> u64 {
        match self.kind {
            MapKind::Doubling => 1_000,
            _ => 10_000,
        }
    }

    /// One step of the map with domain checks.
    pub fn step(&self, p: &Point) -> Result<Point> {
        if p.dim() != self.state_dim() {
            return Err(invalid(
                "point",
                format!("expected dimension {}, got {}", self.state_dim(), p.dim()),
            ));
        }
        match self.kind {
            MapKind::Doubling => Ok(Point::new1(match self.doubling_arithmetic {
                DoublingArithmetic::Float => doubling_step(p.x())?,
                DoublingArithmetic::FixedPoint => doubling_step_fixed(p.x())?,
            })),
            MapKind::Lsv => Ok(Point::new1(lsv_step(p.x(), self.alpha)?)),
            MapKind::IntermittentBaker => baker_step(p, self.alpha, G_INVERSE_TOL),
        }
    }

    /// Unchecked step for hot loops over points already known to lie in the
    /// domain. The Baker branch inverse is computed to [`G_INVERSE_TOL`]; it
    /// cannot fail for inputs in `[0, 1]`.
    #[inline]
    pub fn advance(&self, p: Point) -> Point {
        match self.kind {
            MapKind::Doubling => Point::new1(match self.doubling_arithmetic {
                DoublingArithmetic::Float => float_double(p.x()),
                DoublingArithmetic::FixedPoint => fixed_double(p.x()),
            }),
            MapKind::Lsv => Point::new1(lsv_unchecked(p.x(), self.alpha)),
            MapKind::IntermittentBaker => {
                let [x1, x2] = p.coords;
                let y2 = if x1 <= 0.5 {
                    g_inverse_unchecked(x2, self.alpha, G_INVERSE_TOL).0
                } else {
                    (x2 + 1.0) * 0.5
                };
                Point::new2(lsv_unchecked(x1, self.alpha), clamp01(y2))
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "alpha",
            value: alpha,
            domain: "(0, 1)",
        })
    }
}

fn check_unit(what: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value: x,
            domain: "[0, 1]",
        })
    }
}

#[inline]
fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// A point of `[0,1]` or `[0,1]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    coords: [f64; 2],
    dim: u8,
}

impl Point {
    pub fn new1(x: f64) -> Self {
        Point {
            coords: [x, 0.0],
            dim: 1,
        }
    }

    pub fn new2(x1: f64, x2: f64) -> Self {
        Point {
            coords: [x1, x2],
            dim: 2,
        }
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        for &c in coords {
            check_unit("coordinate", c)?;
        }
        match coords {
            [x] => Ok(Point::new1(*x)),
            [x1, x2] => Ok(Point::new2(*x1, *x2)),
            _ => Err(invalid("point", format!("dimension {} not supported", coords.len()))),
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    /// First coordinate.
    #[inline]
    pub fn x(&self) -> f64 {
        self.coords[0]
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.coords[i]
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }
}

/// Left branch of the LSV map, `g(y) = y (1 + 2^α y^α)` on `[0, 1/2]`.
#[inline]
pub fn g(y: f64, alpha: f64) -> f64 {
    y * (1.0 + (2.0 * y).powf(alpha))
}

#[inline]
fn g_prime(y: f64, alpha: f64) -> f64 {
    1.0 + (1.0 + alpha) * (2.0 * y).powf(alpha)
}

#[inline]
fn lsv_unchecked(x: f64, alpha: f64) -> f64 {
    if x <= 0.5 {
        clamp01(g(x, alpha))
    } else {
        clamp01(2.0 * x - 1.0)
    }
}

/// The LSV map `x ↦ g(x)` for `x <= 1/2`, `2x - 1` otherwise.
pub fn lsv_step(x: f64, alpha: f64) -> Result<f64> {
    check_unit("x", x)?;
    check_alpha(alpha)?;
    Ok(lsv_unchecked(x, alpha))
}

/// Inverse of the left LSV branch: `y ∈ [0, 1/2]` with `|g(y) - u| <= tol`.
///
/// Bisection down to a bracket well inside `tol`, then two Newton steps.
pub fn g_inverse(u: f64, alpha: f64, tol: f64) -> Result<f64> {
    check_unit("u", u)?;
    check_alpha(alpha)?;
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let (y, iterations) = g_inverse_unchecked(u, alpha, tol);
    let residual = (g(y, alpha) - u).abs();
    if residual <= tol {
        Ok(y)
    } else {
        Err(Error::NoConvergence {
            iterations,
            residual,
        })
    }
}

fn g_inverse_unchecked(u: f64, alpha: f64, tol: f64) -> (f64, usize) {
    if u <= 0.0 {
        return (0.0, 0);
    }
    if u >= 1.0 {
        return (0.5, 0);
    }
    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    // g' <= 2 + α < 3 on [0, 1/2], so a bracket of width tol/4 keeps the
    // residual below tol.
    let width = 0.25 * tol;
    let mut iterations = 0;
    while hi - lo > width && iterations < G_INVERSE_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if g(mid, alpha) < u {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..2 {
        let next = y - (g(y, alpha) - u) / g_prime(y, alpha);
        if next.is_finite() && (lo..=hi).contains(&next) {
            y = next;
        }
        iterations += 1;
    }
    (y, iterations)
}

/// Intermittent Baker's map on the unit square.
pub fn baker_step(p: &Point, alpha: f64, tol: f64) -> Result<Point> {
    if p.dim() != 2 {
        return Err(invalid("point", "the Baker map acts on [0,1]^2"));
    }
    let [x1, x2] = p.coords;
    check_unit("x1", x1)?;
    check_unit("x2", x2)?;
    let y1 = lsv_step(x1, alpha)?;
    let y2 = if x1 <= 0.5 {
        g_inverse(x2, alpha, tol)?
    } else {
        (x2 + 1.0) * 0.5
    };
    Ok(Point::new2(y1, clamp01(y2)))
}

/// `2x mod 1` in floating point. The endpoint `x = 1` maps to 1.
pub fn doubling_step(x: f64) -> Result<f64> {
    check_unit("x", x)?;
    Ok(float_double(x))
}

/// `2x mod 1` computed on a 64-bit binary fraction.
pub fn doubling_step_fixed(x: f64) -> Result<f64> {
    check_unit("x", x)?;
    Ok(fixed_double(x))
}

#[inline]
fn float_double(x: f64) -> f64 {
    if x < 0.5 {
        2.0 * x
    } else {
        clamp01(2.0 * x - 1.0)
    }
}

fn to_fixed(x: f64) -> u64 {
    if x >= 1.0 {
        u64::MAX
    } else {
        (x * TWO_POW_64) as u64
    }
}

fn from_fixed(bits: u64) -> f64 {
    bits as f64 / TWO_POW_64
}

fn fixed_double(x: f64) -> f64 {
    clamp01(from_fixed(to_fixed(x).wrapping_shl(1)))
}

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

/// `[x0, T x0, ..., T^n x0]`.
pub fn orbit(map: &MapSystem, x0: Point, n: usize) -> Result<Vec<Point>> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(x0);
    let mut p = x0;
    for _ in 0..n {
        p = map.step(&p)?;
        out.push(p);
    }
    Ok(out)
}

/// One approximately μ-distributed point: a uniform draw pushed forward
/// `burn_in` times.
///
/// For the doubling map the uniform draw is an infinite random binary
/// expansion and each step shifts in a fresh bit, so Lebesgue measure is
/// reproduced exactly for any `burn_in`.
pub fn sample_invariant(map: &MapSystem, seed: u64, burn_in: u64) -> Result<Point> {
    let mut rng = stream_rng(seed, 0);
    Ok(OrbitCursor::stationary(*map, &mut rng, burn_in).current())
}

/// A single forward orbit, advanced in place.
///
/// Doubling-map cursors created by [`OrbitCursor::stationary`] track a 64-bit
/// window of an infinite random binary expansion, which avoids the collapse
/// of finite-precision doubling orbits onto 0.
#[derive(Debug, Clone)]
pub struct OrbitCursor {
    map: MapSystem,
    state: CursorState,
}

// the bit variant is stepped in hot loops, so its RNG stays inline
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
enum CursorState {
    Float(Point),
    Bits {
        window: u64,
        reservoir: u64,
        left: u32,
        rng: ChaCha8Rng,
    },
}

impl OrbitCursor {
    /// Cursor at an explicit point, iterated with [`MapSystem::advance`].
    pub fn at(map: MapSystem, p: Point) -> Self {
        OrbitCursor {
            map,
            state: CursorState::Float(p),
        }
    }

    /// Cursor at an approximately stationary point: uniform draw followed by
    /// `burn_in` steps.
    pub fn stationary<R: Rng + ?Sized>(map: MapSystem, rng: &mut R, burn_in: u64) -> Self {
        let mut cursor = match map.kind {
            MapKind::Doubling => {
                let window = rng.random::<u64>();
                let inner: ChaCha8Rng = rand::SeedableRng::seed_from_u64(rng.random());
                OrbitCursor {
                    map,
                    state: CursorState::Bits {
                        window,
                        reservoir: 0,
                        left: 0,
                        rng: inner,
                    },
                }
            }
            MapKind::Lsv => OrbitCursor::at(map, Point::new1(rng.random())),
            MapKind::IntermittentBaker => {
                OrbitCursor::at(map, Point::new2(rng.random(), rng.random()))
            }
        };
        cursor.skip(burn_in);
        cursor
    }

    pub fn map(&self) -> &MapSystem {
        &self.map
    }

    #[inline]
    pub fn current(&self) -> Point {
        match &self.state {
            CursorState::Float(p) => *p,
            // Top 53 bits of the window.
            CursorState::Bits { window, .. } => {
                Point::new1((window >> 11) as f64 * (1.0 / (1u64 << 53) as f64))
            }
        }
    }

    #[inline]
    pub fn advance(&mut self) {
        match &mut self.state {
            CursorState::Float(p) => *p = self.map.advance(*p),
            CursorState::Bits {
                window,
                reservoir,
                left,
                rng,
            } => {
                if *left == 0 {
                    *reservoir = rng.random();
                    *left = 64;
                }
                *window = (*window << 1) | (*reservoir & 1);
                *reservoir >>= 1;
                *left -= 1;
            }
        }
    }

    pub fn skip(&mut self, steps: u64) {
        for _ in 0..steps {
            self.advance();
        }
    }

    /// Returns the current point and then advances.
    #[inline]
    pub fn next_point(&mut self) -> Point {
        let p = self.current();
        self.advance();
        p
    }
}
