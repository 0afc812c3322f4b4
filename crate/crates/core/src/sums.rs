//! Birkhoff sums `S_v(a, b) = Σ_{a≤i<b} v(T^i x)` and iterated sums
//! `𝕊_{v,w}(a, b) = Σ_{a≤i<j<b} v(T^i x) w(T^j x)`.
//!
//! The streaming accumulator computes both in one pass with O(1) memory:
//! on each push of `(v_m, w_m)` the iterated sum is updated with the running
//! `S_v` *before* `v_m` is added to it. Segment sums over contiguous windows
//! combine exactly through the Chen relation, which makes windowed
//! computations associative.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::maps::{MapSystem, OrbitCursor, Point};
use crate::observables::HolderObservable;

/// Largest window accepted by the quadratic brute-force oracle.
pub const BRUTE_FORCE_MAX_WINDOW: u64 = 100_000;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// One-pass accumulator for `S_v`, `S_w` and `𝕊_{v,w}`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SumAccumulator {
    s_v: CompensatedSum,
    s_w: CompensatedSum,
    ss_vw: CompensatedSum,
    count: u64,
}

impl SumAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, v: f64, w: f64) {
        self.ss_vw.add(self.s_v.value() * w);
        self.s_v.add(v);
        self.s_w.add(w);
        self.count += 1;
    }

    pub fn s_v(&self) -> f64 {
        self.s_v.value()
    }

    pub fn s_w(&self) -> f64 {
        self.s_w.value()
    }

    pub fn ss_vw(&self) -> f64 {
        self.ss_vw.value()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Sums for the window `[start, start + count)`.
    pub fn segment(&self, start: u64) -> SegmentSums {
        SegmentSums {
            start,
            end: start + self.count,
            s_v: self.s_v(),
            s_w: self.s_w(),
            ss_vw: self.ss_vw(),
        }
    }
}

/// `S_v`, `S_w` and `𝕊_{v,w}` over the window `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSums {
    pub start: u64,
    pub end: u64,
    pub s_v: f64,
    pub s_w: f64,
    pub ss_vw: f64,
}

impl SegmentSums {
    pub fn empty(at: u64) -> Self {
        SegmentSums {
            start: at,
            end: at,
            s_v: 0.0,
            s_w: 0.0,
            ss_vw: 0.0,
        }
    }

    /// Sums over a window given the observable values at its positions.
    pub fn from_values(start: u64, v: &[f64], w: &[f64]) -> Self {
        assert_eq!(v.len(), w.len(), "value slices must have equal length");
        let mut acc = SumAccumulator::new();
        for (&a, &b) in v.iter().zip(w) {
            acc.push(a, b);
        }
        acc.segment(start)
    }

    /// Concatenation of two adjacent windows (Chen relation for two pieces).
    pub fn concat(&self, next: &SegmentSums) -> Result<SegmentSums> {
        if next.start != self.end {
            return Err(Error::NonContiguous {
                index: 1,
                start: next.start,
                previous_end: self.end,
            });
        }
        Ok(SegmentSums {
            start: self.start,
            end: next.end,
            s_v: self.s_v + next.s_v,
            s_w: self.s_w + next.s_w,
            ss_vw: self.ss_vw + next.ss_vw + self.s_v * next.s_w,
        })
    }
}

/// Recombines contiguous segment sums over `a_0 ≤ a_1 ≤ … ≤ a_ℓ` into the
/// sums over `[a_0, a_ℓ)`:
///
/// `S_v = Σ_i S_v(a_i, a_{i+1})` and
/// `𝕊_{v,w} = Σ_i 𝕊_{v,w}(a_i, a_{i+1}) + Σ_{i<j} S_v(a_i, a_{i+1}) S_w(a_j, a_{j+1})`.
///
/// The cross term is accumulated as `Σ_j (Σ_{i<j} S_v^i) S_w^j`, which is
/// linear in the number of segments.
pub fn chen_recombine(segments: &[SegmentSums]) -> Result<SegmentSums> {
    let first = segments
        .first()
        .ok_or_else(|| invalid("segments", "need at least one segment"))?;
    let mut s_v = CompensatedSum::default();
    let mut s_w = CompensatedSum::default();
    let mut ss = CompensatedSum::default();
    let mut previous_end = first.start;
    for (index, seg) in segments.iter().enumerate() {
        if seg.start != previous_end || seg.end < seg.start {
            return Err(Error::NonContiguous {
                index,
                start: seg.start,
                previous_end,
            });
        }
        ss.add(seg.ss_vw);
        ss.add(s_v.value() * seg.s_w);
        s_v.add(seg.s_v);
        s_w.add(seg.s_w);
        previous_end = seg.end;
    }
    Ok(SegmentSums {
        start: first.start,
        end: previous_end,
        s_v: s_v.value(),
        s_w: s_w.value(),
        ss_vw: ss.value(),
    })
}

fn check_window(a: u64, b: u64) -> Result<()> {
    if a > b {
        Err(invalid("window", format!("start {a} exceeds end {b}")))
    } else {
        Ok(())
    }
}

/// Validated cursor positioned at `T^a x0`.
fn cursor_at(map: &MapSystem, x0: Point, a: u64) -> Result<OrbitCursor> {
    // One checked step validates the domain; the rest use the fast path.
    map.step(&x0)?;
    let mut cursor = OrbitCursor::at(*map, x0);
    cursor.skip(a);
    Ok(cursor)
}

/// `S_v(a, b)` along the orbit of `x0`.
pub fn birkhoff_sum(
    map: &MapSystem,
    v: &HolderObservable,
    x0: Point,
    a: u64,
    b: u64,
) -> Result<f64> {
    check_window(a, b)?;
    let mut cursor = cursor_at(map, x0, a)?;
    let mut acc = CompensatedSum::default();
    for _ in a..b {
        acc.add(v.eval(&cursor.next_point()));
    }
    Ok(acc.value())
}

/// `(S_v, S_w, 𝕊_{v,w})` over `[a, b)` in a single orbit pass.
pub fn iterated_sum_stream(
    map: &MapSystem,
    v: &HolderObservable,
    w: &HolderObservable,
    x0: Point,
    a: u64,
    b: u64,
) -> Result<SegmentSums> {
    check_window(a, b)?;
    let mut cursor = cursor_at(map, x0, a)?;
    let mut acc = SumAccumulator::new();
    for _ in a..b {
        let p = cursor.next_point();
        acc.push(v.eval(&p), w.eval(&p));
    }
    Ok(acc.segment(a))
}

/// `𝕊_{v,w}(a, b)` by explicit enumeration of all pairs `i < j`.
pub fn iterated_sum_bruteforce(
    map: &MapSystem,
    v: &HolderObservable,
    w: &HolderObservable,
    x0: Point,
    a: u64,
    b: u64,
) -> Result<f64> {
    check_window(a, b)?;
    let len = b - a;
    if len > BRUTE_FORCE_MAX_WINDOW {
        return Err(Error::WindowTooLarge {
            len,
            max: BRUTE_FORCE_MAX_WINDOW,
        });
    }
    let mut cursor = cursor_at(map, x0, a)?;
    let points: Vec<Point> = (0..len).map(|_| cursor.next_point()).collect();
    let vs: Vec<f64> = points.iter().map(|p| v.eval(p)).collect();
    let ws: Vec<f64> = points.iter().map(|p| w.eval(p)).collect();
    Ok(iterated_sum_pairs(&vs, &ws))
}

/// `Σ_{i<j} v_i w_j` by double loop.
pub fn iterated_sum_pairs(v: &[f64], w: &[f64]) -> f64 {
    let mut total = CompensatedSum::default();
    for (i, &vi) in v.iter().enumerate() {
        for &wj in w.iter().skip(i + 1) {
            total.add(vi * wj);
        }
    }
    total.value()
}

/// The partition `a_i = ⌊i n / (2k)⌋`, `0 ≤ i ≤ 2k`, of `[0, n)` into `2k`
/// nearly equal pieces. Odd pieces `[a_{2i}, a_{2i+1})` are the blocks; even
/// pieces between them are the gaps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockScheme {
    n: u64,
    k: u64,
    a: Vec<u64>,
}

/// Builds the block scheme for `n ≥ 2k ≥ 2`.
pub fn block_partition(n: u64, k: u64) -> Result<BlockScheme> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    let two_k = 2 * k;
    if n < two_k {
        return Err(invalid("n", format!("n = {n} must be at least 2k = {two_k}")));
    }
    let a = (0..=two_k)
        .map(|i| ((i as u128 * n as u128) / two_k as u128) as u64)
        .collect();
    Ok(BlockScheme { n, k, a })
}

impl BlockScheme {
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    /// `[a_0, …, a_{2k}]`
    pub fn boundaries(&self) -> &[u64] {
        &self.a
    }

    /// Block `i` as the inclusive index range `(ℓ_i, u_i) = (a_{2i}, a_{2i+1} - 1)`.
    pub fn block(&self, i: usize) -> (u64, u64) {
        (self.a[2 * i], self.a[2 * i + 1] - 1)
    }

    /// Half-open block windows `[a_{2i}, a_{2i+1})`.
    pub fn blocks(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        (0..self.k as usize).map(|i| (self.a[2 * i], self.a[2 * i + 1]))
    }

    /// Separation `ℓ_{r+1} - u_r` between consecutive blocks, `0 ≤ r ≤ k - 2`.
    pub fn gaps(&self) -> impl Iterator<Item = u64> + '_ {
        (0..(self.k as usize).saturating_sub(1)).map(|r| self.block(r + 1).0 - self.block(r).1)
    }

    /// Checks, in exact integer arithmetic, that every piece satisfies
    /// `n/(2k) - 1 ≤ a_{i+1} - a_i ≤ n/(2k) + 1` and every gap satisfies
    /// `ℓ_{r+1} - u_r ≥ n/(2k)`.
    pub fn check_bounds(&self) -> bool {
        let two_k = 2 * self.k as u128;
        let n = self.n as u128;
        let ends_ok = self.a.first() == Some(&0) && self.a.last() == Some(&self.n);
        let pieces_ok = self.a.windows(2).all(|w| {
            let d = (w[1] - w[0]) as u128;
            // (d + 1) * 2k >= n  and  d * 2k <= n + 2k
            (d + 1) * two_k >= n && d * two_k <= n + two_k
        });
        let gaps_ok = self.gaps().all(|g| g as u128 * two_k >= n);
        ends_ok && pieces_ok && gaps_ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn id() -> HolderObservable {
        HolderObservable::coordinate(0)
    }

    #[test]
    fn birkhoff_examples() {
        let d = MapSystem::doubling();
        let x0 = Point::new1(0.1);
        assert_relative_eq!(birkhoff_sum(&d, &id(), x0, 0, 3).unwrap(), 0.7, max_relative = 1e-15);
        assert_relative_eq!(birkhoff_sum(&d, &id(), x0, 1, 3).unwrap(), 0.6, max_relative = 1e-15);
        assert_eq!(birkhoff_sum(&d, &id(), x0, 4, 4).unwrap(), 0.0);
        assert!(birkhoff_sum(&d, &id(), x0, 5, 4).is_err());
    }

    #[test]
    fn iterated_examples() {
        let d = MapSystem::doubling();
        let x0 = Point::new1(0.1);
        let s = iterated_sum_stream(&d, &id(), &id(), x0, 0, 3).unwrap();
        // 0.1·0.2 + 0.1·0.4 + 0.2·0.4
        assert_relative_eq!(s.ss_vw, 0.14, max_relative = 1e-14);
        assert_eq!(iterated_sum_stream(&d, &id(), &id(), x0, 2, 3).unwrap().ss_vw, 0.0);
        assert_eq!(iterated_sum_stream(&d, &id(), &id(), x0, 2, 2).unwrap().ss_vw, 0.0);
        let zero = HolderObservable::zero();
        assert_eq!(iterated_sum_stream(&d, &zero, &id(), x0, 0, 40).unwrap().ss_vw, 0.0);
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(iterated_sum_pairs(&[3.0, 9.0], &[5.0, 7.0]), 21.0);
        assert_eq!(iterated_sum_pairs(&[], &[]), 0.0);
        let d = MapSystem::doubling();
        let r = iterated_sum_bruteforce(&d, &id(), &id(), Point::new1(0.1), 0, 3).unwrap();
        assert_relative_eq!(r, 0.14, max_relative = 1e-14);
        let big = iterated_sum_bruteforce(&d, &id(), &id(), Point::new1(0.1), 0, 100_001);
        assert!(matches!(big, Err(Error::WindowTooLarge { .. })));
    }

    #[test]
    fn partition_examples() {
        assert_eq!(block_partition(10, 2).unwrap().boundaries(), &[0, 2, 5, 7, 10]);
        assert_eq!(block_partition(6, 3).unwrap().boundaries(), &[0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(block_partition(12, 3).unwrap().boundaries(), &[0, 2, 4, 6, 8, 10, 12]);
        assert!(block_partition(5, 3).is_err());
        assert!(block_partition(5, 0).is_err());
        let s = block_partition(10, 2).unwrap();
        assert_eq!(s.blocks().collect::<Vec<_>>(), vec![(0, 2), (5, 7)]);
        assert_eq!(s.gaps().collect::<Vec<_>>(), vec![4]);
    }

    #[test]
    fn chen_examples() {
        let d = MapSystem::doubling();
        let x0 = Point::new1(0.1);
        let a = iterated_sum_stream(&d, &id(), &id(), x0, 0, 2).unwrap();
        let b = iterated_sum_stream(&d, &id(), &id(), x0, 2, 5).unwrap();
        let whole = iterated_sum_stream(&d, &id(), &id(), x0, 0, 5).unwrap();
        let r = chen_recombine(&[a, b]).unwrap();
        assert_relative_eq!(r.ss_vw, whole.ss_vw, max_relative = 1e-12);
        assert_relative_eq!(r.s_v, whole.s_v, max_relative = 1e-12);
        assert_eq!(chen_recombine(&[a]).unwrap(), a);
        assert_eq!(a.concat(&b).unwrap().end, 5);

        let zero = SegmentSums::from_values(0, &[0.0; 4], &[0.0; 4]);
        let r = chen_recombine(&[zero, SegmentSums::from_values(4, &[0.0; 3], &[0.0; 3])]).unwrap();
        assert_eq!((r.s_v, r.ss_vw), (0.0, 0.0));
    }

    #[test]
    fn chen_rejects_gaps() {
        let a = SegmentSums::from_values(0, &[1.0, 2.0], &[1.0, 2.0]);
        let b = SegmentSums::from_values(3, &[1.0], &[1.0]);
        assert!(matches!(chen_recombine(&[a, b]), Err(Error::NonContiguous { index: 1, .. })));
        assert!(a.concat(&b).is_err());
        assert!(chen_recombine(&[]).is_err());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    proptest! {
        #[test]
        fn stream_matches_pairs(values in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 0..300)) {
            let (v, w): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
            let stream = SegmentSums::from_values(0, &v, &w).ss_vw;
            let brute = iterated_sum_pairs(&v, &w);
            prop_assert!((stream - brute).abs() <= 1e-9 * brute.abs().max(1.0));
        }

        #[test]
        fn shift_covariance(x in 0.0f64..1.0, a in 0u64..50, len in 0u64..200) {
            let map = MapSystem::lsv(0.4).unwrap();
            let v = HolderObservable::cosine(1.0);
            let direct = birkhoff_sum(&map, &v, Point::new1(x), a, a + len).unwrap();
            let mut cursor = OrbitCursor::at(map, Point::new1(x));
            cursor.skip(a);
            let shifted = birkhoff_sum(&map, &v, cursor.current(), 0, len).unwrap();
            prop_assert_eq!(direct, shifted);
        }

        #[test]
        fn partition_bounds(n in 2u64..1_000_000, k in 1u64..500) {
            prop_assume!(n >= 2 * k);
            prop_assert!(block_partition(n, k).unwrap().check_bounds());
        }
    }
}
