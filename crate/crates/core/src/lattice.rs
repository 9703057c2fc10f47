//! Geometry of Z^d: points, Euclidean balls, the inner vertex boundary and
//! uniform sampling on it.
//!
//! Ball membership is strict (`|p - c| < r`) and decided in integer
//! arithmetic: each ball precomputes the largest integer squared distance
//! that is still inside, so points sitting exactly on the sphere are never
//! misclassified by floating-point rounding.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::de::{self, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// A point of Z^D. The walk dimension defaults to 4.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticePoint<const D: usize = 4> {
    coords: [i32; D],
}

impl<const D: usize> LatticePoint<D> {
    pub const fn new(coords: [i32; D]) -> Self {
        Self { coords }
    }

    pub const fn origin() -> Self {
        Self { coords: [0; D] }
    }

    /// `value * e_axis`.
    pub fn on_axis(axis: usize, value: i32) -> Self {
        let mut coords = [0; D];
        coords[axis] = value;
        Self { coords }
    }

    pub const fn dimension() -> usize {
        D
    }

    pub fn coords(&self) -> &[i32; D] {
        &self.coords
    }

    pub fn norm_sq(&self) -> i64 {
        self.coords.iter().map(|&c| i64::from(c) * i64::from(c)).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn dist_sq(&self, other: &Self) -> i64 {
        self.coords
            .iter()
            .zip(other.coords.iter())
            .map(|(&a, &b)| {
                let d = i64::from(a) - i64::from(b);
                d * d
            })
            .sum()
    }

    pub fn dist(&self, other: &Self) -> f64 {
        (self.dist_sq(other) as f64).sqrt()
    }

    pub fn max_abs(&self) -> i64 {
        self.coords
            .iter()
            .map(|&c| i64::from(c).abs())
            .max()
            .unwrap_or(0)
    }

    /// Neighbour in direction `dir = 2 * axis + (0 for -, 1 for +)`.
    #[inline]
    pub fn step(&self, dir: usize) -> Self {
        let mut coords = self.coords;
        coords[dir >> 1] += if dir & 1 == 1 { 1 } else { -1 };
        Self { coords }
    }

    /// Direction index taking `self` to `other`, if they are neighbours.
    pub fn direction_to(&self, other: &Self) -> Option<usize> {
        let mut found = None;
        for axis in 0..D {
            match other.coords[axis] - self.coords[axis] {
                0 => {}
                1 if found.is_none() => found = Some(2 * axis + 1),
                -1 if found.is_none() => found = Some(2 * axis),
                _ => return None,
            }
        }
        found
    }

    pub fn is_neighbor(&self, other: &Self) -> bool {
        self.direction_to(other).is_some()
    }
}

impl<const D: usize> fmt::Debug for LatticePoint<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords)
    }
}

impl<const D: usize> Add for LatticePoint<D> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.coords.iter_mut().zip(rhs.coords) {
            *a += b;
        }
        self
    }
}

impl<const D: usize> Sub for LatticePoint<D> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for (a, b) in self.coords.iter_mut().zip(rhs.coords) {
            *a -= b;
        }
        self
    }
}

impl<const D: usize> Neg for LatticePoint<D> {
    type Output = Self;
    fn neg(mut self) -> Self {
        for a in self.coords.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl<const D: usize> Serialize for LatticePoint<D> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords.as_slice().serialize(serializer)
    }
}

impl<'de, const D: usize> Deserialize<'de> for LatticePoint<D> {
    fn deserialize<De: Deserializer<'de>>(deserializer: De) -> std::result::Result<Self, De::Error> {
        struct PointVisitor<const D: usize>;

        impl<'de, const D: usize> Visitor<'de> for PointVisitor<D> {
            type Value = LatticePoint<D>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "an array of {D} integers")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Self::Value, A::Error> {
                let mut coords = [0i32; D];
                for (i, c) in coords.iter_mut().enumerate() {
                    *c = seq
                        .next_element()?
                        .ok_or_else(|| de::Error::invalid_length(i, &self))?;
                }
                if seq.next_element::<i32>()?.is_some() {
                    return Err(de::Error::invalid_length(D + 1, &self));
                }
                Ok(LatticePoint::new(coords))
            }
        }

        deserializer.deserialize_seq(PointVisitor::<D>)
    }
}

/// All `2D` neighbours, coordinate-major, minus before plus; the position in
/// the returned list is the direction index.
pub fn neighbors<const D: usize>(p: &LatticePoint<D>) -> Vec<LatticePoint<D>> {
    (0..2 * D).map(|dir| p.step(dir)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Interior,
    Boundary,
    Outside,
}

/// Exact test of `q < r^2` for a finite positive `r`.
fn lt_square(q: u64, r: f64) -> bool {
    debug_assert!(r.is_finite() && r > 0.0);
    let bits = r.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, exp) = if exp_bits == 0 {
        (frac, -1074i64)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    };
    let mant_sq = u128::from(mant) * u128::from(mant);
    if exp >= 0 {
        let shift = 2 * exp;
        // r >= 2^52 here, so r^2 exceeds every u64 once the shift is large.
        if shift >= 22 {
            return true;
        }
        u128::from(q) < (mant_sq << shift)
    } else {
        if q == 0 {
            return true;
        }
        let k = (-2 * exp) as u32;
        let qbits = 64 - q.leading_zeros();
        if qbits + k > 128 {
            return false;
        }
        (u128::from(q) << k) < mant_sq
    }
}

fn isqrt(n: i64) -> i64 {
    if n <= 0 {
        return 0;
    }
    let mut x = (n as f64).sqrt() as i64;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// Euclidean ball `B(center, radius) = { p : |p - center| < radius }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallSpec<const D: usize = 4> {
    center: LatticePoint<D>,
    radius: f64,
    max_inside_sq: i64,
    surely_interior_sq: i64,
}

impl<const D: usize> BallSpec<D> {
    pub fn new(center: LatticePoint<D>, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Domain(format!("ball radius must be positive and finite, got {radius}")));
        }
        if radius > 1.0e9 {
            return Err(Error::Domain(format!("ball radius {radius} is beyond the lattice coordinate range")));
        }
        // Largest integer strictly below radius^2.
        let (mut lo, mut hi) = (0u64, (radius * radius).ceil() as u64 + 2);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if lt_square(mid, radius) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let max_inside_sq = lo as i64;
        // Largest q with q + 2 isqrt(q) + 1 <= M: every point at squared
        // distance <= q has all neighbours inside.
        let (mut lo, mut hi) = (-1i64, max_inside_sq + 1);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if mid + 2 * isqrt(mid) < max_inside_sq {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Self {
            center,
            radius,
            max_inside_sq,
            surely_interior_sq: lo,
        })
    }

    /// `B(radius)` around the origin.
    pub fn centered(radius: f64) -> Result<Self> {
        Self::new(LatticePoint::origin(), radius)
    }

    pub fn center(&self) -> LatticePoint<D> {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Largest squared distance from the center that is inside the ball.
    pub fn max_inside_sq(&self) -> i64 {
        self.max_inside_sq
    }

    /// Squared distances at or below this are interior without checking
    /// individual neighbours.
    pub fn surely_interior_sq(&self) -> i64 {
        self.surely_interior_sq
    }

    pub fn contains(&self, p: &LatticePoint<D>) -> bool {
        p.dist_sq(&self.center) <= self.max_inside_sq
    }

    /// Classification from the displacement `p - center`, given its squared
    /// norm. Hot loops track both incrementally.
    #[inline]
    pub fn classify_offset(&self, offset: &[i32; D], dist_sq: i64) -> Region {
        if dist_sq > self.max_inside_sq {
            Region::Outside
        } else if dist_sq <= self.surely_interior_sq {
            Region::Interior
        } else {
            let m = offset.iter().map(|&c| i64::from(c).abs()).max().unwrap_or(0);
            if dist_sq + 2 * m + 1 > self.max_inside_sq {
                Region::Boundary
            } else {
                Region::Interior
            }
        }
    }

    pub fn classify(&self, p: &LatticePoint<D>) -> Region {
        let offset = *(*p - self.center).coords();
        self.classify_offset(&offset, p.dist_sq(&self.center))
    }

    pub fn is_boundary(&self, p: &LatticePoint<D>) -> bool {
        self.classify(p) == Region::Boundary
    }

    /// Number of lattice points of the bounding box, a proxy for the cost of
    /// enumerating the ball.
    pub fn box_volume(&self) -> f64 {
        let side = 2.0 * isqrt(self.max_inside_sq) as f64 + 1.0;
        side.powi(D as i32)
    }

    /// The inner vertex boundary, in lexicographic order.
    pub fn enumerate_boundary(&self) -> Vec<LatticePoint<D>> {
        let mut out = Vec::new();
        let mut offset = [0i32; D];
        self.enumerate_rec(0, 0, &mut offset, &mut out);
        out
    }

    fn enumerate_rec(&self, axis: usize, partial: i64, offset: &mut [i32; D], out: &mut Vec<LatticePoint<D>>) {
        let reach = isqrt(self.max_inside_sq - partial) as i32;
        for c in -reach..=reach {
            offset[axis] = c;
            let sq = partial + i64::from(c) * i64::from(c);
            if axis + 1 == D {
                if self.classify_offset(offset, sq) == Region::Boundary {
                    out.push(LatticePoint::new(*offset) + self.center);
                }
            } else {
                self.enumerate_rec(axis + 1, sq, offset, out);
            }
        }
        offset[axis] = 0;
    }
}

/// Balls whose bounding box exceeds this many points are sampled by
/// rejection instead of enumeration.
pub const ENUMERATION_BOX_LIMIT: f64 = 3.0e8;

/// Uniform sampler on the inner vertex boundary of a ball.
#[derive(Debug, Clone)]
pub struct BoundarySampler<const D: usize = 4> {
    ball: BallSpec<D>,
    points: Option<Vec<LatticePoint<D>>>,
}

impl<const D: usize> BoundarySampler<D> {
    /// Enumerates the boundary when that is cheap, otherwise falls back to
    /// rejection sampling from the bounding box.
    pub fn new(ball: BallSpec<D>) -> Self {
        let points = (ball.box_volume() <= ENUMERATION_BOX_LIMIT).then(|| ball.enumerate_boundary());
        Self { ball, points }
    }

    pub fn rejection(ball: BallSpec<D>) -> Self {
        Self { ball, points: None }
    }

    pub fn ball(&self) -> &BallSpec<D> {
        &self.ball
    }

    pub fn points(&self) -> Option<&[LatticePoint<D>]> {
        self.points.as_deref()
    }

    pub fn sample(&self, rng: &mut RandomStream) -> LatticePoint<D> {
        match &self.points {
            Some(pts) => pts[rng.below(pts.len() as u64) as usize],
            None => {
                let reach = isqrt(self.ball.max_inside_sq);
                loop {
                    let mut coords = [0i32; D];
                    for c in coords.iter_mut() {
                        *c = rng.range_inclusive(-reach, reach) as i32;
                    }
                    let p = LatticePoint::new(coords) + self.ball.center;
                    if self.ball.is_boundary(&p) {
                        return p;
                    }
                }
            }
        }
    }

    /// Uniform boundary point `q` with `|q - anchor| > separation`, by
    /// rejection. Returns the point and the number of attempts used.
    pub fn sample_separated_from(
        &self,
        anchor: &LatticePoint<D>,
        separation: f64,
        rng: &mut RandomStream,
        budget: u64,
    ) -> Result<(LatticePoint<D>, u64)> {
        for attempt in 1..=budget {
            let q = self.sample(rng);
            if q.dist(anchor) > separation {
                return Ok((q, attempt));
            }
        }
        Err(Error::SeparationInfeasible {
            radius: self.ball.radius,
            separation,
            attempts: budget,
        })
    }

    /// Independent uniform pair conditioned on `|s1 - s2| > separation`.
    /// Returns the pair and the number of pair draws used.
    pub fn sample_separated_pair(
        &self,
        separation: f64,
        rng: &mut RandomStream,
        budget: u64,
    ) -> Result<((LatticePoint<D>, LatticePoint<D>), u64)> {
        // Both points lie strictly inside the ball, so they are closer than
        // the diameter.
        if separation >= 2.0 * self.ball.radius {
            return Err(Error::SeparationInfeasible {
                radius: self.ball.radius,
                separation,
                attempts: 0,
            });
        }
        for attempt in 1..=budget {
            let a = self.sample(rng);
            let b = self.sample(rng);
            if a.dist(&b) > separation {
                return Ok(((a, b), attempt));
            }
        }
        Err(Error::SeparationInfeasible {
            radius: self.ball.radius,
            separation,
            attempts: budget,
        })
    }
}

/// Default number of pair draws before declaring a separation infeasible.
pub const SEPARATION_BUDGET: u64 = 100_000;

/// Two points of `∂B(n)`, independent and uniform, conditioned on being more
/// than `separation` apart.
pub fn sample_separated_boundary_pair<const D: usize>(
    n: f64,
    separation: f64,
    rng: &mut RandomStream,
) -> Result<(LatticePoint<D>, LatticePoint<D>)> {
    let sampler = BoundarySampler::new(BallSpec::<D>::centered(n)?);
    sampler
        .sample_separated_pair(separation, rng, SEPARATION_BUDGET)
        .map(|(pair, _)| pair)
}

/// `log2 x`; every logarithm in the library is base 2.
pub fn log2(x: f64) -> f64 {
    x.log2()
}

/// Farthest-point ordering of `candidates`, starting from the first one.
/// Deterministic for a fixed candidate order.
pub fn farthest_point_order<const D: usize>(candidates: &[LatticePoint<D>], count: usize) -> Vec<LatticePoint<D>> {
    let mut chosen = Vec::with_capacity(count.min(candidates.len()));
    if candidates.is_empty() || count == 0 {
        return chosen;
    }
    let mut best = vec![i64::MAX; candidates.len()];
    let mut next = 0usize;
    while chosen.len() < count.min(candidates.len()) {
        let c = candidates[next];
        chosen.push(c);
        let mut far = (-1i64, 0usize);
        for (i, p) in candidates.iter().enumerate() {
            let d = p.dist_sq(&c);
            if d < best[i] {
                best[i] = d;
            }
            if best[i] > far.0 {
                far = (best[i], i);
            }
        }
        if far.0 <= 0 {
            break;
        }
        next = far.1;
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    type P4 = LatticePoint<4>;

    #[test]
    fn origin_has_eight_unit_neighbors() {
        let nb = neighbors(&P4::origin());
        assert_eq!(nb.len(), 8);
        for (dir, q) in nb.iter().enumerate() {
            assert_eq!(q.norm_sq(), 1);
            assert_eq!(P4::origin().direction_to(q), Some(dir));
        }
        assert_eq!(nb[0], P4::new([-1, 0, 0, 0]));
        assert_eq!(nb[1], P4::new([1, 0, 0, 0]));
        assert_eq!(nb[7], P4::new([0, 0, 0, 1]));
    }

    #[test]
    fn neighbors_of_e1_contain_origin_and_2e1() {
        let nb = neighbors(&P4::new([1, 0, 0, 0]));
        assert!(nb.contains(&P4::origin()));
        assert!(nb.contains(&P4::new([2, 0, 0, 0])));
    }

    #[test]
    fn origin_is_the_boundary_of_b1() {
        let b1 = BallSpec::<4>::centered(1.0).unwrap();
        assert_eq!(b1.classify(&P4::origin()), Region::Boundary);
        let b10 = BallSpec::<4>::centered(10.0).unwrap();
        assert_eq!(b10.classify(&P4::origin()), Region::Interior);
    }

    #[test]
    fn membership_is_strict_on_the_sphere() {
        for n in 1..20 {
            let ball = BallSpec::<4>::centered(f64::from(n)).unwrap();
            assert_eq!(ball.classify(&P4::on_axis(0, n)), Region::Outside);
            assert_eq!(ball.classify(&P4::on_axis(2, n - 1)), Region::Boundary);
        }
        // sqrt(2) rounds up in f64, but (1,1,0,0) is at distance exactly sqrt(2)
        // only if the rounded radius equals it; the exact test must agree with
        // the rational comparison 2 < r^2.
        let r = 2f64.sqrt();
        let ball = BallSpec::<4>::centered(r).unwrap();
        let inside = lt_square(2, r);
        assert_eq!(ball.contains(&P4::new([1, 1, 0, 0])), inside);
    }

    #[test]
    fn exact_square_comparison() {
        assert!(lt_square(0, 1e-300));
        assert!(!lt_square(1, 1e-300));
        assert!(lt_square(99, 10.0));
        assert!(!lt_square(100, 10.0));
        assert!(lt_square(u64::MAX, 1e12));
        assert!(lt_square(6, 2.5));
        assert!(!lt_square(7, 2.5));
    }

    #[test]
    fn classification_matches_set_computation_b5_d2() {
        let ball = BallSpec::<2>::centered(5.0).unwrap();
        let mut inside = HashSet::new();
        for x in -6..=6 {
            for y in -6..=6 {
                if x * x + y * y < 25 {
                    inside.insert(LatticePoint::new([x, y]));
                }
            }
        }
        for x in -7..=7 {
            for y in -7..=7 {
                let p = LatticePoint::new([x, y]);
                let expected = if !inside.contains(&p) {
                    Region::Outside
                } else if neighbors(&p).iter().any(|q| !inside.contains(q)) {
                    Region::Boundary
                } else {
                    Region::Interior
                };
                assert_eq!(ball.classify(&p), expected, "{p:?}");
            }
        }
        let enumerated: HashSet<_> = ball.enumerate_boundary().into_iter().collect();
        let direct: HashSet<_> = inside
            .iter()
            .copied()
            .filter(|p| neighbors(p).iter().any(|q| !inside.contains(q)))
            .collect();
        assert_eq!(enumerated, direct);
    }

    #[test]
    fn off_center_ball_boundary() {
        let c = P4::new([3, -2, 0, 1]);
        let ball = BallSpec::new(c, 4.5).unwrap();
        for p in ball.enumerate_boundary() {
            assert!(ball.contains(&p));
            assert!(neighbors(&p).iter().any(|q| !ball.contains(q)));
        }
    }

    #[test]
    fn separated_pair_on_boundary() {
        let mut rng = RandomStream::new(11, 0);
        let (a, b) = sample_separated_boundary_pair::<4>(10.0, 0.0, &mut rng).unwrap();
        let ball = BallSpec::<4>::centered(10.0).unwrap();
        assert!(ball.is_boundary(&a) && ball.is_boundary(&b));
        assert!(a.dist(&b) > 0.0);
    }

    #[test]
    fn separation_beyond_diameter_is_infeasible() {
        let mut rng = RandomStream::new(11, 0);
        let err = sample_separated_boundary_pair::<4>(10.0, 25.0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::SeparationInfeasible { .. }));
    }

    #[test]
    fn rejection_sampler_stays_on_boundary() {
        let ball = BallSpec::<4>::centered(7.3).unwrap();
        let sampler = BoundarySampler::rejection(ball);
        let mut rng = RandomStream::new(3, 1);
        for _ in 0..200 {
            assert!(ball.is_boundary(&sampler.sample(&mut rng)));
        }
    }

    #[test]
    fn farthest_points_are_spread() {
        let ball = BallSpec::<4>::centered(6.0).unwrap();
        let pts = ball.enumerate_boundary();
        let fps = farthest_point_order(&pts, 2);
        assert_eq!(fps.len(), 2);
        assert!(fps[0].dist(&fps[1]) > 9.0);
    }

    proptest! {
        #[test]
        fn neighbor_relation_is_symmetric(c in proptest::array::uniform4(-1000i32..1000), dir in 0usize..8) {
            let p = P4::new(c);
            let q = p.step(dir);
            prop_assert!(neighbors(&q).contains(&p));
            prop_assert_eq!(neighbors(&p).len(), 8);
        }

        #[test]
        fn boundary_points_have_an_outside_neighbor(c in proptest::array::uniform4(-12i32..12), r in 1.0f64..11.0) {
            let ball = BallSpec::<4>::centered(r).unwrap();
            let p = P4::new(c);
            match ball.classify(&p) {
                Region::Boundary => {
                    prop_assert!(ball.contains(&p));
                    prop_assert!(neighbors(&p).iter().any(|q| !ball.contains(q)));
                }
                Region::Interior => prop_assert!(neighbors(&p).iter().all(|q| ball.contains(q))),
                Region::Outside => prop_assert!(!ball.contains(&p)),
            }
        }

        #[test]
        fn norm_zero_iff_origin(c in proptest::array::uniform4(-5i32..5)) {
            let p = P4::new(c);
            prop_assert_eq!(p.norm() == 0.0, p == P4::origin());
        }
    }
}
