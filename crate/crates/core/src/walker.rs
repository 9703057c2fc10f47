//! Simple symmetric random walks on Z^d: stopped walks, fixed-length walks,
//! exhaustive path enumeration and path sets.

use num_rational::Ratio;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{log2, BallSpec, LatticePoint, Region};
pub use crate::rng::RandomStream;

/// Exact path weight.
pub type Weight = Ratio<u128>;

/// Set of visited vertices, kept sorted for merge-based intersections.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace<const D: usize = 4> {
    points: Vec<LatticePoint<D>>,
}

impl<const D: usize> Trace<D> {
    pub fn from_vertices<'a, I>(vertices: I) -> Self
    where
        I: IntoIterator<Item = &'a LatticePoint<D>>,
    {
        let mut points: Vec<_> = vertices.into_iter().copied().collect();
        if D <= 4 && points.iter().all(|p| p.coords().iter().all(|&x| (-LANE_BIAS..LANE_BIAS).contains(&i64::from(x)))) {
            let mut keys: Vec<u64> = points.iter().map(|p| lex_key(p.coords())).collect();
            keys.sort_unstable();
            keys.dedup();
            points = keys.into_iter().map(|k| LatticePoint::new(lex_unkey(k))).collect();
        } else {
            points.sort_unstable();
            points.dedup();
        }
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, p: &LatticePoint<D>) -> bool {
        self.points.binary_search(p).is_ok()
    }

    pub fn points(&self) -> &[LatticePoint<D>] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &LatticePoint<D>> {
        self.points.iter()
    }

    pub fn intersection(&self, other: &Self) -> Vec<LatticePoint<D>> {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.points.len() && j < other.points.len() {
            match self.points[i].cmp(&other.points[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(self.points[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.points.len() && j < other.points.len() {
            match self.points[i].cmp(&other.points[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }
}

/// A lattice path with its trace and optional stopping metadata.
///
/// When `stop_index` is set the trace covers `vertices[..=stop_index]` only;
/// anything after it is an extension kept for look-ahead statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkPath<const D: usize = 4> {
    vertices: Vec<LatticePoint<D>>,
    trace: Trace<D>,
    stop_index: Option<usize>,
}

impl<const D: usize> WalkPath<D> {
    /// Builds a path, stopping it at the first vertex on the inner boundary
    /// of `stop_ball` if one is given. Consecutive vertices must be
    /// neighbours.
    pub fn from_vertices(vertices: Vec<LatticePoint<D>>, stop_ball: Option<&BallSpec<D>>) -> Self {
        assert!(!vertices.is_empty(), "a path has at least its start vertex");
        debug_assert!(vertices.windows(2).all(|w| w[0].is_neighbor(&w[1])));
        let stop_index = stop_ball.and_then(|b| vertices.iter().position(|v| b.classify(v) == Region::Boundary));
        Self::with_stop(vertices, stop_index)
    }

    /// Builds a path with an explicit stop index.
    pub fn with_stop(vertices: Vec<LatticePoint<D>>, stop_index: Option<usize>) -> Self {
        let end = stop_index.map_or(vertices.len(), |s| s + 1);
        let trace = Trace::from_vertices(&vertices[..end]);
        Self {
            vertices,
            trace,
            stop_index,
        }
    }

    pub fn start(&self) -> LatticePoint<D> {
        self.vertices[0]
    }

    pub fn vertices(&self) -> &[LatticePoint<D>] {
        &self.vertices
    }

    pub fn trace(&self) -> &Trace<D> {
        &self.trace
    }

    pub fn stop_index(&self) -> Option<usize> {
        self.stop_index
    }

    /// `h(γ)`: the first boundary vertex, when the path stopped.
    pub fn hit_point(&self) -> Option<LatticePoint<D>> {
        self.stop_index.map(|s| self.vertices[s])
    }

    /// Number of steps stored, including any extension.
    pub fn steps_len(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Vertices up to and including the stop, or all of them.
    pub fn stopped_vertices(&self) -> &[LatticePoint<D>] {
        match self.stop_index {
            Some(s) => &self.vertices[..=s],
            None => &self.vertices,
        }
    }

    /// Steps stored past the stopping index.
    pub fn extension_len(&self) -> usize {
        self.stop_index.map_or(0, |s| self.vertices.len() - 1 - s)
    }

    pub fn directions(&self) -> Vec<usize> {
        self.vertices
            .windows(2)
            .map(|w| w[0].direction_to(&w[1]).expect("consecutive vertices are neighbours"))
            .collect()
    }

    /// The path seen from time `t` on, as an unstopped path.
    pub fn suffix_from(&self, t: usize) -> Self {
        Self::with_stop(self.vertices[t..].to_vec(), None)
    }

    pub fn to_record(&self) -> PathRecord<D> {
        PathRecord {
            start: self.start(),
            steps: self.directions().into_iter().map(|d| d as u8).collect(),
            stop_index: self.stop_index,
        }
    }

    pub fn from_record(record: &PathRecord<D>) -> Result<Self> {
        let mut vertices = Vec::with_capacity(record.steps.len() + 1);
        let mut p = record.start;
        vertices.push(p);
        for &dir in &record.steps {
            if usize::from(dir) >= 2 * D {
                return Err(Error::Domain(format!("direction index {dir} out of range for dimension {D}")));
            }
            p = p.step(usize::from(dir));
            vertices.push(p);
        }
        if let Some(s) = record.stop_index {
            if s >= vertices.len() {
                return Err(Error::Domain(format!("stop index {s} beyond path of {} vertices", vertices.len())));
            }
        }
        Ok(Self::with_stop(vertices, record.stop_index))
    }
}

/// One line of the path dump format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PathRecord<const D: usize = 4> {
    pub start: LatticePoint<D>,
    /// Direction indices `2 * axis + (0 for -, 1 for +)`.
    pub steps: Vec<u8>,
    pub stop_index: Option<usize>,
}

/// Serializes paths as JSON lines.
pub fn dump_paths<const D: usize>(paths: &[WalkPath<D>]) -> String {
    let mut out = String::new();
    for p in paths {
        out.push_str(&serde_json::to_string(&p.to_record()).expect("path records always serialize"));
        out.push('\n');
    }
    out
}

pub fn load_paths<const D: usize>(text: &str) -> Result<Vec<WalkPath<D>>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let rec: PathRecord<D> =
                serde_json::from_str(l).map_err(|e| Error::Domain(format!("bad path record: {e}")))?;
            WalkPath::from_record(&rec)
        })
        .collect()
}

const LANE_BIAS: i64 = 1 << 15;

/// Packs up to four coordinates into 16-bit offset-binary lanes. Every
/// coordinate must lie in `-32768..32768`.
#[inline(always)]
pub fn pack_coords<const D: usize>(c: &[i32; D]) -> u64 {
    debug_assert!(D <= 4);
    let mut k = 0u64;
    for (i, &x) in c.iter().enumerate() {
        debug_assert!((-LANE_BIAS..LANE_BIAS).contains(&i64::from(x)));
        k |= ((i64::from(x) + LANE_BIAS) as u64) << (16 * i);
    }
    k
}

/// Packing with the first coordinate in the highest lane, so that key order
/// is lexicographic order.
fn lex_key<const D: usize>(c: &[i32; D]) -> u64 {
    c.iter()
        .fold(0u64, |k, &x| (k << 16) | (i64::from(x) + LANE_BIAS) as u64)
}

fn lex_unkey<const D: usize>(mut k: u64) -> [i32; D] {
    let mut c = [0i32; D];
    for x in c.iter_mut().rev() {
        *x = ((k & 0xffff) as i64 - LANE_BIAS) as i32;
        k >>= 16;
    }
    c
}

#[inline(always)]
pub fn unpack_coords<const D: usize>(k: u64) -> [i32; D] {
    let mut c = [0i32; D];
    for (i, x) in c.iter_mut().enumerate() {
        *x = (((k >> (16 * i)) & 0xffff) as i64 - LANE_BIAS) as i32;
    }
    c
}

/// Position of a walker relative to a ball center, with its squared norm
/// tracked incrementally. This is the inner loop of every estimator.
///
/// The displacement lives in one packed word (see [`pack_coords`]), so
/// `D <= 4` and the walker must stay within 32767 of the center.
#[derive(Debug, Clone, Copy)]
pub struct Cursor<const D: usize> {
    packed: u64,
    pub dist_sq: i64,
}

const DELTAS: [u64; 8] = {
    let mut d = [0u64; 8];
    let mut dir = 0;
    while dir < 8 {
        let unit = 1u64 << (16 * (dir >> 1));
        d[dir] = if dir & 1 == 1 { unit } else { unit.wrapping_neg() };
        dir += 1;
    }
    d
};

impl<const D: usize> Cursor<D> {
    pub fn new(p: &LatticePoint<D>, center: &LatticePoint<D>) -> Self {
        assert!(D <= 4, "Cursor packs at most four coordinates");
        Self {
            packed: pack_coords((*p - *center).coords()),
            dist_sq: p.dist_sq(center),
        }
    }

    #[inline(always)]
    pub fn step(&mut self, dir: usize) {
        let shift = 16 * (dir >> 1);
        let c = ((self.packed >> shift) & 0xffff) as i64 - LANE_BIAS;
        // 2c + 1 for a plus step, 1 - 2c for a minus step.
        let sign = ((dir & 1) as i64) * 2 - 1;
        self.dist_sq += 2 * sign * c + 1;
        self.packed = self.packed.wrapping_add(DELTAS[dir]);
    }

    #[inline(always)]
    pub fn random_step(&mut self, rng: &mut RandomStream) {
        self.step(rng.direction(2 * D));
    }

    /// Packed displacement, the key used by [`TraceIndex`].
    #[inline(always)]
    pub fn key(&self) -> u64 {
        self.packed
    }

    pub fn offset(&self) -> [i32; D] {
        unpack_coords(self.packed)
    }

    /// Region of the current position in a ball with the same center.
    #[inline(always)]
    pub fn region(&self, ball: &BallSpec<D>) -> Region {
        if self.dist_sq <= ball.surely_interior_sq() {
            Region::Interior
        } else {
            ball.classify_offset(&self.offset(), self.dist_sq)
        }
    }

    pub fn point(&self, center: &LatticePoint<D>) -> LatticePoint<D> {
        LatticePoint::new(self.offset()) + *center
    }
}

const CELL_BITS: u32 = 20;
const CELL_MASK: u64 = 0x3fff_3fff_3fff_3fff;

/// Hash-set view of a trace for per-step membership queries, with a coarse
/// cell bitmap in front so that most misses never touch the set. Keys are
/// packed coordinates, matching [`Cursor::key`] for origin-centered cursors.
#[derive(Debug, Clone)]
pub struct TraceIndex<const D: usize = 4> {
    set: FxHashSet<u64>,
    cells: Vec<u64>,
}

#[inline(always)]
fn cell_slot(key: u64) -> usize {
    // 4^d blocks: drop the low two bits of every lane.
    let cell = (key >> 2) & CELL_MASK;
    (cell.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> (64 - CELL_BITS)) as usize
}

impl<const D: usize> TraceIndex<D> {
    pub fn new<'a, I>(points: I) -> Self
    where
        I: IntoIterator<Item = &'a LatticePoint<D>>,
    {
        assert!(D <= 4, "TraceIndex packs at most four coordinates");
        let mut set = FxHashSet::default();
        let mut cells = vec![0u64; 1 << (CELL_BITS - 6)];
        for p in points {
            let key = pack_coords(p.coords());
            set.insert(key);
            let s = cell_slot(key);
            cells[s >> 6] |= 1 << (s & 63);
        }
        Self { set, cells }
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    #[inline(always)]
    pub fn contains_key(&self, key: u64) -> bool {
        let s = cell_slot(key);
        self.cells[s >> 6] & (1 << (s & 63)) != 0 && self.set.contains(&key)
    }

    pub fn contains(&self, p: &LatticePoint<D>) -> bool {
        self.contains_key(pack_coords(p.coords()))
    }

    /// Removes `key` if present, returning whether it was. The cell bitmap
    /// keeps its bit, which only costs a little filtering power.
    pub fn take_key(&mut self, key: u64) -> bool {
        let s = cell_slot(key);
        self.cells[s >> 6] & (1 << (s & 63)) != 0 && self.set.remove(&key)
    }
}

/// Hard step cap for a walk stopped on `∂B(radius)`: `64 r^2 log2(r + 2)`.
pub fn default_step_cap(radius: f64) -> u64 {
    (64.0 * radius * radius * log2(radius + 2.0)).ceil().max(1024.0) as u64
}

/// Look-ahead stored past stopping by default: `4 sqrt(n)`.
pub fn default_extension(n: f64) -> usize {
    (4.0 * n.sqrt()).ceil() as usize
}

/// Walk from `start` until its first visit to `∂ball`, then `extension`
/// further steps that are stored but excluded from the trace.
pub fn walk_to_boundary<const D: usize>(
    start: LatticePoint<D>,
    ball: &BallSpec<D>,
    rng: &mut RandomStream,
    extension: usize,
) -> Result<WalkPath<D>> {
    walk_to_boundary_capped(start, ball, rng, extension, default_step_cap(ball.radius()))
}

pub fn walk_to_boundary_capped<const D: usize>(
    start: LatticePoint<D>,
    ball: &BallSpec<D>,
    rng: &mut RandomStream,
    extension: usize,
    cap: u64,
) -> Result<WalkPath<D>> {
    let center = ball.center();
    let mut cur = Cursor::new(&start, &center);
    match cur.region(ball) {
        Region::Outside => {
            return Err(Error::Domain(format!("start {start:?} is outside the stopping ball")));
        }
        Region::Boundary => {}
        Region::Interior => {}
    }
    let mut vertices = vec![start];
    let mut steps = 0u64;
    while cur.region(ball) != Region::Boundary {
        if steps >= cap {
            return Err(Error::HorizonExceeded { cap });
        }
        cur.random_step(rng);
        steps += 1;
        vertices.push(cur.point(&center));
    }
    let stop = vertices.len() - 1;
    for _ in 0..extension {
        cur.random_step(rng);
        vertices.push(cur.point(&center));
    }
    Ok(WalkPath::with_stop(vertices, Some(stop)))
}

/// Walk of at most `max_steps` steps stopped at the first visit to `∂ball`;
/// the stop index is unset when the boundary was not reached in time.
pub fn walk_to_boundary_within<const D: usize>(
    start: LatticePoint<D>,
    ball: &BallSpec<D>,
    rng: &mut RandomStream,
    max_steps: usize,
) -> WalkPath<D> {
    let center = ball.center();
    let mut cur = Cursor::new(&start, &center);
    let mut vertices = vec![start];
    let mut stop = None;
    loop {
        if cur.region(ball) == Region::Boundary {
            stop = Some(vertices.len() - 1);
            break;
        }
        if vertices.len() > max_steps {
            break;
        }
        cur.random_step(rng);
        vertices.push(cur.point(&center));
    }
    WalkPath::with_stop(vertices, stop)
}

/// Exactly `steps` steps from `start`; stopping metadata records the first
/// visit to `∂ball` if a ball is supplied.
pub fn walk_fixed_length<const D: usize>(
    start: LatticePoint<D>,
    steps: usize,
    rng: &mut RandomStream,
    stop_ball: Option<&BallSpec<D>>,
) -> WalkPath<D> {
    let mut vertices = Vec::with_capacity(steps + 1);
    let mut p = start;
    vertices.push(p);
    for _ in 0..steps {
        p = p.step(rng.direction(2 * D));
        vertices.push(p);
    }
    WalkPath::from_vertices(vertices, stop_ball)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathSetMode {
    /// All `(2d)^T` paths, each of weight `(2d)^-T`.
    Exact,
    /// `N` i.i.d. paths, each of weight `1/N`.
    Empirical,
}

/// A walker's law over paths, as a finite uniform-weight collection.
#[derive(Debug, Clone)]
pub struct PathSet<const D: usize = 4> {
    mode: PathSetMode,
    paths: Vec<WalkPath<D>>,
    unit_weight: Weight,
    horizon: usize,
}

impl<const D: usize> PathSet<D> {
    pub fn empirical(paths: Vec<WalkPath<D>>, horizon: usize) -> Self {
        assert!(!paths.is_empty(), "an empirical path set needs at least one path");
        let unit_weight = Weight::new(1, paths.len() as u128);
        Self {
            mode: PathSetMode::Empirical,
            paths,
            unit_weight,
            horizon,
        }
    }

    pub fn mode(&self) -> PathSetMode {
        self.mode
    }

    pub fn paths(&self) -> &[WalkPath<D>] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Weight of every path.
    pub fn unit_weight(&self) -> Weight {
        self.unit_weight
    }

    pub fn weight(&self, _index: usize) -> Weight {
        self.unit_weight
    }

    pub fn total_weight(&self) -> Weight {
        self.unit_weight * Weight::from(self.paths.len() as u128)
    }

    /// The step horizon `T`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Fraction of paths that reached their stopping boundary.
    pub fn coverage(&self) -> f64 {
        self.paths.iter().filter(|p| p.stop_index().is_some()).count() as f64 / self.paths.len() as f64
    }
}

/// Default cap on the number of enumerated paths: `2^24`.
pub const ENUMERATION_BUDGET: u128 = 1 << 24;

/// Every `(2d)^T` path from `start`, in lexicographic order of direction
/// sequences, each of weight `(2d)^-T`. Stopping metadata refers to
/// `stop_ball` when supplied.
pub fn enumerate_paths<const D: usize>(
    start: LatticePoint<D>,
    steps: usize,
    stop_ball: Option<&BallSpec<D>>,
    budget: u128,
) -> Result<PathSet<D>> {
    let branching = (2 * D) as u128;
    let count = (0..steps).try_fold(1u128, |acc, _| acc.checked_mul(branching));
    let count = match count {
        Some(c) if c <= budget => c,
        other => {
            return Err(Error::BudgetExceeded {
                what: "path enumeration",
                needed: other.unwrap_or(u128::MAX),
                budget,
            })
        }
    };
    let mut paths = Vec::with_capacity(count as usize);
    let mut digits = vec![0usize; steps];
    for _ in 0..count {
        let mut vertices = Vec::with_capacity(steps + 1);
        let mut p = start;
        vertices.push(p);
        for &d in &digits {
            p = p.step(d);
            vertices.push(p);
        }
        paths.push(WalkPath::from_vertices(vertices, stop_ball));
        // Odometer increment, last step fastest.
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < 2 * D {
                break;
            }
            *d = 0;
        }
    }
    Ok(PathSet {
        mode: PathSetMode::Exact,
        paths,
        unit_weight: Weight::new(1, count),
        horizon: steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    type P4 = LatticePoint<4>;

    #[test]
    fn start_on_boundary_stops_immediately() {
        let ball = BallSpec::<4>::centered(1.0).unwrap();
        let mut rng = RandomStream::new(1, 0);
        let w = walk_to_boundary(P4::origin(), &ball, &mut rng, 0).unwrap();
        assert_eq!(w.stop_index(), Some(0));
        assert_eq!(w.steps_len(), 0);
        assert_eq!(w.trace().points(), &[P4::origin()]);
        assert_eq!(w.hit_point(), Some(P4::origin()));
    }

    #[test]
    fn extension_is_stored_but_not_traced() {
        let ball = BallSpec::<4>::centered(6.0).unwrap();
        let mut a = RandomStream::new(9, 2);
        let mut b = RandomStream::new(9, 2);
        let plain = walk_to_boundary(P4::origin(), &ball, &mut a, 0).unwrap();
        let ext = walk_to_boundary(P4::origin(), &ball, &mut b, 5).unwrap();
        let s = ext.stop_index().unwrap();
        assert_eq!(ext.vertices().len(), s + 6);
        assert_eq!(ext.extension_len(), 5);
        assert_eq!(plain.trace(), ext.trace());
        assert_eq!(plain.stop_index(), ext.stop_index());
    }

    #[test]
    fn stopped_walk_invariants() {
        let ball = BallSpec::<4>::centered(9.5).unwrap();
        for i in 0..50 {
            let mut rng = RandomStream::new(4, i);
            let w = walk_to_boundary(P4::origin(), &ball, &mut rng, 3).unwrap();
            let s = w.stop_index().unwrap();
            assert!(ball.is_boundary(&w.hit_point().unwrap()));
            assert!(w.vertices()[..s].iter().all(|v| !ball.is_boundary(v)));
            assert!(w.vertices().windows(2).all(|p| p[0].is_neighbor(&p[1])));
            assert_eq!(*w.trace(), Trace::from_vertices(&w.vertices()[..=s]));
        }
    }

    #[test]
    fn cap_hit_is_an_error() {
        let ball = BallSpec::<4>::centered(50.0).unwrap();
        let mut rng = RandomStream::new(0, 0);
        let err = walk_to_boundary_capped(P4::origin(), &ball, &mut rng, 0, 10).unwrap_err();
        assert_eq!(err, Error::HorizonExceeded { cap: 10 });
    }

    #[test]
    fn start_outside_is_rejected() {
        let ball = BallSpec::<4>::centered(3.0).unwrap();
        let mut rng = RandomStream::new(0, 0);
        assert!(walk_to_boundary(P4::on_axis(0, 5), &ball, &mut rng, 0).is_err());
    }

    #[test]
    fn zero_length_walk() {
        let mut rng = RandomStream::new(0, 0);
        let w = walk_fixed_length(P4::origin(), 0, &mut rng, None);
        assert_eq!(w.vertices().len(), 1);
        assert_eq!(w.trace().len(), 1);
    }

    #[test]
    fn two_step_return_probability_is_one_eighth() {
        let set = enumerate_paths(P4::origin(), 2, None, ENUMERATION_BUDGET).unwrap();
        assert_eq!(set.len(), 64);
        let returns = set.paths().iter().filter(|p| p.vertices()[2] == P4::origin()).count();
        assert_eq!(Weight::new(returns as u128, 64), Weight::new(1, 8));
    }

    #[test]
    fn three_step_trace_sizes() {
        // Odd-time returns are impossible, so |trace| counts distinct
        // vertices among 4 positions with at most one repeat (time 2 = time 0).
        let set = enumerate_paths(P4::origin(), 3, None, ENUMERATION_BUDGET).unwrap();
        let mut sizes = BTreeMap::new();
        for p in set.paths() {
            *sizes.entry(p.trace().len()).or_insert(0usize) += 1;
        }
        assert!(sizes.keys().all(|&k| (2..=4).contains(&k)));
        // Brute force over the 512 direction triples.
        let mut brute = BTreeMap::new();
        for a in 0..8 {
            for b in 0..8 {
                for c in 0..8 {
                    let v0 = P4::origin();
                    let v1 = v0.step(a);
                    let v2 = v1.step(b);
                    let v3 = v2.step(c);
                    let mut t = vec![v0, v1, v2, v3];
                    t.sort();
                    t.dedup();
                    *brute.entry(t.len()).or_insert(0usize) += 1;
                }
            }
        }
        assert_eq!(sizes, brute);
    }

    #[test]
    fn enumeration_weights_are_normalized() {
        let one = enumerate_paths(P4::origin(), 1, None, ENUMERATION_BUDGET).unwrap();
        assert_eq!(one.len(), 8);
        assert_eq!(one.unit_weight(), Weight::new(1, 8));
        let three = enumerate_paths(P4::origin(), 3, None, ENUMERATION_BUDGET).unwrap();
        assert_eq!(three.len(), 512);
        assert_eq!(three.total_weight(), Weight::from(1));
    }

    #[test]
    fn enumeration_budget() {
        let err = enumerate_paths(P4::origin(), 9, None, 1 << 24).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn two_step_endpoints_match_kernel_convolution_d2() {
        let set = enumerate_paths(LatticePoint::<2>::origin(), 2, None, ENUMERATION_BUDGET).unwrap();
        assert_eq!(set.len(), 16);
        let mut endpoints: BTreeMap<LatticePoint<2>, u32> = BTreeMap::new();
        for p in set.paths() {
            *endpoints.entry(*p.vertices().last().unwrap()).or_default() += 1;
        }
        // Convolve the one-step kernel with itself on a 5x5 grid.
        let mut k1 = [[0u32; 5]; 5];
        for (dx, dy) in [(-1i32, 0i32), (1, 0), (0, -1), (0, 1)] {
            k1[(dx + 2) as usize][(dy + 2) as usize] = 1;
        }
        let mut k2 = [[0u32; 5]; 5];
        for x in 0..5 {
            for y in 0..5 {
                for a in 0..5 {
                    for b in 0..5 {
                        let (u, v) = (x as i32 - a as i32 + 2, y as i32 - b as i32 + 2);
                        if (0..5).contains(&u) && (0..5).contains(&v) {
                            k2[x][y] += k1[a][b] * k1[u as usize][v as usize];
                        }
                    }
                }
            }
        }
        for x in 0..5 {
            for y in 0..5 {
                let p = LatticePoint::new([x as i32 - 2, y as i32 - 2]);
                assert_eq!(endpoints.get(&p).copied().unwrap_or(0), k2[x][y], "{p:?}");
            }
        }
    }

    #[test]
    fn fixed_length_stop_metadata() {
        let ball = BallSpec::<4>::centered(2.0).unwrap();
        let set = enumerate_paths(P4::origin(), 2, Some(&ball), ENUMERATION_BUDGET).unwrap();
        for p in set.paths() {
            let first = p.vertices().iter().position(|v| ball.is_boundary(v));
            assert_eq!(p.stop_index(), first);
        }
    }

    #[test]
    fn step_directions_are_uniform() {
        let mut rng = RandomStream::new(2024, 0);
        let n = 1_000_000usize;
        let mut counts = [0usize; 8];
        for _ in 0..n {
            counts[rng.direction(8)] += 1;
        }
        let p = 1.0 / 8.0;
        let se = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 4.0 * se, "{counts:?}");
        }
    }

    #[test]
    fn dump_format_round_trip() {
        let ball = BallSpec::<4>::centered(4.0).unwrap();
        let mut rng = RandomStream::new(5, 5);
        let paths: Vec<_> = (0..3)
            .map(|_| walk_to_boundary(P4::new([1, 0, 0, 0]), &ball, &mut rng, 2).unwrap())
            .collect();
        let text = dump_paths(&paths);
        assert!(text.lines().next().unwrap().starts_with("{\"start\":[1,0,0,0],\"steps\":["));
        let back: Vec<WalkPath<4>> = load_paths(&text).unwrap();
        assert_eq!(back, paths);
    }

    #[test]
    fn trace_index_membership() {
        let pts = [P4::new([0, 0, 0, 0]), P4::new([-5, 3, 0, 100]), P4::new([7, -7, 7, -7])];
        let mut idx = TraceIndex::new(pts.iter());
        for p in &pts {
            assert!(idx.contains(p));
        }
        assert!(!idx.contains(&P4::new([1, 0, 0, 0])));
        assert!(idx.take_key(pack_coords(pts[1].coords())));
        assert!(!idx.contains(&pts[1]));
        assert_eq!(idx.len(), 2);
    }

    proptest! {
        #[test]
        fn walks_are_deterministic(seed in any::<u64>(), stream in 0u64..1000) {
            let ball = BallSpec::<4>::centered(5.0).unwrap();
            let a = walk_to_boundary(P4::origin(), &ball, &mut RandomStream::new(seed, stream), 4).unwrap();
            let b = walk_to_boundary(P4::origin(), &ball, &mut RandomStream::new(seed, stream), 4).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn cursor_tracks_position(seed in any::<u64>(), len in 0usize..300) {
            let center = P4::new([3, -2, 0, 1]);
            let start = P4::new([5, 0, -1, 1]);
            let mut rng = RandomStream::new(seed, 1);
            let mut cur = Cursor::new(&start, &center);
            let mut p = start;
            for _ in 0..len {
                let d = rng.direction(8);
                cur.step(d);
                p = p.step(d);
                prop_assert_eq!(cur.point(&center), p);
                prop_assert_eq!(cur.dist_sq, p.dist_sq(&center));
            }
            prop_assert_eq!(unpack_coords::<4>(cur.key()), *(p - center).coords());
        }

        #[test]
        fn records_round_trip(seed in any::<u64>(), len in 0usize..40) {
            let mut rng = RandomStream::new(seed, 0);
            let ball = BallSpec::<4>::centered(3.0).unwrap();
            let w = walk_fixed_length(P4::origin(), len, &mut rng, Some(&ball));
            prop_assert_eq!(WalkPath::from_record(&w.to_record()).unwrap(), w);
        }
    }
}
