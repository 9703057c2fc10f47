//! Path sets, the disjointness graph and the single coupling step.

use fixedbitset::FixedBitSet;
use log::warn;
use num_traits::One;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::bipartite::{hall_check, max_matching, BipartiteGraph, HallOutcome};
use super::table::CouplingTable;
use crate::error::{Error, Result};
use crate::estimators::Estimate;
use crate::lattice::{log2, BallSpec, LatticePoint};
use crate::par::replicate;
use crate::rng::RandomStream;
use crate::walker::{enumerate_paths, walk_to_boundary_within, PathSet, PathSetMode, Trace, WalkPath, Weight, ENUMERATION_BUDGET};

/// A named property of a single path. Paths for which it fails are removed
/// from the path set before matching.
pub struct PathEvent<'a, const D: usize> {
    name: String,
    holds: Box<dyn Fn(&WalkPath<D>) -> bool + Send + Sync + 'a>,
}

impl<'a, const D: usize> PathEvent<'a, D> {
    pub fn new<F>(name: impl Into<String>, holds: F) -> Self
    where
        F: Fn(&WalkPath<D>) -> bool + Send + Sync + 'a,
    {
        Self {
            name: name.into(),
            holds: Box::new(holds),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn holds(&self, path: &WalkPath<D>) -> bool {
        (self.holds)(path)
    }
}

/// Events required of the left and right walkers.
pub struct EventSpecs<'a, const D: usize> {
    pub left: Vec<PathEvent<'a, D>>,
    pub right: Vec<PathEvent<'a, D>>,
}

impl<const D: usize> Default for EventSpecs<'_, D> {
    fn default() -> Self {
        Self {
            left: Vec::new(),
            right: Vec::new(),
        }
    }
}

/// Removal of paths that the opposite walker hits with high probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HittabilityFilter {
    Disabled,
    /// Remove paths hit with probability above this value.
    Threshold(f64),
    /// Remove paths hit with probability above `1 - scale * μ̂`.
    FromMu { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSource {
    /// Every path of length `T`.
    Exact { budget: u128 },
    /// `paths` independent walks per side, each stopped at `∂B(m)` or after
    /// `T` steps.
    Sampled { paths: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub source: PathSource,
    /// The horizon `T`.
    pub horizon: usize,
    /// Endpoint separation; `m / log2 m` when unset. Clamped to 0.9 times the
    /// diameter of `∂B(m)`.
    pub separation: Option<f64>,
    pub hittability: HittabilityFilter,
    /// Fresh opposite walks for hit probabilities. When unset the opposite
    /// path set itself is used, which is exact in exact mode.
    pub hittability_walks: Option<usize>,
    /// Largest fraction of the mass a single filter may remove.
    pub degenerate_limit: f64,
}

impl StepConfig {
    pub fn exact(horizon: usize) -> Self {
        Self {
            source: PathSource::Exact {
                budget: ENUMERATION_BUDGET,
            },
            horizon,
            separation: None,
            hittability: HittabilityFilter::Disabled,
            hittability_walks: None,
            degenerate_limit: 0.9,
        }
    }

    pub fn sampled(paths: usize, horizon: usize) -> Self {
        Self {
            source: PathSource::Sampled { paths },
            ..Self::exact(horizon)
        }
    }
}

/// `m / log2 m`.
pub fn default_separation(m: f64) -> f64 {
    m / log2(m)
}

/// Clamps `separation` to 0.9 times the diameter of `∂B(m)`, with a warning
/// when the clamp applies.
pub fn clamp_separation<const D: usize>(separation: f64, ball: &BallSpec<D>) -> (f64, Option<String>) {
    let limit = 0.9 * 2.0 * (ball.max_inside_sq() as f64).sqrt();
    if separation > limit {
        let msg = format!(
            "separation {separation:.3} exceeds 0.9 x diameter of the boundary of B({}); clamped to {limit:.3}",
            ball.radius()
        );
        (limit, Some(msg))
    } else {
        (separation, None)
    }
}

fn separated<const D: usize>(a: &LatticePoint<D>, b: &LatticePoint<D>, separation: f64) -> bool {
    a.dist(b) > separation
}

/// For each lattice point, the set of paths whose trace contains it, stored
/// as one row of a flat bit table.
struct PointIndex<const D: usize> {
    len: usize,
    words: usize,
    slots: FxHashMap<LatticePoint<D>, usize>,
    table: Vec<u64>,
}

impl<const D: usize> PointIndex<D> {
    fn new(paths: &[WalkPath<D>]) -> Self {
        let words = paths.len().div_ceil(64);
        let mut slots: FxHashMap<LatticePoint<D>, usize> = FxHashMap::default();
        let mut table = Vec::new();
        for (j, p) in paths.iter().enumerate() {
            for v in p.trace().iter() {
                let next = slots.len();
                let slot = *slots.entry(*v).or_insert(next);
                if slot == next {
                    table.resize(table.len() + words, 0);
                }
                table[slot * words + j / 64] |= 1 << (j % 64);
            }
        }
        Self {
            len: paths.len(),
            words,
            slots,
            table,
        }
    }

    /// Paths meeting `trace`.
    fn meeting(&self, trace: &Trace<D>) -> FixedBitSet {
        let mut acc = vec![0u64; self.words];
        for v in trace.iter() {
            if let Some(&slot) = self.slots.get(v) {
                for (a, w) in acc.iter_mut().zip(&self.table[slot * self.words..(slot + 1) * self.words]) {
                    *a |= w;
                }
            }
        }
        let mut out = FixedBitSet::with_capacity(self.len);
        for (k, &w) in acc.iter().enumerate() {
            let mut w = w;
            while w != 0 {
                out.insert(k * 64 + w.trailing_zeros() as usize);
                w &= w - 1;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRemoval {
    pub filter: String,
    pub removed: usize,
    /// Removed mass as a fraction of the whole path set.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideReport {
    pub paths: usize,
    /// Fraction of paths that reached `∂B(m)` within the horizon.
    pub coverage: f64,
    pub removals: Vec<FilterRemoval>,
    /// Paths satisfying every event (`A'`).
    pub good: usize,
    /// Paths that also passed the hittability filter (`A`).
    pub kept: usize,
}

impl SideReport {
    /// Mass of the path set outside `A`.
    pub fn filtered_mass(&self) -> f64 {
        1.0 - self.kept as f64 / self.paths as f64
    }
}

/// Both walkers' path sets with the event and hittability filters applied.
/// The sets keep every path, so the coupling can be checked against the full
/// laws; `*_good` marks `A'` and `*_kept` marks `A`.
#[derive(Debug, Clone)]
pub struct PathSetPair<const D: usize> {
    pub left: PathSet<D>,
    pub right: PathSet<D>,
    pub left_good: FixedBitSet,
    pub right_good: FixedBitSet,
    pub left_kept: FixedBitSet,
    pub right_kept: FixedBitSet,
    pub left_report: SideReport,
    pub right_report: SideReport,
    /// `P(E1 fails) + P(E2 fails) + 1/log2 n`, measured on the sets.
    pub mu_hat: f64,
    pub m: f64,
    pub separation: f64,
    pub warnings: Vec<String>,
}

impl<const D: usize> PathSetPair<D> {
    /// Whether the pair meets every event, has disjoint stopped traces and
    /// separated endpoints.
    pub fn pair_succeeds(&self, i: usize, j: usize) -> bool {
        self.left_good.contains(i)
            && self.right_good.contains(j)
            && adjacent(&self.left.paths()[i], &self.right.paths()[j], self.separation)
    }
}

/// The adjacency predicate: stopped traces disjoint and hitting points more
/// than `separation` apart.
pub fn adjacent<const D: usize>(a: &WalkPath<D>, b: &WalkPath<D>, separation: f64) -> bool {
    match (a.hit_point(), b.hit_point()) {
        (Some(ha), Some(hb)) => separated(&ha, &hb, separation) && a.trace().is_disjoint(b.trace()),
        _ => false,
    }
}

fn generate_side<const D: usize>(
    start: LatticePoint<D>,
    ball: &BallSpec<D>,
    config: &StepConfig,
    rng: &RandomStream,
) -> Result<PathSet<D>> {
    match config.source {
        PathSource::Exact { budget } => enumerate_paths(start, config.horizon, Some(ball), budget),
        PathSource::Sampled { paths } => {
            if paths == 0 {
                return Err(Error::Domain("sampled path sets need at least one path".into()));
            }
            let walks = replicate(rng, paths as u64, |_, r| walk_to_boundary_within(start, ball, r, config.horizon));
            Ok(PathSet::empirical(walks, config.horizon))
        }
    }
}

fn apply_filter<F>(
    name: &str,
    mask: &mut FixedBitSet,
    total: usize,
    limit: f64,
    removals: &mut Vec<FilterRemoval>,
    keep: F,
) -> Result<()>
where
    F: Fn(usize) -> bool + Sync,
{
    let drop: Vec<usize> = mask.ones().collect::<Vec<_>>().into_par_iter().filter(|&i| !keep(i)).collect();
    for &i in &drop {
        mask.set(i, false);
    }
    let fraction = drop.len() as f64 / total as f64;
    removals.push(FilterRemoval {
        filter: name.to_string(),
        removed: drop.len(),
        fraction,
    });
    if fraction > limit {
        return Err(Error::DegenerateFilter {
            filter: name.to_string(),
            removed_fraction: fraction,
        });
    }
    Ok(())
}

fn event_mask<const D: usize>(
    set: &PathSet<D>,
    events: &[PathEvent<'_, D>],
    limit: f64,
    removals: &mut Vec<FilterRemoval>,
) -> Result<FixedBitSet> {
    let mut mask = FixedBitSet::with_capacity(set.len());
    mask.insert_range(..);
    let paths = set.paths();
    apply_filter("reached boundary", &mut mask, set.len(), limit, removals, |i| {
        paths[i].hit_point().is_some()
    })?;
    for e in events {
        apply_filter(e.name(), &mut mask, set.len(), limit, removals, |i| e.holds(&paths[i]))?;
    }
    Ok(mask)
}

/// Builds both path sets of a coupling step from `s1` and `s2` to `∂B(m)`,
/// with `n` the radius the starts lie on (it enters `μ̂` through
/// `1/log2 n`). Every filter is recorded; one that removes more than
/// `config.degenerate_limit` of a side is an error.
pub fn build_path_sets<const D: usize>(
    s1: LatticePoint<D>,
    s2: LatticePoint<D>,
    n: f64,
    m: f64,
    events: &EventSpecs<'_, D>,
    config: &StepConfig,
    rng: &RandomStream,
) -> Result<PathSetPair<D>> {
    if !(n > 1.0) {
        return Err(Error::Domain(format!("inner radius must exceed 1, got {n}")));
    }
    let ball = BallSpec::<D>::centered(m)?;
    for s in [s1, s2] {
        if !ball.contains(&s) {
            return Err(Error::Domain(format!("start {s:?} is outside B({m})")));
        }
    }
    let mut warnings = Vec::new();
    let (separation, clamp) = clamp_separation(config.separation.unwrap_or_else(|| default_separation(m)), &ball);
    if let Some(msg) = clamp {
        warn!("{msg}");
        warnings.push(msg);
    }
    if s1.dist(&s2) <= default_separation(n) {
        warnings.push(format!(
            "starts are {:.3} apart, not more than n / log2 n = {:.3}",
            s1.dist(&s2),
            default_separation(n)
        ));
    }
    let left = generate_side(s1, &ball, config, &rng.fork("left"))?;
    let right = generate_side(s2, &ball, config, &rng.fork("right"))?;
    if left.unit_weight() != right.unit_weight() {
        return Err(Error::Domain("both sides need the same number of paths".into()));
    }
    let limit = config.degenerate_limit;
    let mut left_removals = Vec::new();
    let mut right_removals = Vec::new();
    let left_good = event_mask(&left, &events.left, limit, &mut left_removals)?;
    let right_good = event_mask(&right, &events.right, limit, &mut right_removals)?;
    let fail = |mask: &FixedBitSet, len: usize| 1.0 - mask.count_ones(..) as f64 / len as f64;
    let mu_hat = fail(&left_good, left.len()) + fail(&right_good, right.len()) + 1.0 / log2(n);

    let threshold = match config.hittability {
        HittabilityFilter::Disabled => None,
        HittabilityFilter::Threshold(t) => Some(t),
        HittabilityFilter::FromMu { scale } => Some(1.0 - scale * mu_hat),
    };
    let mut left_kept = left_good.clone();
    let mut right_kept = right_good.clone();
    if let Some(threshold) = threshold {
        let opposite = |start: LatticePoint<D>, set: &PathSet<D>, tag: &str| -> PointIndex<D> {
            match config.hittability_walks {
                None => PointIndex::new(set.paths()),
                Some(b) => {
                    let walks = replicate(&rng.fork(tag), b as u64, |_, r| {
                        walk_to_boundary_within(start, &ball, r, config.horizon)
                    });
                    PointIndex::new(&walks)
                }
            }
        };
        let name = format!("hittable above {threshold:.4}");
        let from_right = opposite(s2, &right, "hit-right");
        apply_filter(&name, &mut left_kept, left.len(), limit, &mut left_removals, |i| {
            let p = from_right.meeting(left.paths()[i].trace()).count_ones(..) as f64 / from_right.len as f64;
            p <= threshold
        })?;
        let from_left = opposite(s1, &left, "hit-left");
        apply_filter(&name, &mut right_kept, right.len(), limit, &mut right_removals, |j| {
            let p = from_left.meeting(right.paths()[j].trace()).count_ones(..) as f64 / from_left.len as f64;
            p <= threshold
        })?;
    }

    let report = |set: &PathSet<D>, good: &FixedBitSet, kept: &FixedBitSet, removals: Vec<FilterRemoval>| SideReport {
        paths: set.len(),
        coverage: set.coverage(),
        removals,
        good: good.count_ones(..),
        kept: kept.count_ones(..),
    };
    Ok(PathSetPair {
        left_report: report(&left, &left_good, &left_kept, left_removals),
        right_report: report(&right, &right_good, &right_kept, right_removals),
        left,
        right,
        left_good,
        right_good,
        left_kept,
        right_kept,
        mu_hat,
        m,
        separation,
        warnings,
    })
}

/// The bipartite graph between two path sets: `γ ~ δ` when both are active,
/// their stopped traces are disjoint and their hitting points are more than
/// `separation` apart. Adjacency is cached as one bitset per left path.
pub struct BipartiteInstance<'p, const D: usize> {
    left: &'p PathSet<D>,
    right: &'p PathSet<D>,
    separation: f64,
    left_active: FixedBitSet,
    right_active: FixedBitSet,
    rows: Vec<FixedBitSet>,
}

impl<'p, const D: usize> BipartiteInstance<'p, D> {
    pub fn new(
        left: &'p PathSet<D>,
        right: &'p PathSet<D>,
        separation: f64,
        left_active: FixedBitSet,
        right_active: FixedBitSet,
    ) -> Self {
        let index = PointIndex::new(right.paths());
        let right_hits: Vec<Option<LatticePoint<D>>> = right.paths().iter().map(|p| p.hit_point()).collect();
        let rows = (0..left.len())
            .into_par_iter()
            .map(|i| {
                let mut row = FixedBitSet::with_capacity(right.len());
                let path = &left.paths()[i];
                let Some(h) = path.hit_point() else { return row };
                if !left_active.contains(i) {
                    return row;
                }
                let blocked = index.meeting(path.trace());
                for j in right_active.ones() {
                    if blocked.contains(j) {
                        continue;
                    }
                    if let Some(hj) = right_hits[j] {
                        if separated(&h, &hj, separation) {
                            row.insert(j);
                        }
                    }
                }
                row
            })
            .collect();
        Self {
            left,
            right,
            separation,
            left_active,
            right_active,
            rows,
        }
    }

    /// Instance over whole path sets.
    pub fn full(left: &'p PathSet<D>, right: &'p PathSet<D>, separation: f64) -> Self {
        let mut l = FixedBitSet::with_capacity(left.len());
        l.insert_range(..);
        let mut r = FixedBitSet::with_capacity(right.len());
        r.insert_range(..);
        Self::new(left, right, separation, l, r)
    }

    pub fn separation(&self) -> f64 {
        self.separation
    }

    /// Cached adjacency.
    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.rows[i].contains(j)
    }

    /// Adjacency recomputed from the paths.
    pub fn recompute(&self, i: usize, j: usize) -> bool {
        self.left_active.contains(i)
            && self.right_active.contains(j)
            && adjacent(&self.left.paths()[i], &self.right.paths()[j], self.separation)
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones(..)).sum()
    }

    /// The graph restricted to the given subsets, with the original indices
    /// of its left and right vertices.
    pub fn graph_on(&self, left: &FixedBitSet, right: &FixedBitSet) -> (BipartiteGraph, Vec<usize>, Vec<usize>) {
        let left_ids: Vec<usize> = left.ones().filter(|&i| self.left_active.contains(i)).collect();
        let right_ids: Vec<usize> = right.ones().filter(|&j| self.right_active.contains(j)).collect();
        let mut position = vec![usize::MAX; self.right.len()];
        for (k, &j) in right_ids.iter().enumerate() {
            position[j] = k;
        }
        let rows = left_ids
            .iter()
            .map(|&i| {
                let mut row = FixedBitSet::with_capacity(right_ids.len());
                for j in self.rows[i].ones() {
                    if position[j] != usize::MAX {
                        row.insert(position[j]);
                    }
                }
                row
            })
            .collect();
        (BipartiteGraph::from_rows(right_ids.len(), rows), left_ids, right_ids)
    }

    /// The graph on the active paths.
    pub fn graph(&self) -> (BipartiteGraph, Vec<usize>, Vec<usize>) {
        self.graph_on(&self.left_active, &self.right_active)
    }
}

/// Hall's condition for the smaller side of the kept sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallReport {
    /// `"left"` or `"right"`: the side whose subsets were checked.
    pub side: String,
    /// Violating subsets are reported in path-set indices.
    pub outcome: HallOutcome,
}

#[derive(Debug, Clone)]
pub struct OneStep<const D: usize> {
    pub sets: PathSetPair<D>,
    pub hall: Option<HallReport>,
    /// Matched `(left, right)` path indices.
    pub matching: Vec<(usize, usize)>,
    pub table: CouplingTable,
    pub edges: usize,
    /// Coupling mass of the pairs meeting both events with disjoint traces
    /// and separated endpoints.
    pub success_mass: Weight,
    pub success_prob: Estimate,
}

impl<const D: usize> OneStep<D> {
    pub fn failure_mass(&self) -> Weight {
        Weight::one() - self.success_mass
    }
}

fn transpose(g: &BipartiteGraph) -> BipartiteGraph {
    BipartiteGraph::from_predicate(g.right_len(), g.left_len(), |j, i| g.has_edge(i, j))
}

/// One coupling step: filtered path sets, Hall's condition (exact mode),
/// a maximum matching and the coupling built from it.
pub fn one_step_couple<const D: usize>(
    s1: LatticePoint<D>,
    s2: LatticePoint<D>,
    n: f64,
    m: f64,
    events: &EventSpecs<'_, D>,
    config: &StepConfig,
    rng: &RandomStream,
) -> Result<OneStep<D>> {
    let sets = build_path_sets(s1, s2, n, m, events, config, rng)?;
    let instance = BipartiteInstance::new(
        &sets.left,
        &sets.right,
        sets.separation,
        sets.left_good.clone(),
        sets.right_good.clone(),
    );
    let (graph, left_ids, right_ids) = instance.graph_on(&sets.left_kept, &sets.right_kept);
    let hall = (sets.left.mode() == PathSetMode::Exact).then(|| {
        let (side, outcome, ids) = if graph.left_len() <= graph.right_len() {
            ("left", hall_check(&graph), &left_ids)
        } else {
            ("right", hall_check(&transpose(&graph)), &right_ids)
        };
        let outcome = match outcome {
            HallOutcome::Violating(b) => HallOutcome::Violating(b.into_iter().map(|k| ids[k]).collect()),
            holds => holds,
        };
        HallReport {
            side: side.to_string(),
            outcome,
        }
    });
    let matching: Vec<(usize, usize)> = max_matching(&graph)
        .into_iter()
        .map(|(l, r)| (left_ids[l], right_ids[r]))
        .collect();
    let table = CouplingTable::for_path_sets(&sets.left, &sets.right, matching.clone())?;
    table.verify_marginals()?;
    debug_assert!(matching.iter().all(|&(i, j)| sets.pair_succeeds(i, j)));
    let mut residual_hits: u128 = 0;
    let residual_right = table.residual_right();
    for &i in table.residual_left() {
        if sets.left_good.contains(i) {
            residual_hits += residual_right.iter().filter(|&&j| instance.is_adjacent(i, j)).count() as u128;
        }
    }
    let success_mass = table.matched_mass() + table.residual_pair_mass(residual_hits);
    let p = *success_mass.numer() as f64 / *success_mass.denom() as f64;
    let success_prob = match sets.left.mode() {
        PathSetMode::Exact => Estimate::exact(p, rng),
        PathSetMode::Empirical => Estimate::fraction(p, sets.left.len() as u64, rng),
    };
    let edges = instance.edge_count();
    drop(instance);
    Ok(OneStep {
        sets,
        hall,
        matching,
        table,
        edges,
        success_mass,
        success_prob,
    })
}
