//! Bipartite graphs over bitset rows, maximum matching and Hall's condition.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
const INF: u32 = u32::MAX;

/// Largest left side for which Hall's condition is checked by enumerating
/// every subset.
pub const HALL_ENUMERATION_LIMIT: usize = 20;

/// Bipartite graph with one bitset of right neighbours per left vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    right: usize,
    rows: Vec<FixedBitSet>,
}

impl BipartiteGraph {
    pub fn new(left: usize, right: usize) -> Self {
        Self {
            right,
            rows: vec![FixedBitSet::with_capacity(right); left],
        }
    }

    pub fn from_predicate<F>(left: usize, right: usize, mut adjacent: F) -> Self
    where
        F: FnMut(usize, usize) -> bool,
    {
        let mut g = Self::new(left, right);
        for i in 0..left {
            for j in 0..right {
                if adjacent(i, j) {
                    g.rows[i].insert(j);
                }
            }
        }
        g
    }

    pub fn from_rows(right: usize, rows: Vec<FixedBitSet>) -> Self {
        assert!(rows.iter().all(|r| r.len() == right), "every row spans the right side");
        Self { right, rows }
    }

    pub fn left_len(&self) -> usize {
        self.rows.len()
    }

    pub fn right_len(&self) -> usize {
        self.right
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        self.rows[i].insert(j);
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.rows[i].contains(j)
    }

    pub fn neighbors(&self, i: usize) -> &FixedBitSet {
        &self.rows[i]
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones(..)).sum()
    }

    /// `N(subset)` as a bitset over the right side.
    pub fn neighborhood(&self, subset: &[usize]) -> FixedBitSet {
        let mut out = FixedBitSet::with_capacity(self.right);
        for &i in subset {
            out.union_with(&self.rows[i]);
        }
        out
    }
}

/// First set bit at or after `from`.
fn next_one(set: &FixedBitSet, from: usize) -> Option<usize> {
    let words = set.as_slice();
    let mut w = from / 32;
    if w >= words.len() {
        return None;
    }
    let mut word = words[w] & (u32::MAX << (from % 32));
    loop {
        if word != 0 {
            let j = w * 32 + word.trailing_zeros() as usize;
            return (j < set.len()).then_some(j);
        }
        w += 1;
        if w >= words.len() {
            return None;
        }
        word = words[w];
    }
}

struct HopcroftKarp<'a> {
    g: &'a BipartiteGraph,
    pair_left: Vec<usize>,
    pair_right: Vec<usize>,
    dist: Vec<u32>,
}

impl<'a> HopcroftKarp<'a> {
    fn new(g: &'a BipartiteGraph) -> Self {
        Self {
            g,
            pair_left: vec![NONE; g.left_len()],
            pair_right: vec![NONE; g.right_len()],
            dist: vec![INF; g.left_len()],
        }
    }

    fn bfs(&mut self) -> bool {
        let mut queue = Vec::with_capacity(self.g.left_len());
        for (u, &p) in self.pair_left.iter().enumerate() {
            if p == NONE {
                self.dist[u] = 0;
                queue.push(u);
            } else {
                self.dist[u] = INF;
            }
        }
        let mut found = false;
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            for v in self.g.rows[u].ones() {
                let w = self.pair_right[v];
                if w == NONE {
                    found = true;
                } else if self.dist[w] == INF {
                    self.dist[w] = self.dist[u] + 1;
                    queue.push(w);
                }
            }
        }
        found
    }

    /// Iterative layered DFS from the free vertex `root`.
    fn augment(&mut self, root: usize, cursor: &mut [usize]) -> bool {
        let mut stack = vec![root];
        let mut via: Vec<usize> = Vec::new();
        while let Some(&u) = stack.last() {
            match next_one(&self.g.rows[u], cursor[u]) {
                None => {
                    self.dist[u] = INF;
                    stack.pop();
                    via.pop();
                }
                Some(v) => {
                    cursor[u] = v + 1;
                    let w = self.pair_right[v];
                    if w == NONE {
                        via.push(v);
                        for (&l, &r) in stack.iter().zip(&via) {
                            self.pair_left[l] = r;
                            self.pair_right[r] = l;
                        }
                        return true;
                    }
                    if self.dist[w] != INF && self.dist[w] == self.dist[u] + 1 {
                        via.push(v);
                        stack.push(w);
                    }
                }
            }
        }
        false
    }

    fn run(mut self) -> Vec<usize> {
        while self.bfs() {
            let mut cursor = vec![0usize; self.g.left_len()];
            for u in 0..self.g.left_len() {
                if self.pair_left[u] == NONE {
                    self.augment(u, &mut cursor);
                }
            }
        }
        self.pair_left
    }
}

/// Maximum matching by Hopcroft-Karp, as `(left, right)` pairs sorted by
/// left index. Vertices and neighbours are scanned in index order, so the
/// result is deterministic.
pub fn max_matching(g: &BipartiteGraph) -> Vec<(usize, usize)> {
    HopcroftKarp::new(g)
        .run()
        .into_iter()
        .enumerate()
        .filter(|&(_, r)| r != NONE)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HallOutcome {
    Holds,
    /// Left vertices `B` with `|N(B)| < |B|`.
    Violating(Vec<usize>),
}

impl HallOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, HallOutcome::Holds)
    }
}

/// Hall's condition for the left side: by subset enumeration up to
/// [`HALL_ENUMERATION_LIMIT`] left vertices, by matching duality above.
pub fn hall_check(g: &BipartiteGraph) -> HallOutcome {
    if g.left_len() <= HALL_ENUMERATION_LIMIT {
        hall_by_enumeration(g).expect("left side is within the enumeration limit")
    } else {
        hall_by_matching(g)
    }
}

/// Checks every subset of the left side without computing a matching. The
/// reported violator is the smallest one, ties broken by bitmask order.
///
/// Right vertices are grouped by the set of left vertices they neighbour;
/// a superset-sum transform over those groups gives `|N(B)|` for every `B`.
pub fn hall_by_enumeration(g: &BipartiteGraph) -> Result<HallOutcome> {
    let l = g.left_len();
    if l > HALL_ENUMERATION_LIMIT {
        return Err(Error::BudgetExceeded {
            what: "Hall subset enumeration",
            needed: 1u128 << l,
            budget: 1u128 << HALL_ENUMERATION_LIMIT,
        });
    }
    let full = 1usize << l;
    // avoid[s] = number of right vertices whose neighbourhood lies inside s.
    let mut avoid = vec![0u32; full];
    for j in 0..g.right_len() {
        let mut sig = 0usize;
        for i in 0..l {
            if g.rows[i].contains(j) {
                sig |= 1 << i;
            }
        }
        avoid[sig] += 1;
    }
    for bit in 0..l {
        for s in 0..full {
            if s & (1 << bit) != 0 {
                avoid[s] += avoid[s ^ (1 << bit)];
            }
        }
    }
    let right = g.right_len() as u32;
    let mask = full - 1;
    let mut best: Option<usize> = None;
    for b in 1..full {
        let reach = right - avoid[mask & !b];
        if (reach as usize) < b.count_ones() as usize {
            let better = match best {
                None => true,
                Some(c) => b.count_ones() < c.count_ones(),
            };
            if better {
                best = Some(b);
            }
        }
    }
    Ok(match best {
        None => HallOutcome::Holds,
        Some(b) => HallOutcome::Violating((0..l).filter(|i| b & (1 << i) != 0).collect()),
    })
}

/// Hall's condition through a maximum matching: it holds iff the matching
/// saturates the left side. Otherwise the left vertices reachable by
/// alternating paths from the first unsaturated vertex form a violator.
pub fn hall_by_matching(g: &BipartiteGraph) -> HallOutcome {
    let matching = max_matching(g);
    if matching.len() == g.left_len() {
        return HallOutcome::Holds;
    }
    let mut pair_left = vec![NONE; g.left_len()];
    let mut pair_right = vec![NONE; g.right_len()];
    for &(l, r) in &matching {
        pair_left[l] = r;
        pair_right[r] = l;
    }
    let root = pair_left.iter().position(|&r| r == NONE).expect("some left vertex is unsaturated");
    deficient_set(g, &pair_right, root)
}

fn deficient_set(g: &BipartiteGraph, pair_right: &[usize], root: usize) -> HallOutcome {
    let mut seen_left = FixedBitSet::with_capacity(g.left_len());
    let mut seen_right = FixedBitSet::with_capacity(g.right_len());
    let mut queue = vec![root];
    seen_left.insert(root);
    let mut head = 0;
    while head < queue.len() {
        let u = queue[head];
        head += 1;
        for v in g.rows[u].ones() {
            if seen_right.put(v) {
                continue;
            }
            let w = pair_right[v];
            debug_assert!(w != NONE, "a maximum matching admits no augmenting path");
            if !seen_left.put(w) {
                queue.push(w);
            }
        }
    }
    HallOutcome::Violating(seen_left.ones().collect())
}
