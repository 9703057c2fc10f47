//! Intersection statistics for pairs and families of walks: expected
//! intersection sizes, intersection probabilities, moments of summed
//! intersections, good times, hittability and the far-hitting event `H`.

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Estimate, GREEN_DECAY_CONSTANT};
use crate::lattice::{farthest_point_order, log2, BallSpec, BoundarySampler, LatticePoint, Region, SEPARATION_BUDGET};
use crate::par::{replicate, try_replicate};
use crate::rng::RandomStream;
use crate::walker::{default_step_cap, walk_fixed_length, walk_to_boundary, Cursor, TraceIndex, WalkPath};

/// `|trace(p1) ∩ trace(p2)|` and the common points, in sorted order.
pub fn trace_intersection<const D: usize>(p1: &WalkPath<D>, p2: &WalkPath<D>) -> (usize, Vec<LatticePoint<D>>) {
    let common = p1.trace().intersection(p2.trace());
    (common.len(), common)
}

/// Walks from `start` until the first visit to `∂ball` (ball centered at the
/// origin), reporting whether some visited vertex is in `index`.
pub fn hits_before_boundary<const D: usize>(
    start: LatticePoint<D>,
    ball: &BallSpec<D>,
    index: &TraceIndex<D>,
    rng: &mut RandomStream,
    cap: u64,
) -> Result<bool> {
    let mut cur = Cursor::new(&start, &LatticePoint::origin());
    let mut steps = 0u64;
    loop {
        if index.contains_key(cur.key()) {
            return Ok(true);
        }
        match cur.region(ball) {
            Region::Boundary => return Ok(false),
            Region::Outside => return Err(Error::Domain(format!("start {start:?} is outside the stopping ball"))),
            Region::Interior => {}
        }
        if steps >= cap {
            return Err(Error::HorizonExceeded { cap });
        }
        cur.random_step(rng);
        steps += 1;
    }
}

/// Like [`hits_before_boundary`] but counts distinct indexed vertices
/// visited, consuming them from `index`.
fn count_hits_before_boundary<const D: usize>(
    start: LatticePoint<D>,
    ball: &BallSpec<D>,
    index: &mut TraceIndex<D>,
    rng: &mut RandomStream,
    cap: u64,
) -> Result<u64> {
    let mut cur = Cursor::new(&start, &LatticePoint::origin());
    let mut steps = 0u64;
    let mut hits = 0u64;
    loop {
        if index.take_key(cur.key()) {
            hits += 1;
        }
        match cur.region(ball) {
            Region::Boundary => return Ok(hits),
            Region::Outside => return Err(Error::Domain(format!("start {start:?} is outside the stopping ball"))),
            Region::Interior => {}
        }
        if steps >= cap {
            return Err(Error::HorizonExceeded { cap });
        }
        cur.random_step(rng);
        steps += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub estimate: Estimate,
    /// Radius at which the unbounded walk was cut off.
    pub truncation_radius: f64,
    /// Mean over replicas of `|R1| C / (M - max|R1|)^2`, bounding the
    /// expected intersections missed by the cutoff.
    pub bias_bound: f64,
    /// Whether `n > |x|^2` held.
    pub hypothesis_ok: bool,
}

/// `E|R1[0, n] ∩ R2[0, ∞)|` for `R1` from `x` and `R2` from the origin, the
/// second walk cut off at its first visit to `∂B(M)`,
/// `M = truncation_factor · (|x| + √n)`.
pub fn expected_intersections<const D: usize>(
    x: LatticePoint<D>,
    n_steps: u64,
    replicas: u64,
    rng: &RandomStream,
    truncation_factor: f64,
) -> Result<IntersectionReport> {
    if replicas == 0 || n_steps == 0 {
        return Err(Error::Domain("replicas and n_steps must be positive".into()));
    }
    let hypothesis_ok = n_steps as i64 > x.norm_sq();
    if !hypothesis_ok {
        log::warn!("n = {n_steps} does not exceed |x|^2 = {}", x.norm_sq());
    }
    let radius = truncation_factor * (x.norm() + (n_steps as f64).sqrt());
    let ball = BallSpec::<D>::centered(radius)?;
    let cap = default_step_cap(radius);
    let first = rng.fork("first");
    let second = rng.fork("second");
    let per = try_replicate(&second, replicas, |i, r| {
        let w1 = walk_fixed_length(x, n_steps as usize, &mut first.child(i), None);
        let reach = w1.trace().iter().map(|p| p.norm()).fold(0.0, f64::max);
        let gap = radius - reach;
        let bias = if gap > 0.0 {
            w1.trace().len() as f64 * GREEN_DECAY_CONSTANT / (gap * gap)
        } else {
            w1.trace().len() as f64
        };
        let mut index = TraceIndex::new(w1.trace().iter());
        let hits = count_hits_before_boundary(LatticePoint::origin(), &ball, &mut index, r, cap)?;
        Ok::<_, Error>((hits as f64, bias))
    })?;
    let counts: Vec<f64> = per.iter().map(|p| p.0).collect();
    let bias_bound = per.iter().map(|p| p.1).sum::<f64>() / replicas as f64;
    Ok(IntersectionReport {
        estimate: Estimate::mean(&counts, rng),
        truncation_radius: radius,
        bias_bound,
        hypothesis_ok,
    })
}

/// `P(R1 ∩ R2 ≠ ∅)` for walks from `s1` and `s2`, both stopped at their
/// first visit to `∂B(m)`.
pub fn intersection_prob<const D: usize>(
    s1: LatticePoint<D>,
    s2: LatticePoint<D>,
    m: f64,
    replicas: u64,
    rng: &RandomStream,
) -> Result<Estimate> {
    if replicas == 0 {
        return Err(Error::Domain("replicas must be positive".into()));
    }
    let ball = BallSpec::<D>::centered(m)?;
    if !ball.contains(&s1) || !ball.contains(&s2) {
        return Err(Error::Domain(format!("starts must lie in B({m})")));
    }
    if s1 == s2 {
        return Ok(Estimate::exact(1.0, rng));
    }
    let cap = default_step_cap(m);
    let first = rng.fork("first");
    let second = rng.fork("second");
    let hit = try_replicate(&second, replicas, |i, r| {
        let w1 = walk_to_boundary(s1, &ball, &mut first.child(i), 0)?;
        let index = TraceIndex::new(w1.trace().iter());
        hits_before_boundary(s2, &ball, &index, r, cap)
    })?;
    Ok(Estimate::proportion(hit.iter().filter(|&&h| h).count() as u64, replicas, rng))
}

/// `Σ_{i=1}^{k} |R0 ∩ Ri|` for independent walks started on `∂B(n)` and
/// stopped on `∂B(m)`, with `|R0(0) - Ri(0)| > n / log2 n`.
pub fn intersection_sums<const D: usize>(n: f64, m: f64, k: usize, replicas: u64, rng: &RandomStream) -> Result<Vec<f64>> {
    if !(m > n) {
        return Err(Error::Domain(format!("need m > n, got m = {m}, n = {n}")));
    }
    if replicas == 0 || k == 0 {
        return Err(Error::Domain("replicas and k must be positive".into()));
    }
    let sampler = BoundarySampler::new(BallSpec::<D>::centered(n)?);
    let outer = BallSpec::<D>::centered(m)?;
    let separation = n / log2(n);
    let cap = default_step_cap(m);
    try_replicate(rng, replicas, |_, r| {
        let s0 = sampler.sample(r);
        let w0 = walk_to_boundary(s0, &outer, r, 0)?;
        let index = TraceIndex::new(w0.trace().iter());
        let mut total = 0u64;
        for _ in 0..k {
            let (si, _) = sampler.sample_separated_from(&s0, separation, r, SEPARATION_BUDGET)?;
            let mut seen = FxHashSet::default();
            let mut cur = Cursor::new(&si, &LatticePoint::origin());
            let mut steps = 0u64;
            loop {
                if index.contains_key(cur.key()) {
                    seen.insert(cur.key());
                }
                if cur.region(&outer) == Region::Boundary {
                    break;
                }
                if steps >= cap {
                    return Err(Error::HorizonExceeded { cap });
                }
                cur.random_step(r);
                steps += 1;
            }
            total += seen.len() as u64;
        }
        Ok(total as f64)
    })
}

/// The shape `k^{3/2} L (log2 m + k^2 L)^{r-1}`, `L = log2(m log2 n / n)`.
pub fn moment_bound_shape(n: f64, m: f64, k: usize, r: u32) -> f64 {
    let l = log2(m * log2(n) / n);
    let k = k as f64;
    k.powf(1.5) * l * (log2(m) + k * k * l).powi(r as i32 - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub estimate: Estimate,
    pub r: u32,
    pub bound_shape: f64,
}

/// `E(Σ_{i=1}^{k} |R0 ∩ Ri|)^r`.
pub fn moment_sum<const D: usize>(n: f64, m: f64, k: usize, r: u32, replicas: u64, rng: &RandomStream) -> Result<MomentReport> {
    if r > 8 {
        return Err(Error::Domain(format!("moment order {r} exceeds 8")));
    }
    let estimate = if r == 0 {
        Estimate::exact(1.0, rng)
    } else {
        let sums = intersection_sums::<D>(n, m, k, replicas, rng)?;
        moment_from_sums(&sums, r, rng)
    };
    Ok(MomentReport {
        estimate,
        r,
        bound_shape: moment_bound_shape(n, m, k, r),
    })
}

pub fn moment_from_sums(sums: &[f64], r: u32, rng: &RandomStream) -> Estimate {
    let powered: Vec<f64> = sums.iter().map(|s| s.powi(r as i32)).collect();
    Estimate::mean(&powered, rng)
}

/// Good/bad classification of the times of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodTimeMask {
    pub path_id: u64,
    pub flags: Vec<bool>,
    pub lambda: f64,
    pub window: usize,
    pub n: f64,
}

impl GoodTimeMask {
    pub fn with_id(mut self, id: u64) -> Self {
        self.path_id = id;
        self
    }

    pub fn bad_count(&self) -> usize {
        self.flags.iter().filter(|&&g| !g).count()
    }

    pub fn bad_fraction(&self) -> f64 {
        if self.flags.is_empty() {
            0.0
        } else {
            self.bad_count() as f64 / self.flags.len() as f64
        }
    }
}

/// `|v|^{-2}`, with a return to the reference point counted as distance 1.
#[inline]
fn inv_sq<const D: usize>(a: &LatticePoint<D>, b: &LatticePoint<D>) -> f64 {
    1.0 / (a.dist_sq(b).max(1) as f64)
}

/// Marks each time `t` good iff
/// `Σ_{s=1}^{w} |R(t+s) - R(t)|^{-2} > log2(n) / λ` and
/// `Σ_{s1,s2=1}^{w} |R(t+s1) - R(t)|^{-2} |R(t+s1+s2) - R(t+s1)|^{-2} ≤ λ log2²(n)`.
///
/// Stopped paths are classified on `0..=stop_index`, which needs `2w`
/// stored steps past the stop; unstopped paths on every time with `2w`
/// steps after it.
pub fn classify_good_times<const D: usize>(path: &WalkPath<D>, n: f64, lambda: f64, window: usize) -> Result<GoodTimeMask> {
    if !(lambda > 0.0) || window == 0 || !(n > 1.0) {
        return Err(Error::Domain(format!(
            "need lambda > 0, window > 0, n > 1; got {lambda}, {window}, {n}"
        )));
    }
    let v = path.vertices();
    let len = v.len();
    let classified = match path.stop_index() {
        Some(s) => {
            if s + 2 * window >= len {
                return Err(Error::InsufficientExtension {
                    time: s,
                    needed: s + 2 * window + 1,
                    available: len,
                });
            }
            s + 1
        }
        None => {
            if 2 * window >= len {
                return Err(Error::InsufficientExtension {
                    time: 0,
                    needed: 2 * window + 1,
                    available: len,
                });
            }
            len - 2 * window
        }
    };
    // s1[u] = Σ_{s=1}^{w} |R(u+s) - R(u)|^{-2} for u < classified + w.
    let s1: Vec<f64> = (0..classified + window)
        .map(|u| (1..=window).map(|s| inv_sq(&v[u + s], &v[u])).sum())
        .collect();
    let log_n = log2(n);
    let first_bar = log_n / lambda;
    let second_bar = lambda * log_n * log_n;
    let flags = (0..classified)
        .map(|t| {
            let pair: f64 = (1..=window).map(|s| inv_sq(&v[t + s], &v[t]) * s1[t + s]).sum();
            s1[t] > first_bar && pair <= second_bar
        })
        .collect();
    Ok(GoodTimeMask {
        path_id: 0,
        flags,
        lambda,
        window,
        n,
    })
}

/// Parameters of the nested hittability estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittabilityParams {
    pub n: f64,
    pub m: f64,
    pub epsilon: f64,
    pub outer_replicas: u64,
    pub inner_replicas: u64,
}

impl HittabilityParams {
    /// Departures from the regime `n ≤ m ≤ n e^{4√log2 n}`,
    /// `1/log2 n ≤ ε < 2/3`. These are reported, not enforced.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let top = self.n * (4.0 * log2(self.n).sqrt()).exp();
        if self.m < self.n || self.m > top {
            out.push(format!("m = {} is outside [n, n e^(4 sqrt(log2 n))] = [{}, {top:.1}]", self.m, self.n));
        }
        if self.epsilon < 1.0 / log2(self.n) {
            out.push(format!("epsilon = {} is below 1/log2 n = {:.4}", self.epsilon, 1.0 / log2(self.n)));
        }
        if self.epsilon >= 2.0 / 3.0 {
            out.push(format!("epsilon = {} is not below 2/3", self.epsilon));
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if !(self.n > 1.0 && self.m > self.n) {
            return Err(Error::Domain(format!("need 1 < n < m, got n = {}, m = {}", self.n, self.m)));
        }
        if self.outer_replicas == 0 || self.inner_replicas == 0 {
            return Err(Error::Domain("outer and inner replicas must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Domain(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Per outer sample: the inner estimate of `P(R1 ∩ R2 ≠ ∅ | R1)` as a hit
/// count out of `inner` walks.
pub fn hittability_profile<const D: usize>(n: f64, m: f64, outer: u64, inner: u64, rng: &RandomStream) -> Result<Vec<u64>> {
    let sampler = BoundarySampler::new(BallSpec::<D>::centered(n)?);
    let ball = BallSpec::<D>::centered(m)?;
    let separation = n / log2(n);
    let cap = default_step_cap(m);
    try_replicate(rng, outer, |_, r| {
        let ((s1, s2), _) = sampler.sample_separated_pair(separation, r, SEPARATION_BUDGET)?;
        let w1 = walk_to_boundary(s1, &ball, r, 0)?;
        let index = TraceIndex::new(w1.trace().iter());
        let mut inner_rng = r.fork("inner");
        let mut hits = 0u64;
        for _ in 0..inner {
            if hits_before_boundary(s2, &ball, &index, &mut inner_rng, cap)? {
                hits += 1;
            }
        }
        Ok(hits)
    })
}

/// Whether an outer sample counts as hittable at level `ε`: its inner
/// estimate exceeds `1 - ε` by two inner standard errors. A threshold at
/// or below zero is always exceeded.
pub fn is_hittable(hits: u64, inner: u64, epsilon: f64) -> bool {
    let threshold = 1.0 - epsilon;
    if threshold <= 0.0 {
        return true;
    }
    let p = hits as f64 / inner as f64;
    let se = (p * (1.0 - p) / inner as f64).sqrt();
    p - 2.0 * se > threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittabilityReport {
    pub params: HittabilityParams,
    /// Fraction of outer samples classified hittable.
    pub delta: Estimate,
    /// Largest possible inner standard error, `1 / (2 √inner)`; the design
    /// target is `ε / 4`.
    pub inner_stderr_max: f64,
    pub warnings: Vec<String>,
}

pub fn delta_from_profile(params: &HittabilityParams, profile: &[u64], rng: &RandomStream) -> HittabilityReport {
    let hittable = profile
        .iter()
        .filter(|&&h| is_hittable(h, params.inner_replicas, params.epsilon))
        .count() as u64;
    HittabilityReport {
        params: *params,
        delta: Estimate::proportion(hittable, profile.len() as u64, rng),
        inner_stderr_max: 0.5 / (params.inner_replicas as f64).sqrt(),
        warnings: params.warnings(),
    }
}

/// `δ(ε) = P(P(R1 ∩ R2 ≠ ∅ | R1) > 1 - ε)` by nested Monte Carlo.
pub fn hittability_tail<const D: usize>(params: &HittabilityParams, rng: &RandomStream) -> Result<HittabilityReport> {
    params.validate()?;
    let profile = hittability_profile::<D>(params.n, params.m, params.outer_replicas, params.inner_replicas, rng)?;
    Ok(delta_from_profile(params, &profile, rng))
}

/// `δ(ε)` for several `ε` from one set of walks.
pub fn hittability_sweep<const D: usize>(
    n: f64,
    m: f64,
    epsilons: &[f64],
    outer: u64,
    inner: u64,
    rng: &RandomStream,
) -> Result<Vec<HittabilityReport>> {
    let all = epsilons.iter().map(|&epsilon| HittabilityParams {
        n,
        m,
        epsilon,
        outer_replicas: outer,
        inner_replicas: inner,
    });
    let params: Vec<_> = all.collect();
    for p in &params {
        p.validate()?;
    }
    let profile = hittability_profile::<D>(n, m, outer, inner, rng)?;
    Ok(params.iter().map(|p| delta_from_profile(p, &profile, rng)).collect())
}

/// `C1 log2(log2 n) log2(n log2³ n / k) / log2 n`.
pub fn event_h_threshold(n: f64, k: f64, c1: f64) -> f64 {
    let l = log2(n);
    c1 * log2(l) * log2(n * l * l * l / k) / l
}

/// Settings for the `z`-grid search of the event `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventHConfig {
    /// Grid points `z` examined per path.
    pub grid: usize,
    /// Walks per grid point.
    pub inner: u64,
    /// The walk from `z` is cut off at `∂B(truncation_factor · n)`.
    pub truncation_factor: f64,
}

impl Default for EventHConfig {
    fn default() -> Self {
        Self {
            grid: 64,
            inner: 64,
            truncation_factor: 8.0,
        }
    }
}

/// Candidate points for the `z`-grid: a farthest-point ordering of a fixed
/// pseudo-random sample of `∂B(n)`.
pub fn z_candidates<const D: usize>(n: f64, count: usize) -> Result<Vec<LatticePoint<D>>> {
    let ball = BallSpec::<D>::centered(n)?;
    let pool: Vec<LatticePoint<D>> = if ball.box_volume() <= 2.0e6 {
        ball.enumerate_boundary()
    } else {
        let sampler = BoundarySampler::rejection(ball);
        let mut r = RandomStream::derive(0, "z-grid", 0);
        let mut pts: Vec<_> = (0..16 * count).map(|_| sampler.sample(&mut r)).collect();
        pts.sort();
        pts.dedup();
        pts
    };
    Ok(farthest_point_order(&pool, count))
}

/// Largest estimated probability, over grid points `z ∈ ∂B(n)` with
/// `|z - y| > k`, that a walk from `z` hits the trace of `path`. Grid points
/// are scanned in farthest-point order; the scan stops early once an
/// estimate exceeds `stop_above`.
pub fn far_hitting_max<const D: usize>(
    path: &WalkPath<D>,
    n: f64,
    k: f64,
    candidates: &[LatticePoint<D>],
    config: &EventHConfig,
    stop_above: f64,
    rng: &mut RandomStream,
) -> Result<f64> {
    let y = path
        .hit_point()
        .ok_or_else(|| Error::Domain("event H needs a stopped path".into()))?;
    let far = BallSpec::<D>::centered(config.truncation_factor * n)?;
    let cap = default_step_cap(config.truncation_factor * n);
    let index = TraceIndex::new(path.trace().iter());
    let mut best = 0.0f64;
    for z in candidates.iter().filter(|z| z.dist(&y) > k).take(config.grid) {
        let mut hits = 0u64;
        for _ in 0..config.inner {
            if hits_before_boundary(*z, &far, &index, rng, cap)? {
                hits += 1;
            }
        }
        best = best.max(hits as f64 / config.inner as f64);
        if best > stop_above {
            break;
        }
    }
    Ok(best)
}

/// Whether `H_{n,k}` holds for a path stopped on `∂B(n)`. Thresholds at or
/// above one cannot be exceeded and are decided without simulation.
pub fn event_h_holds<const D: usize>(
    path: &WalkPath<D>,
    n: f64,
    k: f64,
    c1: f64,
    candidates: &[LatticePoint<D>],
    config: &EventHConfig,
    rng: &mut RandomStream,
) -> Result<bool> {
    let threshold = event_h_threshold(n, k, c1);
    if threshold >= 1.0 {
        return Ok(false);
    }
    Ok(far_hitting_max(path, n, k, candidates, config, threshold, rng)? > threshold)
}

/// Per outer path from the origin to `∂B(n)`: the grid maximum of the
/// far-hitting probability, with no early stop, so that one profile serves
/// every `C1`.
pub fn event_h_profile<const D: usize>(n: f64, k: f64, outer: u64, config: &EventHConfig, rng: &RandomStream) -> Result<Vec<f64>> {
    if !(k > 0.0 && k < n) {
        return Err(Error::Domain(format!("need 0 < k < n, got k = {k}, n = {n}")));
    }
    if outer == 0 || config.inner == 0 || config.grid == 0 {
        return Err(Error::Domain("outer, inner and grid must be positive".into()));
    }
    let ball = BallSpec::<D>::centered(n)?;
    let candidates = z_candidates::<D>(n, 4 * config.grid)?;
    try_replicate(rng, outer, |_, r| {
        let w = walk_to_boundary(LatticePoint::origin(), &ball, r, 0)?;
        let mut inner = r.fork("inner");
        far_hitting_max(&w, n, k, &candidates, config, f64::INFINITY, &mut inner)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventHReport {
    pub estimate: Estimate,
    pub threshold: f64,
    pub c1: f64,
    /// Radius at which walks from grid points are cut off.
    pub truncation_radius: f64,
}

pub fn event_h_from_profile(profile: &[f64], n: f64, k: f64, c1: f64, truncation_factor: f64, rng: &RandomStream) -> EventHReport {
    let threshold = event_h_threshold(n, k, c1);
    let holds = profile.iter().filter(|&&p| p > threshold).count() as u64;
    EventHReport {
        estimate: Estimate::proportion(holds, profile.len() as u64, rng),
        threshold,
        c1,
        truncation_radius: truncation_factor * n,
    }
}

/// `P(H_{n,k})` for a walk from the origin stopped on `∂B(n)`.
pub fn event_h_prob<const D: usize>(
    n: f64,
    k: f64,
    c1: f64,
    outer: u64,
    config: &EventHConfig,
    rng: &RandomStream,
) -> Result<EventHReport> {
    if !(c1 > 0.0) {
        return Err(Error::Domain(format!("C1 must be positive, got {c1}")));
    }
    let profile = event_h_profile::<D>(n, k, outer, config, rng)?;
    Ok(event_h_from_profile(&profile, n, k, c1, config.truncation_factor, rng))
}

/// Independent walks from `start`, each stopped on `∂B(m)`.
pub fn stopped_walks<const D: usize>(start: LatticePoint<D>, m: f64, count: u64, rng: &RandomStream) -> Result<Vec<WalkPath<D>>> {
    let ball = BallSpec::<D>::centered(m)?;
    replicate(rng, count, |_, r| walk_to_boundary(start, &ball, r, 0))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    type P4 = LatticePoint<4>;

    #[test]
    fn hittable_threshold_edge() {
        assert!(is_hittable(0, 10, 1.0));
        assert!(is_hittable(0, 10, 1.5));
        assert!(!is_hittable(10, 10, 0.0));
        assert!(is_hittable(400, 400, 0.1));
        assert!(!is_hittable(360, 400, 0.1));
    }

    #[test]
    fn h_threshold_shape() {
        let t = event_h_threshold(16.0, 4.0, 1.0);
        assert!((t - 4.0).abs() < 1e-12, "{t}");
        assert!(event_h_threshold(64.0, 64.0 / 6.0, 2.0) > event_h_threshold(64.0, 64.0 / 6.0, 1.0));
    }

    #[test]
    fn good_time_window_needs_extension() {
        let ball = BallSpec::<4>::centered(3.0).unwrap();
        let mut rng = RandomStream::new(3, 0);
        let w = walk_to_boundary(P4::origin(), &ball, &mut rng, 3).unwrap();
        let err = classify_good_times(&w, 16.0, 2.0, 4).unwrap_err();
        assert!(matches!(err, Error::InsufficientExtension { .. }));
    }

    #[test]
    fn good_time_sums_match_direct_double_sum() {
        let mut rng = RandomStream::new(8, 0);
        let w = walk_fixed_length(P4::origin(), 60, &mut rng, None);
        let (n, lambda, win) = (64.0, 1.5, 8);
        let mask = classify_good_times(&w, n, lambda, win).unwrap();
        let v = w.vertices();
        let f = |a: &P4, b: &P4| 1.0 / (a.dist_sq(b).max(1) as f64);
        for (t, &flag) in mask.flags.iter().enumerate() {
            let c1: f64 = (1..=win).map(|s| f(&v[t + s], &v[t])).sum();
            let mut c2 = 0.0;
            for s1 in 1..=win {
                for s2 in 1..=win {
                    c2 += f(&v[t + s1], &v[t]) * f(&v[t + s1 + s2], &v[t + s1]);
                }
            }
            let expect = c1 > log2(n) / lambda && c2 <= lambda * log2(n) * log2(n);
            assert_eq!(flag, expect, "t = {t}");
        }
    }
}
