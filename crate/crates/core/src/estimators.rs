//! Monte Carlo estimators for single-walk quantities: hitting probabilities,
//! annulus exits, exit times, boundary layers, harmonic measure, escapes
//! from curved boundaries and inverse-square path sums.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BallSpec, BoundarySampler, LatticePoint, Region};
use crate::par::replicate;
use crate::rng::RandomStream;
use crate::walker::{default_step_cap, walk_to_boundary, Cursor};

const Z95: f64 = 1.96;

/// A Monte Carlo result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub replicas: u64,
    pub ci95: (f64, f64),
    pub seed: u64,
    pub stream_id: u64,
}

impl Estimate {
    /// Proportion `successes / trials` with a Wilson interval.
    pub fn proportion(successes: u64, trials: u64, rng: &RandomStream) -> Self {
        assert!(trials > 0, "an estimate needs at least one replica");
        Self::fraction(successes as f64 / trials as f64, trials, rng)
    }

    /// A fraction `p` of an empirical measure on `trials` atoms, with the
    /// Wilson interval of a proportion.
    pub fn fraction(p: f64, trials: u64, rng: &RandomStream) -> Self {
        assert!(trials > 0, "an estimate needs at least one replica");
        let n = trials as f64;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / n;
        let centre = (p + z2 / (2.0 * n)) / denom;
        let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Self {
            value: p,
            stderr: (p * (1.0 - p) / n).sqrt(),
            replicas: trials,
            ci95: ((centre - half).max(0.0), (centre + half).min(1.0)),
            seed: rng.seed(),
            stream_id: rng.stream_id(),
        }
    }

    /// Sample mean with a normal interval. Summation is sequential in
    /// replica order.
    pub fn mean(samples: &[f64], rng: &RandomStream) -> Self {
        assert!(!samples.is_empty(), "an estimate needs at least one replica");
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let stderr = (var / n).sqrt();
        Self {
            value: mean,
            stderr,
            replicas: samples.len() as u64,
            ci95: (mean - Z95 * stderr, mean + Z95 * stderr),
            seed: rng.seed(),
            stream_id: rng.stream_id(),
        }
    }

    /// A value known without simulation.
    pub fn exact(value: f64, rng: &RandomStream) -> Self {
        Self {
            value,
            stderr: 0.0,
            replicas: 1,
            ci95: (value, value),
            seed: rng.seed(),
            stream_id: rng.stream_id(),
        }
    }

    pub fn within(&self, target: f64, stderrs: f64) -> bool {
        (self.value - target).abs() <= stderrs * self.stderr
    }
}

fn count_true(flags: &[bool]) -> u64 {
    flags.iter().filter(|&&b| b).count() as u64
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_replicas(replicas: u64) -> Result<()> {
    if replicas == 0 {
        Err(Error::Domain("replicas must be positive".into()))
    } else {
        Ok(())
    }
}

/// Asymptotic constant of the hitting probability `G(0, x) ~ c |x|^{-2}` on
/// Z^4, rounded up. Used only for reported truncation-bias bounds.
pub const GREEN_DECAY_CONSTANT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenEstimate {
    pub estimate: Estimate,
    pub truncation_radius: f64,
    /// Upper bound on `G - estimate` from walks that would hit `x` only
    /// after reaching the truncation sphere.
    pub bias_bound: f64,
}

/// Probability that a walk from the origin ever visits `x`, estimated from
/// visits before the first visit to `∂B(truncation_radius)`.
pub fn estimate_green<const D: usize>(
    x: LatticePoint<D>,
    replicas: u64,
    rng: &RandomStream,
    truncation_radius: f64,
) -> Result<GreenEstimate> {
    check_replicas(replicas)?;
    if x == LatticePoint::origin() {
        return Ok(GreenEstimate {
            estimate: Estimate::exact(1.0, rng),
            truncation_radius,
            bias_bound: 0.0,
        });
    }
    if !(truncation_radius > 4.0 * x.norm()) {
        return Err(Error::Domain(format!(
            "truncation radius {truncation_radius} must exceed 4|x| = {}",
            4.0 * x.norm()
        )));
    }
    let ball = BallSpec::<D>::centered(truncation_radius)?;
    let target = crate::walker::pack_coords(x.coords());
    let target_sq = x.norm_sq();
    let cap = default_step_cap(truncation_radius);
    let hits = replicate(rng, replicas, |_, r| {
        let mut cur = Cursor::new(&LatticePoint::origin(), &LatticePoint::origin());
        let mut steps = 0u64;
        loop {
            cur.random_step(r);
            steps += 1;
            if cur.dist_sq == target_sq && cur.key() == target {
                return Ok(true);
            }
            if cur.dist_sq > ball.surely_interior_sq()
                && cur.region(&ball) == Region::Boundary
            {
                return Ok(false);
            }
            if steps >= cap {
                return Err(Error::HorizonExceeded { cap });
            }
        }
    });
    let hits: Vec<bool> = hits.into_iter().collect::<Result<_>>()?;
    let gap = truncation_radius - x.norm();
    Ok(GreenEstimate {
        estimate: Estimate::proportion(count_true(&hits), replicas, rng),
        truncation_radius,
        bias_bound: GREEN_DECAY_CONSTANT / (gap * gap),
    })
}

/// Limit of the probability that a walk started on `∂B(n)` leaves `B(An)`
/// before entering `B(an)`.
pub fn annulus_exit_limit(a: f64, big_a: f64) -> Result<f64> {
    if !(a > 0.0 && a < 1.0 && big_a > 1.0 && big_a.is_finite()) {
        return Err(Error::Domain(format!("need 0 < a < 1 < A, got a = {a}, A = {big_a}")));
    }
    let inv_a2 = 1.0 / (a * a);
    Ok((inv_a2 - 1.0) / (inv_a2 - 1.0 / (big_a * big_a)))
}

/// Probability that a walk started uniformly on `∂B(n)` leaves `B(An)`
/// before it enters `B(an)`.
pub fn annulus_exit_prob<const D: usize>(
    n: f64,
    a: f64,
    big_a: f64,
    replicas: u64,
    rng: &RandomStream,
) -> Result<Estimate> {
    annulus_exit_limit(a, big_a)?;
    check_positive("n", n)?;
    check_replicas(replicas)?;
    let inner = BallSpec::<D>::centered(a * n)?;
    let ball = BallSpec::<D>::centered(n)?;
    let outer = BallSpec::<D>::centered(big_a * n)?;
    // Boundary points of B(n) have norm at least n - 1.
    if a * n > n - 1.0 {
        return Err(Error::Domain(format!(
            "radii a n = {}, n = {n}, A n = {} do not give nested lattice balls",
            a * n,
            big_a * n
        )));
    }
    let sampler = BoundarySampler::new(ball);
    let (lo, hi) = (inner.max_inside_sq(), outer.max_inside_sq());
    let starts_rng = rng.fork("starts");
    let walks_rng = rng.fork("walks");
    let outward = replicate(&walks_rng, replicas, |i, r| {
        let start = sampler.sample(&mut starts_rng.child(i));
        let mut cur = Cursor::new(&start, &LatticePoint::origin());
        loop {
            if cur.dist_sq > hi {
                return true;
            }
            if cur.dist_sq <= lo {
                return false;
            }
            cur.random_step(r);
        }
    });
    Ok(Estimate::proportion(count_true(&outward), replicas, rng))
}

/// Exit times from `B(n)` of walks from the origin: the first `t` with
/// `R(t) ∉ B(n)`.
pub fn exit_times<const D: usize>(n: f64, replicas: u64, rng: &RandomStream) -> Result<Vec<u64>> {
    check_replicas(replicas)?;
    let ball = BallSpec::<D>::centered(n)?;
    let m = ball.max_inside_sq();
    Ok(replicate(rng, replicas, |_, r| {
        let mut cur = Cursor::<D>::new(&LatticePoint::origin(), &LatticePoint::origin());
        let mut t = 0u64;
        while cur.dist_sq <= m {
            cur.random_step(r);
            t += 1;
        }
        t
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeReport {
    pub n: f64,
    pub mean: Estimate,
    /// `(t, P(τ > t))` at `t = n², 2n², 4n², 8n²`.
    pub tails: Vec<(u64, Estimate)>,
}

pub fn exit_time_tail<const D: usize>(n: f64, replicas: u64, rng: &RandomStream) -> Result<ExitTimeReport> {
    let taus = exit_times::<D>(n, replicas, rng)?;
    let as_f64: Vec<f64> = taus.iter().map(|&t| t as f64).collect();
    let tails = [1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|f| {
            let t = (f * n * n).round() as u64;
            let above = taus.iter().filter(|&&tau| tau > t).count() as u64;
            (t, Estimate::proportion(above, replicas, rng))
        })
        .collect();
    Ok(ExitTimeReport {
        n,
        mean: Estimate::mean(&as_f64, rng),
        tails,
    })
}

/// `|trace ∖ B(n-k)|` for walks from the origin stopped on `∂B(n)`.
pub fn boundary_layer_counts<const D: usize>(n: f64, k: f64, replicas: u64, rng: &RandomStream) -> Result<Vec<u64>> {
    check_replicas(replicas)?;
    check_positive("k", k)?;
    if k >= n {
        return Err(Error::Domain(format!("layer width k = {k} must be below n = {n}")));
    }
    let ball = BallSpec::<D>::centered(n)?;
    let core_sq = BallSpec::<D>::centered(n - k)?.max_inside_sq();
    replicate(rng, replicas, |_, r| {
        let w = walk_to_boundary(LatticePoint::origin(), &ball, r, 0)?;
        Ok(w.trace().iter().filter(|p| p.norm_sq() > core_sq).count() as u64)
    })
    .into_iter()
    .collect()
}

/// `P(|trace ∖ B(n-k)| > λ k²)`.
pub fn boundary_layer_tail<const D: usize>(
    n: f64,
    k: f64,
    lambda: f64,
    replicas: u64,
    rng: &RandomStream,
) -> Result<Estimate> {
    check_positive("lambda", lambda)?;
    let counts = boundary_layer_counts::<D>(n, k, replicas, rng)?;
    Ok(layer_tail_from_counts(&counts, k, lambda, rng))
}

pub fn layer_tail_from_counts(counts: &[u64], k: f64, lambda: f64, rng: &RandomStream) -> Estimate {
    let bar = lambda * k * k;
    let above = counts.iter().filter(|&&c| c as f64 > bar).count() as u64;
    Estimate::proportion(above, counts.len() as u64, rng)
}

/// First-visit distribution on `∂B(m)` of walks from `x`, as hit counts.
pub fn exit_measure<const D: usize>(
    x: LatticePoint<D>,
    m: f64,
    replicas: u64,
    rng: &RandomStream,
) -> Result<BTreeMap<LatticePoint<D>, u64>> {
    check_replicas(replicas)?;
    let ball = BallSpec::<D>::centered(m)?;
    if !ball.contains(&x) {
        return Err(Error::Domain(format!("start {x:?} is outside B({m})")));
    }
    let cap = default_step_cap(m);
    let ends = replicate(rng, replicas, |_, r| {
        let mut cur = Cursor::new(&x, &LatticePoint::origin());
        let mut steps = 0u64;
        while cur.region(&ball) != Region::Boundary {
            if steps >= cap {
                return Err(Error::HorizonExceeded { cap });
            }
            cur.random_step(r);
            steps += 1;
        }
        Ok(LatticePoint::new(cur.offset()))
    });
    let mut measure = BTreeMap::new();
    for e in ends {
        *measure.entry(e?).or_insert(0u64) += 1;
    }
    Ok(measure)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingMeasureReport {
    /// Largest empirical point mass.
    pub max: Estimate,
    /// `m³ · max`.
    pub scaled_max: f64,
    pub argmax: Vec<i32>,
    pub support: usize,
}

/// Largest point mass of the first-visit distribution on `∂B(m)` from
/// `x ∈ B(n)`, `m ≥ 2n`.
pub fn hitting_measure_max<const D: usize>(
    n: f64,
    m: f64,
    x: LatticePoint<D>,
    replicas: u64,
    rng: &RandomStream,
) -> Result<HittingMeasureReport> {
    if !BallSpec::<D>::centered(n)?.contains(&x) {
        return Err(Error::Domain(format!("start {x:?} is outside B({n})")));
    }
    if m < 2.0 * n {
        return Err(Error::Domain(format!("need m >= 2n, got m = {m}, n = {n}")));
    }
    let measure = exit_measure(x, m, replicas, rng)?;
    let (argmax, count) = measure
        .iter()
        .fold((LatticePoint::origin(), 0u64), |best, (p, &c)| if c > best.1 { (*p, c) } else { best });
    let max = Estimate::proportion(count, replicas, rng);
    Ok(HittingMeasureReport {
        scaled_max: m.powi(3) * max.value,
        max,
        argmax: argmax.coords().to_vec(),
        support: measure.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    pub estimate: Estimate,
    /// `(n - |x|) / k`, the shape of the bound.
    pub bound_ratio: f64,
}

/// Probability that a walk from `x`, stopped on `∂B(n)`, leaves `B(x, k)`.
pub fn escape_curved_boundary_prob<const D: usize>(
    n: f64,
    x: LatticePoint<D>,
    k: f64,
    replicas: u64,
    rng: &RandomStream,
) -> Result<EscapeReport> {
    check_replicas(replicas)?;
    check_positive("k", k)?;
    let ball = BallSpec::<D>::centered(n)?;
    if !ball.contains(&x) {
        return Err(Error::Domain(format!("start {x:?} is outside B({n})")));
    }
    let local = BallSpec::new(x, k)?;
    let local_sq = local.max_inside_sq();
    let cap = default_step_cap(n);
    let escaped = replicate(rng, replicas, |_, r| {
        let mut cur = Cursor::new(&x, &LatticePoint::origin());
        let mut rel = Cursor::new(&x, &x);
        let mut steps = 0u64;
        loop {
            if rel.dist_sq > local_sq {
                return Ok(true);
            }
            if cur.region(&ball) == Region::Boundary {
                return Ok(false);
            }
            if steps >= cap {
                return Err(Error::HorizonExceeded { cap });
            }
            let dir = r.direction(2 * D);
            cur.step(dir);
            rel.step(dir);
            steps += 1;
        }
    });
    let escaped: Vec<bool> = escaped.into_iter().collect::<Result<_>>()?;
    Ok(EscapeReport {
        estimate: Estimate::proportion(count_true(&escaped), replicas, rng),
        bound_ratio: (n - x.norm()) / k,
    })
}

/// `Σ_{t=1}^{n} (|R(t)| + 1)^{-2}` for walks from the origin.
pub fn inverse_square_sums<const D: usize>(n: u64, replicas: u64, rng: &RandomStream) -> Result<Vec<f64>> {
    check_replicas(replicas)?;
    if n == 0 {
        return Err(Error::Domain("n must be positive".into()));
    }
    Ok(replicate(rng, replicas, |_, r| {
        let mut cur = Cursor::<D>::new(&LatticePoint::origin(), &LatticePoint::origin());
        let mut sum = 0.0;
        for _ in 0..n {
            cur.random_step(r);
            let d = (cur.dist_sq as f64).sqrt() + 1.0;
            sum += 1.0 / (d * d);
        }
        sum
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseSquareReport {
    pub n: u64,
    pub k: f64,
    pub mean: Estimate,
    /// `P(sum > K log2 n)`.
    pub upper_tail: Estimate,
    /// `P(sum < log2 n / K)`.
    pub lower_tail: Estimate,
}

pub fn inverse_square_tails<const D: usize>(n: u64, k: f64, replicas: u64, rng: &RandomStream) -> Result<InverseSquareReport> {
    check_positive("K", k)?;
    let sums = inverse_square_sums::<D>(n, replicas, rng)?;
    let log_n = (n as f64).log2();
    let upper = sums.iter().filter(|&&s| s > k * log_n).count() as u64;
    let lower = sums.iter().filter(|&&s| s < log_n / k).count() as u64;
    Ok(InverseSquareReport {
        n,
        k,
        mean: Estimate::mean(&sums, rng),
        upper_tail: Estimate::proportion(upper, replicas, rng),
        lower_tail: Estimate::proportion(lower, replicas, rng),
    })
}

/// Empirical `q`-quantile (nearest rank) of `samples`.
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    assert!(!samples.is_empty());
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annulus_limit_values() {
        assert!((annulus_exit_limit(0.5, 2.0).unwrap() - 0.8).abs() < 1e-15);
        assert!((annulus_exit_limit(0.5, 1e12).unwrap() - 0.75).abs() < 1e-12);
        assert!(annulus_exit_limit(1.5, 2.0).is_err());
        assert!(annulus_exit_limit(0.5, 1.0).is_err());
        assert!(annulus_exit_limit(0.0, 2.0).is_err());
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let rng = RandomStream::new(0, 0);
        for (s, n) in [(0u64, 10u64), (3, 10), (10, 10), (500, 1000)] {
            let e = Estimate::proportion(s, n, &rng);
            assert!(e.ci95.0 <= e.value && e.value <= e.ci95.1, "{e:?}");
            assert!(e.ci95.0 >= 0.0 && e.ci95.1 <= 1.0);
        }
    }

    #[test]
    fn quantile_nearest_rank() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
    }

    #[test]
    fn green_at_origin_is_one() {
        let rng = RandomStream::new(0, 0);
        let g = estimate_green(LatticePoint::<4>::origin(), 10, &rng, 5.0).unwrap();
        assert_eq!(g.estimate.value, 1.0);
        assert_eq!(g.estimate.stderr, 0.0);
    }

    #[test]
    fn green_rejects_small_truncation() {
        let rng = RandomStream::new(0, 0);
        assert!(estimate_green(LatticePoint::<4>::on_axis(0, 3), 10, &rng, 12.0).is_err());
    }

    #[test]
    fn escape_impossible_for_large_k() {
        let rng = RandomStream::new(1, 0);
        let x = LatticePoint::<4>::on_axis(0, 5);
        let e = escape_curved_boundary_prob(10.0, x, 20.0, 2000, &rng).unwrap();
        assert_eq!(e.estimate.value, 0.0);
    }
}
