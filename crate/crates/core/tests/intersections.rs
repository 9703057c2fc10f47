use std::collections::HashSet;

use avoidance_core::intersections::{
    classify_good_times, event_h_from_profile, event_h_profile, event_h_threshold, expected_intersections,
    hittability_sweep, hittability_tail, intersection_prob, intersection_sums, moment_from_sums, moment_sum,
    trace_intersection, EventHConfig, HittabilityParams,
};
use avoidance_core::lattice::{log2, SEPARATION_BUDGET};
use avoidance_core::walker::{enumerate_paths, walk_fixed_length, walk_to_boundary, ENUMERATION_BUDGET};
use avoidance_core::{BallSpec, BoundarySampler, Estimate, LatticePoint, RandomStream, WalkPath};

type P4 = LatticePoint<4>;

fn e1(k: i32) -> P4 {
    P4::new([k, 0, 0, 0])
}

fn unit_moves() -> Vec<[i32; 4]> {
    let mut out = Vec::new();
    for axis in 0..4 {
        for sign in [1, -1] {
            let mut v = [0; 4];
            v[axis] = sign;
            out.push(v);
        }
    }
    out
}

fn two_step_traces(start: [i32; 4]) -> Vec<HashSet<[i32; 4]>> {
    let add = |a: [i32; 4], b: [i32; 4]| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]];
    let moves = unit_moves();
    let mut out = Vec::new();
    for a in &moves {
        for b in &moves {
            let p1 = add(start, *a);
            let p2 = add(p1, *b);
            out.push([start, p1, p2].into_iter().collect());
        }
    }
    out
}

#[test]
fn two_step_pair_count_matches_direct_enumeration() {
    let left = enumerate_paths(P4::origin(), 2, None, ENUMERATION_BUDGET).unwrap();
    let right = enumerate_paths(e1(2), 2, None, ENUMERATION_BUDGET).unwrap();
    let meeting = left
        .paths()
        .iter()
        .flat_map(|a| right.paths().iter().map(move |b| (a, b)))
        .filter(|(a, b)| trace_intersection(a, b).0 > 0)
        .count();

    let l = two_step_traces([0; 4]);
    let r = two_step_traces([2, 0, 0, 0]);
    let oracle = l
        .iter()
        .flat_map(|a| r.iter().map(move |b| (a, b)))
        .filter(|(a, b)| !a.is_disjoint(b))
        .count();
    assert_eq!(meeting, oracle);
    assert!(oracle > 0 && oracle < 64 * 64);
}

#[test]
fn intersection_is_symmetric_and_self_full() {
    let mut rng = RandomStream::new(1, 0);
    let a = walk_fixed_length(P4::origin(), 200, &mut rng, None);
    let b = walk_fixed_length(e1(3), 200, &mut rng, None);
    assert_eq!(trace_intersection(&a, &b), trace_intersection(&b, &a));
    assert_eq!(trace_intersection(&a, &a).0, a.trace().len());
    let p = WalkPath::from_vertices(vec![P4::origin()], None);
    let q = WalkPath::from_vertices(vec![e1(1)], None);
    assert_eq!(trace_intersection(&p, &q).0, 0);
}

#[test]
fn short_walks_flag_the_hypothesis() {
    let rng = RandomStream::new(2, 0);
    let r = expected_intersections(e1(4), 16, 200, &rng, 8.0).unwrap();
    assert!(!r.hypothesis_ok);
    assert!(r.estimate.value >= 0.0);
    let ok = expected_intersections(e1(4), 64, 200, &rng, 8.0).unwrap();
    assert!(ok.hypothesis_ok);
}

#[test]
fn far_walks_rarely_meet() {
    let rng = RandomStream::new(3, 0);
    let r = expected_intersections(e1(200), 16, 300, &rng, 1.2).unwrap();
    assert!(r.estimate.ci95.0 <= 0.05, "{:?}", r.estimate);
}

#[test]
fn shared_start_always_meets() {
    let rng = RandomStream::new(4, 0);
    let e = intersection_prob(e1(1), e1(1), 10.0, 5, &rng).unwrap();
    assert_eq!(e.value, 1.0);
}

#[test]
fn meeting_probability_falls_with_separation() {
    let rng = RandomStream::new(5, 0);
    let est: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&d| {
            let half = d / 2;
            intersection_prob(e1(-half), e1(half), 2.0 * d as f64, 3000, &rng).unwrap().value
        })
        .collect();
    assert!(est[0] > est[2], "{est:?}");
    assert!(est.iter().all(|&p| p > 0.0 && p < 1.0));
}

#[test]
fn adjacent_starts_meet_with_intermediate_probability() {
    let rng = RandomStream::new(6, 0);
    let e = intersection_prob(P4::origin(), e1(1), 64.0, 400, &rng).unwrap();
    assert!(e.value > 0.0 && e.value < 1.0, "{}", e.value);
}

#[test]
fn zeroth_moment_is_one() {
    let rng = RandomStream::new(7, 0);
    let r = moment_sum::<4>(8.0, 32.0, 4, 0, 10, &rng).unwrap();
    assert_eq!(r.estimate.value, 1.0);
    assert_eq!(r.estimate.stderr, 0.0);
    assert!(moment_sum::<4>(8.0, 32.0, 4, 9, 10, &rng).is_err());
}

#[test]
fn second_moment_dominates_squared_mean() {
    let rng = RandomStream::new(8, 0);
    let sums = intersection_sums::<4>(8.0, 32.0, 4, 2000, &rng).unwrap();
    let m1 = moment_from_sums(&sums, 1, &rng);
    let m2 = moment_from_sums(&sums, 2, &rng);
    let se = (m2.stderr.powi(2) + (2.0 * m1.value * m1.stderr).powi(2)).sqrt();
    assert!(m2.value >= m1.value * m1.value - 3.0 * se);
}

#[test]
fn single_walk_moment_matches_direct_pair_intersections() {
    let (n, m) = (8.0, 24.0);
    let rng = RandomStream::new(9, 0);
    let moment = moment_sum::<4>(n, m, 1, 1, 4000, &rng).unwrap().estimate;

    let sampler = BoundarySampler::new(BallSpec::<4>::centered(n).unwrap());
    let outer = BallSpec::<4>::centered(m).unwrap();
    let mut r = RandomStream::new(90, 0);
    let counts: Vec<f64> = (0..4000)
        .map(|_| {
            let ((a, b), _) = sampler.sample_separated_pair(n / log2(n), &mut r, SEPARATION_BUDGET).unwrap();
            let wa = walk_to_boundary(a, &outer, &mut r, 0).unwrap();
            let wb = walk_to_boundary(b, &outer, &mut r, 0).unwrap();
            trace_intersection(&wa, &wb).0 as f64
        })
        .collect();
    let direct = Estimate::mean(&counts, &r);
    let se = (moment.stderr.powi(2) + direct.stderr.powi(2)).sqrt();
    assert!((moment.value - direct.value).abs() <= 3.0 * se, "{} vs {}", moment.value, direct.value);
}

#[test]
fn huge_lambda_marks_every_time_good() {
    let mut rng = RandomStream::new(10, 0);
    let path = walk_fixed_length(P4::origin(), 300, &mut rng, None);
    let mask = classify_good_times(&path, 64.0, 1e9, 8).unwrap();
    assert!(!mask.flags.is_empty());
    assert_eq!(mask.bad_count(), 0);
}

#[test]
fn good_times_are_deterministic_and_shift_invariant() {
    let mut rng = RandomStream::new(11, 0);
    let path = walk_fixed_length(P4::origin(), 400, &mut rng, None);
    let (n, lambda, w) = (64.0, 2.0, 10);
    let mask = classify_good_times(&path, n, lambda, w).unwrap();
    assert_eq!(mask, classify_good_times(&path, n, lambda, w).unwrap());
    for t in [0, 7, 50, 123] {
        let shifted = classify_good_times(&path.suffix_from(t), n, lambda, w).unwrap();
        assert_eq!(shifted.flags[0], mask.flags[t], "time {t}");
    }
}

#[test]
fn epsilon_one_makes_every_path_hittable() {
    let rng = RandomStream::new(12, 0);
    let params = HittabilityParams {
        n: 8.0,
        m: 16.0,
        epsilon: 1.0,
        outer_replicas: 20,
        inner_replicas: 10,
    };
    let r = hittability_tail::<4>(&params, &rng).unwrap();
    assert_eq!(r.delta.value, 1.0);
    assert!(!r.warnings.is_empty());
}

#[test]
fn hittability_is_monotone_in_epsilon() {
    let rng = RandomStream::new(13, 0);
    let eps = [0.05, 0.1, 0.2, 0.4, 0.6, 0.9];
    let sweep = hittability_sweep::<4>(4.0, 6.0, &eps, 200, 100, &rng).unwrap();
    let deltas: Vec<f64> = sweep.iter().map(|r| r.delta.value).collect();
    assert!(deltas.windows(2).all(|w| w[0] <= w[1]), "{deltas:?}");
}

#[test]
fn event_h_vanishes_for_large_c1_and_decreases_in_c1() {
    let rng = RandomStream::new(14, 0);
    let n = 16.0;
    let k = n / log2(n);
    let config = EventHConfig {
        grid: 8,
        inner: 16,
        truncation_factor: 4.0,
    };
    let profile = event_h_profile::<4>(n, k, 40, &config, &rng).unwrap();
    let at = |c1: f64| event_h_from_profile(&profile, n, k, c1, config.truncation_factor, &rng).estimate.value;
    let est: Vec<f64> = [0.1, 0.2, 2.0, 4.0, 8.0].iter().map(|&c| at(c)).collect();
    assert!(est.windows(2).all(|w| w[0] >= w[1]), "{est:?}");
    assert!(event_h_threshold(n, k, 1e6) > 1.0);
    assert_eq!(at(1e6), 0.0);
}
