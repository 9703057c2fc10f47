use avoidance_core::estimators::{
    annulus_exit_limit, annulus_exit_prob, boundary_layer_counts, boundary_layer_tail, escape_curved_boundary_prob,
    estimate_green, exit_measure, exit_time_tail, hitting_measure_max, inverse_square_sums, inverse_square_tails,
    layer_tail_from_counts,
};
use avoidance_core::{Estimate, LatticePoint, RandomStream};

type P4 = LatticePoint<4>;

fn e1(k: i32) -> P4 {
    P4::new([k, 0, 0, 0])
}

#[test]
fn annulus_estimate_orders_with_outer_radius() {
    let rng = RandomStream::new(3, 0);
    let est: Vec<f64> = [1.5, 2.0, 4.0]
        .iter()
        .map(|&big_a| annulus_exit_prob::<4>(20.0, 0.51, big_a, 4000, &rng).unwrap().value)
        .collect();
    assert!(est[0] >= est[1] && est[1] >= est[2], "{est:?}");
    assert!(est[0] > est[2]);
    let limits: Vec<f64> = [1.5, 2.0, 4.0].iter().map(|&a| annulus_exit_limit(0.51, a).unwrap()).collect();
    assert!(limits[0] > limits[1] && limits[1] > limits[2]);
}

#[test]
fn thin_annulus_probability_is_proper() {
    let rng = RandomStream::new(4, 0);
    let e = annulus_exit_prob::<4>(500.0, 0.99, 1.01, 2000, &rng).unwrap();
    assert!(e.value > 0.0 && e.value < 1.0, "{}", e.value);
    let limit = annulus_exit_limit(0.99, 1.01).unwrap();
    assert!((e.value - limit).abs() < 0.1, "{} vs {limit}", e.value);
}

#[test]
fn annulus_rejects_bad_radii() {
    let rng = RandomStream::new(0, 0);
    assert!(annulus_exit_prob::<4>(100.0, 1.5, 2.0, 10, &rng).is_err());
    assert!(annulus_exit_prob::<4>(2.0, 0.9, 2.0, 10, &rng).is_err());
}

#[test]
fn green_decays_with_distance() {
    let rng = RandomStream::new(5, 0);
    let near = estimate_green(e1(2), 40_000, &rng, 9.0).unwrap();
    let far = estimate_green(e1(4), 40_000, &rng, 17.0).unwrap();
    assert!(near.estimate.value > far.estimate.value);
    assert!(near.bias_bound > 0.0 && near.bias_bound < 1.0);
}

#[test]
fn green_truncation_radii_agree() {
    let rng = RandomStream::new(6, 0);
    let r = 9.0;
    let a = estimate_green(e1(2), 100_000, &rng, r).unwrap();
    let b = estimate_green(e1(2), 100_000, &rng.fork("wide"), 2.0 * r).unwrap();
    let se = (a.estimate.stderr.powi(2) + b.estimate.stderr.powi(2)).sqrt();
    assert!((a.estimate.value - b.estimate.value).abs() <= 3.0 * se + a.bias_bound);
}

#[test]
fn exit_time_mean_and_tails() {
    let rng = RandomStream::new(7, 0);
    let n = 10.0;
    let report = exit_time_tail::<4>(n, 20_000, &rng).unwrap();
    assert!(report.mean.value >= n * n / 20.0 && report.mean.value <= 20.0 * n * n);
    let tails: Vec<f64> = report.tails.iter().map(|(_, e)| e.value).collect();
    assert!(tails.windows(2).all(|w| w[0] >= w[1]), "{tails:?}");
    assert!(tails.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn exit_tail_decays_log_linearly() {
    let rng = RandomStream::new(8, 0);
    let n = 10.0;
    let report = exit_time_tail::<4>(n, 100_000, &rng).unwrap();
    let (t2, p2) = report.tails[1];
    let (t4, p4) = report.tails[2];
    assert!(p4.value > 0.0);
    let slope = (p2.value.log2() - p4.value.log2()) / ((t4 - t2) as f64 / (n * n));
    assert!(slope >= 0.5, "slope {slope}");
}

#[test]
fn layer_tail_is_one_for_tiny_lambda() {
    let rng = RandomStream::new(9, 0);
    let e = boundary_layer_tail::<4>(15.0, 5.0, 1e-9, 2000, &rng).unwrap();
    assert_eq!(e.value, 1.0);
}

#[test]
fn layer_tail_decreases_in_lambda() {
    let rng = RandomStream::new(10, 0);
    let counts = boundary_layer_counts::<4>(15.0, 5.0, 20_000, &rng).unwrap();
    let tail: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|&l| layer_tail_from_counts(&counts, 5.0, l, &rng).value)
        .collect();
    assert!(tail.windows(2).all(|w| w[0] >= w[1]), "{tail:?}");
    // Once below one half, each doubling of λ removes a constant factor.
    let small: Vec<f64> = tail.iter().copied().filter(|&p| p < 0.5 && p > 0.0).collect();
    for w in small.windows(2) {
        assert!(w[1] <= w[0], "{tail:?}");
    }
}

#[test]
fn layer_requires_k_below_n() {
    let rng = RandomStream::new(0, 0);
    assert!(boundary_layer_counts::<4>(10.0, 10.0, 10, &rng).is_err());
}

#[test]
fn exit_measure_is_normalized_and_symmetric() {
    let rng = RandomStream::new(11, 0);
    let replicas = 200_000;
    let m = 4.0;
    let measure = exit_measure(P4::origin(), m, replicas, &rng).unwrap();
    assert_eq!(measure.values().sum::<u64>(), replicas);
    for (y, &c) in &measure {
        let mirror = P4::new(y.coords().map(|v| -v));
        let c2 = measure.get(&mirror).copied().unwrap_or(0);
        let p = c as f64 / replicas as f64;
        let q = c2 as f64 / replicas as f64;
        let se = ((p * (1.0 - p) + q * (1.0 - q)) / replicas as f64).sqrt();
        assert!((p - q).abs() <= 4.0 * se + 1e-12, "{y:?}: {p} vs {q}");
    }
}

#[test]
fn hitting_measure_checks_preconditions() {
    let rng = RandomStream::new(0, 0);
    assert!(hitting_measure_max(5.0, 8.0, P4::origin(), 10, &rng).is_err());
    assert!(hitting_measure_max(5.0, 10.0, e1(6), 10, &rng).is_err());
    let r = hitting_measure_max(5.0, 10.0, e1(2), 5000, &rng).unwrap();
    assert!((r.scaled_max - 1000.0 * r.max.value).abs() < 1e-9);
    assert!(r.support > 0);
}

#[test]
fn escape_is_nonincreasing_in_k() {
    let rng = RandomStream::new(12, 0);
    let n = 20.0;
    let x = e1(18);
    let est: Vec<f64> = [2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&k| escape_curved_boundary_prob(n, x, k, 5000, &rng).unwrap().estimate.value)
        .collect();
    assert!(est.windows(2).all(|w| w[0] >= w[1]), "{est:?}");
}

#[test]
fn inverse_square_single_step_is_a_quarter() {
    let rng = RandomStream::new(13, 0);
    let sums = inverse_square_sums::<4>(1, 100, &rng).unwrap();
    assert!(sums.iter().all(|&s| s == 0.25));
}

#[test]
fn inverse_square_tails_shrink_with_k() {
    let rng = RandomStream::new(14, 0);
    let loose = inverse_square_tails::<4>(1000, 2.0, 2000, &rng).unwrap();
    let tight = inverse_square_tails::<4>(1000, 8.0, 2000, &rng).unwrap();
    assert!(tight.upper_tail.value <= loose.upper_tail.value);
    assert!(tight.lower_tail.value <= loose.lower_tail.value);
    assert!(loose.mean.value > 0.25);
}

#[test]
fn stderr_shrinks_under_replica_doubling() {
    let mut shrunk = 0;
    for rep in 0..10 {
        let rng = RandomStream::new(100 + rep, 0);
        let small = inverse_square_sums::<4>(50, 2000, &rng).unwrap();
        let large = inverse_square_sums::<4>(50, 4000, &rng.fork("double")).unwrap();
        let a = Estimate::mean(&small, &rng).stderr;
        let b = Estimate::mean(&large, &rng).stderr;
        if b <= 0.8 * a {
            shrunk += 1;
        }
    }
    assert!(shrunk >= 8, "only {shrunk} of 10 shrank");
}
