//! The verification suite run by `verify-all`.
//!
//! Every check draws from the same stream as the subcommand it exercises,
//! so each measured value can be reproduced by running that subcommand with
//! the parameters listed in the record's details.

use std::collections::HashSet;

use fixedbitset::FixedBitSet;
use num_traits::One;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use avoidance_core::coupling::{
    hall_by_enumeration, hall_by_matching, max_matching, multiscale_drive, one_step_couple, BipartiteInstance,
    DriveConfig, EventSpecs, OneStep, StepConfig,
};
use avoidance_core::estimators::{
    annulus_exit_limit, annulus_exit_prob, estimate_green, exit_time_tail, inverse_square_sums, inverse_square_tails,
    quantile,
};
use avoidance_core::intersections::{expected_intersections, hittability_sweep};
use avoidance_core::par::try_replicate;
use avoidance_core::{LatticePoint, RandomStream, Weight};

use crate::commands::{command_stream, execute};
use crate::config::{Command, RunConfig};
use crate::oracles::{adding_vertex_table, truncated_green_e1};
use crate::report::Report;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// The acceptance budgets.
    Full,
    /// Small budgets for smoke runs; thresholds are unchanged.
    Quick,
}

impl Scale {
    fn pick<T>(self, full: T, quick: T) -> T {
        match self {
            Scale::Full => full,
            Scale::Quick => quick,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    /// Smallest slack over the check's numeric conditions; negative when one
    /// of them fails.
    pub margin: f64,
    pub summary: String,
    pub details: Json,
}

impl CheckRecord {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<28} {}  margin {:+.4e}  {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.margin,
            self.summary
        )
    }
}

/// Conditions of one check, each recorded with its slack.
#[derive(Default)]
struct Conditions {
    items: Vec<Json>,
    passed: bool,
    margin: Option<f64>,
}

impl Conditions {
    fn new() -> Self {
        Self {
            passed: true,
            ..Self::default()
        }
    }

    /// Holds iff `slack >= 0`.
    fn slack(&mut self, name: &str, slack: f64) {
        let ok = slack >= 0.0;
        self.passed &= ok;
        self.margin = Some(self.margin.map_or(slack, |m| m.min(slack)));
        self.items.push(json!({ "condition": name, "slack": slack, "ok": ok }));
    }

    fn holds(&mut self, name: &str, ok: bool) {
        self.passed &= ok;
        if !ok {
            self.margin = Some(self.margin.map_or(-1.0, |m| m.min(-1.0)));
        }
        self.items.push(json!({ "condition": name, "ok": ok }));
    }

    fn finish(self, id: u32, name: &str, summary: String, mut details: Json) -> CheckRecord {
        details["conditions"] = Json::Array(self.items);
        CheckRecord {
            id,
            name: name.to_string(),
            passed: self.passed,
            margin: self.margin.unwrap_or(0.0),
            summary,
            details,
        }
    }
}

pub fn run_check(id: u32, scale: Scale, seed: u64) -> Result<CheckRecord, CliError> {
    match id {
        1 => annulus(scale, seed),
        2 => green(scale, seed),
        3 => intersections(scale, seed),
        4 => exit_time(scale, seed),
        5 => inverse_square(scale, seed),
        6 => hittability(scale, seed),
        7 => adding_vertex(scale),
        8 => coupling_step(scale, seed),
        9 => drive(scale, seed),
        10 => determinism(scale, seed),
        other => Err(CliError::Usage(crate::config::UsageError::Invalid {
            key: "checks".into(),
            message: format!("no check numbered {other}"),
        })),
    }
}

fn e1(k: i32) -> LatticePoint<4> {
    LatticePoint::on_axis(0, k)
}

fn annulus(scale: Scale, seed: u64) -> Result<CheckRecord, CliError> {
    let replicas = scale.pick(200_000, 2_000);
    let (n, a, big_a) = (100.0, 0.51, 2.0);
    let target = 0.79139;
    let limit = annulus_exit_limit(a, big_a)?;
    let estimate = annulus_exit_prob::<4>(n, a, big_a, replicas, &command_stream(seed, Command::Annulus))?;
    let half = annulus_exit_limit(0.5, 2.0)?;
    let mut c = Conditions::new();
    c.slack("|p - 0.79139| <= 3 stderr", 3.0 * estimate.stderr - (estimate.value - target).abs());
    c.slack("limit formula within 1e-4 of 0.79139", 1e-4 - (limit - target).abs());
    c.slack("stderr < 0.003", 0.003 - estimate.stderr);
    c.holds("limit at a = 1/2 is 4/5", (half - 0.8).abs() < 1e-12);
    let summary = format!("p = {:.5} ± {:.5}, limit {:.5}", estimate.value, estimate.stderr, limit);
    let details = json!({ "n": n, "a": a, "A": big_a, "replicas": replicas, "estimate": estimate, "limit": limit, "limit_half": half });
    Ok(c.finish(1, "annulus exit", summary, details))
}

/// Least-squares slope of `ys` on `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn green(scale: Scale, seed: u64) -> Result<CheckRecord, CliError> {
    let replicas = scale.pick(1_000_000, 20_000);
    let radius = scale.pick(40.0, 12.0);
    let rng = command_stream(seed, Command::Green);
    let mut points = Vec::new();
    for k in [4, 8, 16, 32] {
        let x = e1(k);
        let g = estimate_green(x, replicas, &rng, 4.0 * x.norm() + 1.0)?;
        points.push((k, g));
    }
    let positive = points.iter().all(|(_, g)| g.estimate.value > 0.0);
    let xs: Vec<f64> = points.iter().map(|(k, _)| (*k as f64).log2()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, g)| g.estimate.value.log2()).collect();
    let fitted = if positive { slope(&xs, &ys) } else { f64::NAN };
    let near = estimate_green(e1(1), replicas, &rng, radius)?;
    let oracle = truncated_green_e1(radius, 1e-11);
    let mut c = Conditions::new();
    c.holds("every estimate is positive", positive);
    c.slack("slope in [-2.3, -1.7]", (fitted + 2.3).min(-1.7 - fitted));
    c.slack(
        "G(0, e1) within 3 stderr of the linear solve",
        3.0 * near.estimate.stderr - (near.estimate.value - oracle).abs(),
    );
    let summary = format!(
        "slope {:.3}; G(0,e1) = {:.5} ± {:.5} vs {:.5}",
        fitted, near.estimate.value, near.estimate.stderr, oracle
    );
    let details = json!({
        "replicas": replicas,
        "points": points.iter().map(|(k, g)| json!({ "x": e1(*k).coords(), "estimate": g })).collect::<Vec<_>>(),
        "slope": fitted,
        "near": { "x": e1(1).coords(), "truncation": radius, "estimate": near, "oracle": oracle },
    });
    Ok(c.finish(2, "green decay", summary, details))
}

fn intersections(scale: Scale, seed: u64) -> Result<CheckRecord, CliError> {
    let replicas = scale.pick(20_000, 500);
    let rng = command_stream(seed, Command::Intersect);
    let x = e1(4);
    let mut values = Vec::new();
    for n in [64u64, 256, 1024] {
        values.push((n, expected_intersections(x, n, replicas, &rng, 8.0)?));
    }
    let v: Vec<f64> = values.iter().map(|(_, r)| r.estimate.value).collect();
    let (d1, d2) = (v[1] - v[0], v[2] - v[1]);
    let ratio = if d1 > 0.0 && d2 > 0.0 { d1.max(d2) / d1.min(d2) } else { f64::INFINITY };
    let mut c = Conditions::new();
    c.slack("E(256) > E(64)", d1);
    c.slack("E(1024) > E(256)", d2);
    c.slack("increments within a factor 3", 3.0 - ratio);
    let summary = format!("E = {:.4}, {:.4}, {:.4}; increment ratio {:.3}", v[0], v[1], v[2], ratio);
    let details = json!({
        "x": x.coords(),
        "replicas": replicas,
        "truncation_factor": 8.0,
        "estimates": values.iter().map(|(n, r)| json!({ "steps": n, "report": r })).collect::<Vec<_>>(),
        "increments": [d1, d2],
    });
    Ok(c.finish(3, "intersection expectation", summary, details))
}

fn exit_time(scale: Scale, seed: u64) -> Result<CheckRecord, CliError> {
    let replicas = scale.pick(100_000, 2_000);
    let rng = command_stream(seed, Command::ExitTime);
    let mut means = Vec::new();
    for n in [10.0, 20.0, 40.0] {
        means.push(exit_time_tail::<4>(n, replicas, &rng)?.mean);
    }
    let ratios = [means[1].value / means[0].value, means[2].value / means[1].value];
    let mut c = Conditions::new();
    for (i, r) in ratios.iter().enumerate() {
        c.slack(&format!("ratio {} in [2.5, 6]", i + 1), (r - 2.5).min(6.0 - r));
    }
    let summary = format!(
        "means {:.1}, {:.1}, {:.1}; ratios {:.3}, {:.3}",
        means[0].value, means[1].value, means[2].value, ratios[0], ratios[1]
    );
    let details = json!({ "replicas": replicas, "n": [10.0, 20.0, 40.0], "means": means, "ratios": ratios });
    Ok(c.finish(4, "exit time scaling", summary, details))
}

fn inverse_square(scale: Scale, seed: u64) -> Result<CheckRecord, CliError> {
    let replicas = scale.pick(10_000, 1_000);
    let (small, large) = scale.pick((1_000u64, 10_000u64), (100, 1_000));
    let rng = command_stream(seed, Command::Invsq);
    let sums = inverse_square_sums::<4>(small, replicas, &rng)?;
    // K is the smallest constant leaving both tails at most 0.001 at the
    // small scale.
    let log_n = (small as f64).log2();
    let k = (quantile(&sums, 0.999) / log_n).max(log_n / quantile(&sums, 0.001));
    let report = inverse_square_tails::<4>(large, k, replicas, &rng)?;
    let mut c = Conditions::new();
    c.slack("upper tail <= 0.01", 0.01 - report.upper_tail.value);
    c.slack("lower tail <= 0.05", 0.05 - report.lower_tail.value);
    let summary = format!(
        "K = {:.4}; upper {:.4}, lower {:.4}",
        k, report.upper_tail.value, report.lower_tail.value
    );
    let details = json!({ "replicas": replicas, "calibration_n": small, "K": k, "report": report });
    Ok(c.finish(5, "inverse-square tails", summary, details))
}

fn hittability(scale: Scale, seed: u64) -> Result<CheckRecord, CliError> {
    let budget = scale.pick(400, 24);
    let (small, large) = scale.pick((32.0, 64.0), (8.0, 16.0));
    let eps = [0.1, 0.2, 0.4];
    let rng = command_stream(seed, Command::Hittability);
    let calibration = hittability_sweep::<4>(small, 4.0 * small, &eps, budget, budget, &rng)?;
    // The upper end of each interval keeps K finite and positive when the
    // small-scale estimates vanish.
    let k = calibration
        .iter()
        .map(|r| r.delta.ci95.1 / r.params.epsilon)
        .fold(0.0, f64::max);
    let sweep = hittability_sweep::<4>(large, 4.0 * large, &eps, budget, budget, &rng)?;
    let deltas: Vec<f64> = sweep.iter().map(|r| r.delta.value).collect();
    let mut c = Conditions::new();
    for w in 0..deltas.len() - 1 {
        c.slack(&format!("delta({}) <= delta({})", eps[w], eps[w + 1]), deltas[w + 1] - deltas[w]);
    }
    for (e, d) in eps.iter().zip(&deltas) {
        c.slack(&format!("delta({e}) <= K eps"), k * e - d);
    }
    let summary = format!("K = {:.4}; delta = {:?}", k, deltas);
    let details = json!({
        "budget": budget,
        "calibration": { "n": small, "m": 4.0 * small, "sweep": calibration },
        "K": k,
        "assertion": { "n": large, "m": 4.0 * large, "sweep": sweep },
    });
    Ok(c.finish(6, "hittability tail", summary, details))
}

fn adding_vertex(scale: Scale) -> Result<CheckRecord, CliError> {
    let (fit, checked, reach) = scale.pick((4, vec![5, 6], 3), (3, vec![4], 2));
    let worst = |table: &[crate::oracles::AddingVertex]| {
        table
            .iter()
            .max_by(|a, b| a.scaled_ratio().total_cmp(&b.scaled_ratio()))
            .cloned()
            .expect("tables are nonempty")
    };
    let calibration = adding_vertex_table(fit, reach);
    let bound = worst(&calibration).scaled_ratio();
    let mut c = Conditions::new();
    let mut total = calibration.len();
    let mut per_horizon = Vec::new();
    for &t in &checked {
        let table = adding_vertex_table(t, reach);
        total += table.len();
        let w = worst(&table);
        c.slack(&format!("T = {t}: ratio * (dist + 1)^2 <= C"), bound - w.scaled_ratio());
        per_horizon.push(json!({ "horizon": t, "configurations": table.len(), "max": w.scaled_ratio(), "worst": w.points }));
    }
    c.holds("at least 50 configurations", total >= 50);
    let summary = format!("C = {:.4} from T = {fit}; {total} configurations", bound);
    let details = json!({ "calibration_horizon": fit, "reach": reach, "C": bound, "configurations": total, "checked": per_horizon });
    Ok(c.finish(7, "adding one vertex", summary, details))
}

fn exact_step(horizon: usize, separation: Option<f64>, rng: &RandomStream) -> Result<OneStep<4>, CliError> {
    let mut config = StepConfig::exact(horizon);
    config.separation = separation;
    Ok(one_step_couple(LatticePoint::origin(), e1(1), 1.5, 3.0, &EventSpecs::default(), &config, rng)?)
}

/// Marginals and disjointness of a coupling table, checked directly.
fn table_is_valid(step: &OneStep<4>) -> (bool, bool) {
    let unit = step.table.unit_weight();
    let exact = |m: Vec<Weight>| m.iter().all(|w| *w == unit) && m.iter().copied().sum::<Weight>() == Weight::one();
    let marginals = step.table.verify_marginals().is_ok()
        && exact(step.table.left_marginal())
        && exact(step.table.right_marginal());
    let disjoint = step.table.matched_pairs().iter().all(|&(i, j)| {
        let left: HashSet<_> = step.sets.left.paths()[i].stopped_vertices().iter().collect();
        step.sets.right.paths()[j].stopped_vertices().iter().all(|v| !left.contains(v))
    });
    (marginals, disjoint)
}

/// `size` distinct members of `pool`, as a mask over `0..len`.
fn random_mask(pool: &[usize], len: usize, size: usize, rng: &mut RandomStream) -> FixedBitSet {
    let mut mask = FixedBitSet::with_capacity(len);
    while mask.count_ones(..) < size.min(pool.len()) {
        mask.insert(pool[rng.below(pool.len() as u64) as usize]);
    }
    mask
}

fn coupling_step(scale: Scale, seed: u64) -> Result<CheckRecord, CliError> {
    let instances = scale.pick(100, 10);
    let rng = command_stream(seed, Command::CoupleStep);
    let mut c = Conditions::new();

    // (a) Hall's condition against perfect matchings on random subgraphs.
    let base = exact_step(3, None, &rng)?;
    let instance = BipartiteInstance::full(&base.sets.left, &base.sets.right, base.sets.separation);
    let reached = |set: &avoidance_core::PathSet<4>| -> Vec<usize> {
        (0..set.len()).filter(|&i| set.paths()[i].hit_point().is_some()).collect()
    };
    let (left_pool, right_pool) = (reached(&base.sets.left), reached(&base.sets.right));
    let mut pick = RandomStream::derive(seed, "verify-hall", 0);
    let (mut agree, mut holding) = (0, 0);
    for _ in 0..instances {
        let left = 1 + pick.below(20) as usize;
        let right = left + pick.below(20) as usize;
        let lmask = random_mask(&left_pool, base.sets.left.len(), left, &mut pick);
        let rmask = random_mask(&right_pool, base.sets.right.len(), right, &mut pick);
        let (g, _, _) = instance.graph_on(&lmask, &rmask);
        let by_subsets = hall_by_enumeration(&g)?.holds();
        let perfect = max_matching(&g).len() == g.left_len();
        if by_subsets == perfect && hall_by_matching(&g).holds() == perfect {
            agree += 1;
        }
        holding += usize::from(perfect);
    }
    c.holds("Hall's condition agrees with perfect matching", agree == instances);
    c.holds("both outcomes occur", holding > 0 && holding < instances);

    // (b) Exact marginals and disjoint matched pairs.
    let desk = one_step_couple(
        e1(3),
        e1(-3),
        4.0,
        8.0,
        &EventSpecs::default(),
        &StepConfig::sampled(64, 192),
        &rng,
    )?;
    let tables = [
        ("exact T = 3", base),
        ("exact T = 4", exact_step(4, None, &rng)?),
        ("exact T = 4, separation 0", exact_step(4, Some(0.0), &rng)?),
    ];
    let mut table_rows = Vec::new();
    for (name, step) in tables.iter().chain(std::iter::once(&("sampled desk instance", desk.clone()))) {
        let (marginals, disjoint) = table_is_valid(step);
        c.holds(&format!("{name}: exact marginals"), marginals);
        c.holds(&format!("{name}: matched pairs disjoint"), disjoint);
        table_rows.push(json!({
            "instance": name,
            "paths": [step.sets.left.len(), step.sets.right.len()],
            "matching": step.matching.len(),
            "success_prob": step.success_prob.value,
        }));
    }

    // (c) Positive success probability.
    let exact_success = tables[1].1.success_prob.value;
    c.holds("desk instance success > 0", desk.success_prob.value > 0.0);
    c.holds("exact instance success > 0", exact_success > 0.0);
    let summary = format!(
        "{agree}/{instances} Hall agreements ({holding} perfect); desk success {:.4}",
        desk.success_prob.value
    );
    let details = json!({ "hall_instances": instances, "agreements": agree, "perfect": holding, "tables": table_rows });
    Ok(c.finish(8, "coupling step structure", summary, details))
}

fn drive(scale: Scale, seed: u64) -> Result<CheckRecord, CliError> {
    let drives = scale.pick(1_000, 20);
    let config = DriveConfig::<4>::default();
    let records = try_replicate(&command_stream(seed, Command::Drive), drives, |_, r| multiscale_drive(&config, r))?;
    let disjoint = records.iter().filter(|r| r.completed && r.disjoint).count();
    let fraction = disjoint as f64 / drives as f64;
    let monotone = records.iter().all(|r| r.p.windows(2).all(|w| w[1] <= w[0]));
    let mut c = Conditions::new();
    c.slack("disjoint fraction >= 0.01", fraction - 0.01);
    c.holds("p nonincreasing in every drive", monotone);
    let summary = format!("{disjoint}/{drives} drives disjoint");
    let details = json!({ "drives": drives, "radii": config.radii, "disjoint": disjoint, "fraction": fraction });
    Ok(c.finish(9, "multi-scale drive", summary, details))
}

/// Small parameters for every subcommand.
fn tiny_runs() -> Vec<(Command, Vec<(&'static str, &'static str)>)> {
    vec![
        (Command::Green, vec![("x", "2,0,0,0"), ("replicas", "300")]),
        (Command::Annulus, vec![("n", "10"), ("replicas", "300")]),
        (Command::ExitTime, vec![("n", "5"), ("replicas", "300")]),
        (Command::BoundaryLayer, vec![("n", "8"), ("k", "3"), ("replicas", "100")]),
        (Command::HittingMeasure, vec![("n", "4"), ("m", "8"), ("replicas", "300")]),
        (Command::Escape, vec![("n", "8"), ("x", "6,0,0,0"), ("k", "3"), ("replicas", "100")]),
        (Command::Invsq, vec![("n", "100"), ("replicas", "100")]),
        (Command::Intersect, vec![("steps", "20"), ("replicas", "50")]),
        (Command::Intersect, vec![("kind", "probability"), ("m", "8"), ("replicas", "100")]),
        (Command::Moments, vec![("n", "4"), ("m", "16"), ("k", "2"), ("replicas", "40")]),
        (Command::GoodTimes, vec![("n", "16"), ("window", "4"), ("length", "32"), ("replicas", "5")]),
        (Command::Hittability, vec![("n", "4"), ("m", "16"), ("outer", "10"), ("inner", "10")]),
        (Command::EventH, vec![("n", "8"), ("outer", "4"), ("grid", "4"), ("inner", "4"), ("c1", "0.5,1")]),
        (Command::CoupleStep, vec![("paths", "16"), ("horizon", "96")]),
        (Command::CoupleStep, vec![("mode", "exact"), ("s1", "0,0,0,0"), ("s2", "1,0,0,0"), ("n", "1.5"), ("m", "3"), ("horizon", "3")]),
        (Command::Drive, vec![("radii", "8,16"), ("paths", "16"), ("replicas", "2")]),
        (Command::VerifyAll, vec![("scale", "quick"), ("checks", "7")]),
    ]
}

/// Canonical report of one run on a pool of `threads` workers.
pub fn canonical_report(config: &RunConfig, threads: usize) -> Result<String, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    let outcome = pool.install(|| execute(config))?;
    Ok(Report::new(config, outcome.result, 0.0).canonical_json())
}

fn determinism(scale: Scale, seed: u64) -> Result<CheckRecord, CliError> {
    let pools = scale.pick(vec![1, 8], vec![1, 4]);
    let mut c = Conditions::new();
    let mut rows = Vec::new();
    let seed = seed.to_string();
    for (command, pairs) in tiny_runs() {
        let mut pairs: Vec<(&str, &str)> = pairs;
        pairs.push(("seed", &seed));
        let config = RunConfig::from_pairs(command, &pairs)?;
        let first = canonical_report(&config, pools[0])?;
        let again = canonical_report(&config, pools[0])?;
        let wide = canonical_report(&config, pools[1])?;
        c.holds(&format!("{}: rerun identical", command.name()), first == again);
        c.holds(&format!("{}: {} vs {} workers identical", command.name(), pools[0], pools[1]), first == wide);
        rows.push(json!({ "command": command.name(), "params": pairs, "bytes": first.len() }));
    }
    let summary = format!("{} runs compared across reruns and {} vs {} workers", rows.len(), pools[0], pools[1]);
    Ok(c.finish(10, "determinism", summary, json!({ "runs": rows })))
}
