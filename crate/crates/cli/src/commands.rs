//! One runner per subcommand. Each draws all of its randomness from
//! [`command_stream`], so a report is a function of the config alone.

use serde::Serialize;
use serde_json::{json, Value as Json};

use avoidance_core::coupling::{multiscale_drive, one_step_couple, DriveConfig, EventSpecs, HallOutcome, StepConfig};
use avoidance_core::estimators::{
    annulus_exit_limit, annulus_exit_prob, boundary_layer_tail, escape_curved_boundary_prob, estimate_green,
    exit_time_tail, hitting_measure_max, inverse_square_tails,
};
use avoidance_core::intersections::{
    classify_good_times, event_h_from_profile, event_h_profile, expected_intersections, hittability_sweep,
    intersection_prob, moment_sum, EventHConfig,
};
use avoidance_core::par::try_replicate;
use avoidance_core::walker::walk_fixed_length;
use avoidance_core::{Estimate, LatticePoint, RandomStream};

use crate::config::{check_ids, default_exclusion, parse_filter, Command, RunConfig};
use crate::report::Table;
use crate::verify::{self, Scale};
use crate::CliError;

/// The stream a command draws from: keyed by the top-level seed and the
/// command name.
pub fn command_stream(seed: u64, command: Command) -> RandomStream {
    RandomStream::derive(seed, command.name(), 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub result: Json,
    /// Preferred CSV rendering, when the result is naturally a table.
    pub table: Option<Table>,
    /// Pass/fail, for commands that check something.
    pub passed: Option<bool>,
}

impl Outcome {
    fn of<T: Serialize>(value: &T) -> Self {
        Self {
            result: to_json(value),
            table: None,
            passed: None,
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Json {
    serde_json::to_value(value).expect("results serialize")
}

pub fn execute(config: &RunConfig) -> Result<Outcome, CliError> {
    let rng = command_stream(config.seed, config.command);
    let replicas = config.replicas;
    let c = config;
    let outcome = match config.command {
        Command::Green => {
            let x = c.point("x");
            let truncation = c.opt_float("truncation").unwrap_or(4.0 * x.norm() + 1.0);
            Outcome::of(&estimate_green(x, replicas, &rng, truncation)?)
        }
        Command::Annulus => {
            let (a, big_a) = (c.float("a"), c.float("A"));
            let estimate = annulus_exit_prob::<4>(c.float("n"), a, big_a, replicas, &rng)?;
            Outcome::of(&json!({ "estimate": estimate, "limit": annulus_exit_limit(a, big_a)? }))
        }
        Command::ExitTime => Outcome::of(&exit_time_tail::<4>(c.float("n"), replicas, &rng)?),
        Command::BoundaryLayer => {
            let e = boundary_layer_tail::<4>(c.float("n"), c.float("k"), c.float("lambda"), replicas, &rng)?;
            Outcome::of(&json!({ "estimate": e }))
        }
        Command::HittingMeasure => {
            Outcome::of(&hitting_measure_max(c.float("n"), c.float("m"), c.point("x"), replicas, &rng)?)
        }
        Command::Escape => {
            Outcome::of(&escape_curved_boundary_prob(c.float("n"), c.point("x"), c.float("k"), replicas, &rng)?)
        }
        Command::Invsq => Outcome::of(&inverse_square_tails::<4>(c.int("n"), c.float("K"), replicas, &rng)?),
        Command::Intersect => match c.text("kind") {
            "expectation" => Outcome::of(&expected_intersections(
                c.point("x"),
                c.int("steps"),
                replicas,
                &rng,
                c.float("truncation_factor"),
            )?),
            _ => {
                let e = intersection_prob(c.point("s1"), c.point("s2"), c.float("m"), replicas, &rng)?;
                Outcome::of(&json!({ "estimate": e }))
            }
        },
        Command::Moments => Outcome::of(&moment_sum::<4>(
            c.float("n"),
            c.float("m"),
            c.int("k") as usize,
            c.int("r") as u32,
            replicas,
            &rng,
        )?),
        Command::GoodTimes => good_times(c, &rng)?,
        Command::Hittability => hittability(c, &rng)?,
        Command::EventH => event_h(c, &rng)?,
        Command::CoupleStep => couple_step(c, &rng)?,
        Command::Drive => drive(c, &rng)?,
        Command::VerifyAll => {
            let scale = if c.text("scale") == "quick" { Scale::Quick } else { Scale::Full };
            let ids = check_ids(c.text("checks"))?;
            let mut records = Vec::new();
            for id in ids {
                let record = verify::run_check(id, scale, c.seed)?;
                log::info!("{}", record.line());
                records.push(record);
            }
            let passed = records.iter().all(|r| r.passed);
            let table = Table {
                header: ["check", "name", "passed", "margin", "summary"].map(String::from).to_vec(),
                rows: records
                    .iter()
                    .map(|r| vec![r.id.to_string(), r.name.clone(), r.passed.to_string(), r.margin.to_string(), r.summary.clone()])
                    .collect(),
            };
            Outcome {
                result: json!({ "checks": records, "passed": passed }),
                table: Some(table),
                passed: Some(passed),
            }
        }
    };
    Ok(outcome)
}

fn good_times(c: &RunConfig, rng: &RandomStream) -> Result<Outcome, CliError> {
    let (n, lambda) = (c.float("n"), c.float("lambda"));
    let window = c.int("window") as usize;
    let length = c.int("length") as usize;
    let fractions = try_replicate(rng, c.replicas, |i, r| {
        let path = walk_fixed_length(LatticePoint::<4>::origin(), length + 2 * window, r, None);
        classify_good_times(&path, n, lambda, window).map(|m| m.with_id(i).bad_fraction())
    })?;
    Ok(Outcome::of(&json!({
        "bad_fraction": Estimate::mean(&fractions, rng),
        "classified_per_path": length + 1,
    })))
}

fn hittability(c: &RunConfig, rng: &RandomStream) -> Result<Outcome, CliError> {
    let eps = c.floats("epsilon");
    let reports = hittability_sweep::<4>(c.float("n"), c.float("m"), &eps, c.int("outer"), c.int("inner"), rng)?;
    let table = Table {
        header: ["ε", "δ", "stderr", "replicas"].map(String::from).to_vec(),
        rows: reports
            .iter()
            .map(|r| {
                vec![
                    r.params.epsilon.to_string(),
                    r.delta.value.to_string(),
                    r.delta.stderr.to_string(),
                    r.delta.replicas.to_string(),
                ]
            })
            .collect(),
    };
    Ok(Outcome {
        result: json!({ "sweep": reports }),
        table: Some(table),
        passed: None,
    })
}

fn event_h(c: &RunConfig, rng: &RandomStream) -> Result<Outcome, CliError> {
    let n = c.float("n");
    let k = c.opt_float("k").unwrap_or_else(|| default_exclusion(n));
    let config = EventHConfig {
        grid: c.int("grid") as usize,
        inner: c.int("inner"),
        truncation_factor: c.float("truncation_factor"),
    };
    let profile = event_h_profile::<4>(n, k, c.int("outer"), &config, rng)?;
    let reports: Vec<_> = c
        .floats("c1")
        .iter()
        .map(|&c1| event_h_from_profile(&profile, n, k, c1, config.truncation_factor, rng))
        .collect();
    Ok(Outcome::of(&json!({ "k": k, "reports": reports })))
}

fn couple_step(c: &RunConfig, rng: &RandomStream) -> Result<Outcome, CliError> {
    let horizon = c.int("horizon") as usize;
    let mut config = match c.text("mode") {
        "exact" => StepConfig::exact(horizon),
        _ => StepConfig::sampled(c.int("paths") as usize, horizon),
    };
    config.separation = c.opt_float("separation");
    config.hittability = parse_filter(c.text("hittability"))?;
    let step = one_step_couple(c.point("s1"), c.point("s2"), c.float("n"), c.float("m"), &EventSpecs::default(), &config, rng)?;
    Ok(Outcome::of(&step_summary(&step)))
}

/// The reportable part of a coupling step.
pub fn step_summary(step: &avoidance_core::coupling::OneStep<4>) -> Json {
    let hall = step.hall.as_ref().map(|h| match &h.outcome {
        HallOutcome::Holds => json!({ "side": h.side, "holds": true }),
        HallOutcome::Violating(set) => json!({ "side": h.side, "holds": false, "violating": set }),
    });
    json!({
        "mode": step.sets.left.mode(),
        "horizon": step.sets.left.horizon(),
        "left": step.sets.left_report,
        "right": step.sets.right_report,
        "mu_hat": step.sets.mu_hat,
        "separation": step.sets.separation,
        "warnings": step.sets.warnings,
        "edges": step.edges,
        "hall": hall,
        "matching_size": step.matching.len(),
        "matched_mass": step.table.matched_mass().to_string(),
        "success_mass": step.success_mass.to_string(),
        "success_prob": step.success_prob,
        "marginals_exact": step.table.verify_marginals().is_ok(),
    })
}

fn drive(c: &RunConfig, rng: &RandomStream) -> Result<Outcome, CliError> {
    let config = DriveConfig::<4> {
        radii: c.floats("radii"),
        second_start: c.point("second_start"),
        paths_per_side: c.int("paths") as usize,
        horizon_factor: c.float("horizon_factor"),
        c1: c.float("c1"),
        first_step_attempts: c.int("first_step_attempts"),
        ..DriveConfig::default()
    };
    let dump = c.flag("dump");
    let mut records = try_replicate(rng, c.replicas, |_, r| multiscale_drive(&config, r))?;
    if !dump {
        for r in &mut records {
            r.paths.clear();
        }
    }
    let disjoint = records.iter().filter(|r| r.completed && r.disjoint).count();
    let monotone = records.iter().all(|r| r.p.windows(2).all(|w| w[1] <= w[0]));
    Ok(Outcome::of(&json!({
        "drives": records.len(),
        "disjoint": disjoint,
        "disjoint_fraction": Estimate::proportion(disjoint as u64, records.len() as u64, rng),
        "p_nonincreasing": monotone,
        "schedule": avoidance_core::coupling::schedule(&config.radii)?,
        "records": records,
    })))
}
