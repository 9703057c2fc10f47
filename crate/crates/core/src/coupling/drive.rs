//! Multi-scale drive: two walkers from `0` and `x` pushed through a growing
//! radius schedule, kept apart by one coupling step per scale.
//!
//! At every radius `r` of the schedule the walkers must satisfy: the far
//! hitting event `H_{r, r/log2 r}` fails for both, the hitting points of
//! `∂B(r)` are more than `r / log2 r` apart, and the traces so far are
//! disjoint. The first radius is reached by rejection sampling of
//! independent pairs, every later one by [`one_step_couple`].

use serde::{Deserialize, Serialize};

use super::step::{default_separation, one_step_couple, EventSpecs, HittabilityFilter, PathEvent, StepConfig};
use crate::error::{Error, Result};
use crate::intersections::{event_h_holds, event_h_threshold, z_candidates, EventHConfig};
use crate::lattice::{BallSpec, LatticePoint};
use crate::rng::RandomStream;
use crate::walker::{walk_to_boundary, PathRecord, TraceIndex, WalkPath};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub index: usize,
    /// Radius the step starts from; zero for the first step.
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Endpoint separation required on `∂B(outer_radius)`.
    pub separation: f64,
}

/// Checks a radius schedule and expands it into steps.
pub fn schedule(radii: &[f64]) -> Result<Vec<ScheduleStep>> {
    if radii.is_empty() {
        return Err(Error::Domain("the schedule needs at least one radius".into()));
    }
    if !(radii[0] > 2.0) {
        return Err(Error::Domain(format!("first radius must exceed 2, got {}", radii[0])));
    }
    let mut out = Vec::with_capacity(radii.len());
    for (k, &r) in radii.iter().enumerate() {
        let inner = if k == 0 { 0.0 } else { radii[k - 1] };
        if k > 0 && r < 2.0 * inner {
            return Err(Error::Domain(format!("radius {r} is less than twice the previous radius {inner}")));
        }
        out.push(ScheduleStep {
            index: k,
            inner_radius: inner,
            outer_radius: r,
            separation: default_separation(r),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DriveConfig<const D: usize = 4> {
    pub radii: Vec<f64>,
    /// Start of the second walker; the first starts at the origin.
    pub second_start: LatticePoint<D>,
    /// Sampled paths per side in each coupling step.
    pub paths_per_side: usize,
    /// Horizon of a coupling step to `∂B(m)`: `ceil(horizon_factor * m^2)`.
    pub horizon_factor: f64,
    pub c1: f64,
    pub event_h: EventHConfig,
    pub hittability: HittabilityFilter,
    /// Independent pairs tried for the first radius.
    pub first_step_attempts: u64,
}

impl<const D: usize> Default for DriveConfig<D> {
    fn default() -> Self {
        Self {
            radii: vec![8.0, 16.0, 64.0],
            second_start: LatticePoint::on_axis(0, 1),
            paths_per_side: 64,
            horizon_factor: 3.0,
            c1: 1.0,
            event_h: EventHConfig::default(),
            hittability: HittabilityFilter::Disabled,
            first_step_attempts: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: ScheduleStep,
    /// Independent pairs drawn (first step only).
    pub attempts: Option<u64>,
    /// Sizes of `A'` and `A` on each side (coupling steps only).
    pub left_sizes: Option<(usize, usize)>,
    pub right_sizes: Option<(usize, usize)>,
    /// Mass outside `A` on each side.
    pub filtered_mass: Option<(f64, f64)>,
    pub matching_size: Option<usize>,
    /// Probability that the step meets its conditions.
    pub success_prob: f64,
    /// Cumulative product of step success probabilities.
    pub p: f64,
    /// Whether `H` was decided without simulation because its threshold is
    /// at least one.
    pub h_vacuous: bool,
    /// Whether the realised pair met the conditions.
    pub succeeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DriveRecord<const D: usize = 4> {
    pub seed: u64,
    pub stream_id: u64,
    pub steps: Vec<StepRecord>,
    pub p: Vec<f64>,
    pub completed: bool,
    pub failure: Option<String>,
    /// Whether the final traces are disjoint, checked directly.
    pub disjoint: bool,
    /// The two walks, in the path dump format.
    pub paths: Vec<PathRecord<D>>,
}

impl<const D: usize> DriveRecord<D> {
    /// The record, or the failure as [`Error::StepFailed`].
    pub fn into_result(self) -> Result<Self> {
        match &self.failure {
            None => Ok(self),
            Some(reason) => Err(Error::StepFailed {
                step: self.steps.len().saturating_sub(1),
                reason: reason.clone(),
            }),
        }
    }
}

fn concat<const D: usize>(past: &WalkPath<D>, segment: &WalkPath<D>) -> WalkPath<D> {
    let mut v = past.stopped_vertices().to_vec();
    v.extend_from_slice(&segment.stopped_vertices()[1..]);
    let stop = v.len() - 1;
    WalkPath::with_stop(v, Some(stop))
}

fn path_key<const D: usize>(p: &WalkPath<D>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in p.stopped_vertices() {
        for &c in v.coords() {
            h ^= c as u32 as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

struct HCheck<const D: usize> {
    radius: f64,
    k: f64,
    c1: f64,
    config: EventHConfig,
    candidates: Vec<LatticePoint<D>>,
    vacuous: bool,
}

impl<const D: usize> HCheck<D> {
    fn new(radius: f64, c1: f64, config: EventHConfig) -> Result<Self> {
        let k = default_separation(radius);
        let vacuous = event_h_threshold(radius, k, c1) >= 1.0;
        let candidates = if vacuous {
            Vec::new()
        } else {
            z_candidates(radius, 4 * config.grid)?
        };
        Ok(Self {
            radius,
            k,
            c1,
            config,
            candidates,
            vacuous,
        })
    }

    /// Whether `H` holds for the full walk `path`; randomness is keyed by the
    /// path itself so the answer does not depend on evaluation order.
    fn holds(&self, path: &WalkPath<D>, rng: &RandomStream) -> Result<bool> {
        if self.vacuous {
            return Ok(false);
        }
        let mut r = rng.fork("event-h").child(path_key(path));
        event_h_holds(path, self.radius, self.k, self.c1, &self.candidates, &self.config, &mut r)
    }
}

/// Runs one drive through the schedule. A failed step ends the drive and is
/// recorded in [`DriveRecord::failure`].
pub fn multiscale_drive<const D: usize>(config: &DriveConfig<D>, rng: &RandomStream) -> Result<DriveRecord<D>> {
    let steps = schedule(&config.radii)?;
    let first = &steps[0];
    let ball = BallSpec::<D>::centered(first.outer_radius)?;
    if !ball.contains(&config.second_start) || config.second_start == LatticePoint::origin() {
        return Err(Error::Domain(format!(
            "second start {:?} must be a nonzero point of B({})",
            config.second_start, first.outer_radius
        )));
    }
    let mut record = DriveRecord {
        seed: rng.seed(),
        stream_id: rng.stream_id(),
        steps: Vec::new(),
        p: Vec::new(),
        completed: false,
        failure: None,
        disjoint: false,
        paths: Vec::new(),
    };

    let h = HCheck::<D>::new(first.outer_radius, config.c1, config.event_h)?;
    let mut walk_rng = rng.fork("first-step");
    let mut pair = None;
    let mut attempts = 0;
    while attempts < config.first_step_attempts {
        attempts += 1;
        let a = walk_to_boundary(LatticePoint::origin(), &ball, &mut walk_rng, 0)?;
        let b = walk_to_boundary(config.second_start, &ball, &mut walk_rng, 0)?;
        let ok = a.trace().is_disjoint(b.trace())
            && a.hit_point().unwrap().dist(&b.hit_point().unwrap()) > first.separation
            && !h.holds(&a, rng)?
            && !h.holds(&b, rng)?;
        if ok {
            pair = Some((a, b));
            break;
        }
    }
    let success_prob = if pair.is_some() { 1.0 / attempts as f64 } else { 0.0 };
    record.steps.push(StepRecord {
        step: first.clone(),
        attempts: Some(attempts),
        left_sizes: None,
        right_sizes: None,
        filtered_mass: None,
        matching_size: None,
        success_prob,
        p: success_prob,
        h_vacuous: h.vacuous,
        succeeded: pair.is_some(),
    });
    record.p.push(success_prob);
    let Some((mut r1, mut r2)) = pair else {
        record.failure = Some(format!("no admissible pair within {attempts} attempts"));
        return Ok(record);
    };

    for step in &steps[1..] {
        let (n, m) = (step.inner_radius, step.outer_radius);
        let step_rng = rng.fork("step").child(step.index as u64);
        let h = HCheck::<D>::new(m, config.c1, config.event_h)?;
        let past1 = TraceIndex::new(r1.trace().iter());
        let past2 = TraceIndex::new(r2.trace().iter());
        let (r1_ref, r2_ref, h_ref) = (&r1, &r2, &h);
        let h_rng = step_rng.clone();
        let left_event = move |p: &WalkPath<D>| {
            !p.trace().iter().any(|v| past2.contains(v))
                && (h_ref.vacuous || !h_ref.holds(&concat(r1_ref, p), &h_rng).unwrap_or(true))
        };
        let h_rng2 = step_rng.clone();
        let right_event = move |p: &WalkPath<D>| {
            !p.trace().iter().any(|v| past1.contains(v))
                && (h_ref.vacuous || !h_ref.holds(&concat(r2_ref, p), &h_rng2).unwrap_or(true))
        };
        let events = EventSpecs {
            left: vec![PathEvent::new("avoids other past, H fails", left_event)],
            right: vec![PathEvent::new("avoids other past, H fails", right_event)],
        };
        let mut cfg = StepConfig::sampled(config.paths_per_side, (config.horizon_factor * m * m).ceil() as usize);
        cfg.hittability = config.hittability;
        let s1 = r1.hit_point().expect("drive walks are stopped");
        let s2 = r2.hit_point().expect("drive walks are stopped");
        let outcome = one_step_couple(s1, s2, n, m, &events, &cfg, &step_rng);
        let coupled = match outcome {
            Ok(c) => c,
            Err(e @ Error::DegenerateFilter { .. }) => {
                record.failure = Some(format!("step {}: {e}", step.index));
                record.steps.push(StepRecord {
                    step: step.clone(),
                    attempts: None,
                    left_sizes: None,
                    right_sizes: None,
                    filtered_mass: None,
                    matching_size: None,
                    success_prob: 0.0,
                    p: 0.0,
                    h_vacuous: h.vacuous,
                    succeeded: false,
                });
                record.p.push(0.0);
                break;
            }
            Err(e) => return Err(e),
        };
        let mut pick_rng = step_rng.fork("pick");
        let (i, j) = coupled.table.sample_pair(&mut pick_rng);
        let succeeded = coupled.sets.pair_succeeds(i, j);
        let p = record.p.last().copied().unwrap_or(1.0) * coupled.success_prob.value;
        let sets = &coupled.sets;
        record.steps.push(StepRecord {
            step: step.clone(),
            attempts: None,
            left_sizes: Some((sets.left_report.good, sets.left_report.kept)),
            right_sizes: Some((sets.right_report.good, sets.right_report.kept)),
            filtered_mass: Some((sets.left_report.filtered_mass(), sets.right_report.filtered_mass())),
            matching_size: Some(coupled.matching.len()),
            success_prob: coupled.success_prob.value,
            p,
            h_vacuous: h.vacuous,
            succeeded,
        });
        record.p.push(p);
        let next1 = concat(&r1, &sets.left.paths()[i]);
        let next2 = concat(&r2, &sets.right.paths()[j]);
        drop(events);
        r1 = next1;
        r2 = next2;
        if !succeeded {
            record.failure = Some(format!("step {}: the coupled pair missed the step conditions", step.index));
            break;
        }
    }
    record.completed = record.failure.is_none();
    record.disjoint = r1.trace().is_disjoint(r2.trace());
    record.paths = vec![r1.to_record(), r2.to_record()];
    Ok(record)
}
