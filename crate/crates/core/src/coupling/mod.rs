//! A coupling of two walkers stopped on a sphere that keeps their paths
//! disjoint and their endpoints apart, built from a matching in the graph
//! of compatible path pairs.

mod bipartite;
mod drive;
mod step;
mod table;

pub use bipartite::{
    hall_by_enumeration, hall_by_matching, hall_check, max_matching, BipartiteGraph, HallOutcome,
    HALL_ENUMERATION_LIMIT,
};
pub use drive::{multiscale_drive, schedule, DriveConfig, DriveRecord, ScheduleStep, StepRecord};
pub use step::{
    adjacent, build_path_sets, clamp_separation, default_separation, one_step_couple, BipartiteInstance, EventSpecs,
    FilterRemoval, HallReport, HittabilityFilter, OneStep, PathEvent, PathSetPair, PathSource, SideReport, StepConfig,
};
pub use table::CouplingTable;
