//! Random walks on Z^d, intersection statistics for pairs of walks, and a
//! coupling of two walkers that keeps their paths apart.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod error;
pub mod estimators;
pub mod intersections;
pub mod lattice;
pub mod par;
pub mod rng;
pub mod walker;

pub use error::{Error, Result};
pub use estimators::Estimate;
pub use lattice::{BallSpec, BoundarySampler, LatticePoint, Region};
pub use rng::RandomStream;
pub use walker::{PathSet, PathSetMode, Trace, WalkPath, Weight};
