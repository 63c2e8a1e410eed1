//! Lifetime-bound analysis over a [`Graph`](crate::graph::Graph).
//!
//! Timesteps are 1-based and a graph with `n` nodes is scheduled over
//! `1..=n`. A node can only run inside its span `[asap, alap]`, where
//! `asap = 1 + fwd_level` and `alap = n - bwd_level`.

mod bounds;
mod control;
mod levels;
mod reach;

pub use bounds::{compute_bounds, edge_precedes, Interval, LifetimeBounds};
pub use control::{enforce_early_weight_updates, AddedControlEdge, ControlEdgeReport};
pub use levels::{compute_levels, Levelization};
pub use reach::Reachability;

/// 1-based schedule step.
pub type Timestep = usize;
