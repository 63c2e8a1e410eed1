//! Pyramid pre-placement of nested long-lived tensors, a free-list baseline
//! allocator, and the fragmentation metric.

mod baseline;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::PlacementProblem;

pub use baseline::{run_baseline, AllocPolicy, BaselineResult};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlacementError {
    #[error("order is not a topological order of the graph: {0}")]
    InvalidOrder(String),
    #[error("resident bytes {rs} exceed reserved bytes {mr}")]
    ResidentExceedsReserved { mr: u64, rs: u64 },
}

/// Wasted bytes over reserved bytes, kept as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragmentation {
    pub wasted: u64,
    pub reserved: u64,
}

impl Fragmentation {
    /// `0.0` for an empty arena.
    pub fn as_f64(&self) -> f64 {
        if self.reserved == 0 {
            0.0
        } else {
            self.wasted as f64 / self.reserved as f64
        }
    }
}

/// `(mr - rs) / mr`.
pub fn fragmentation(mr: u64, rs: u64) -> Result<Fragmentation, PlacementError> {
    if rs > mr {
        return Err(PlacementError::ResidentExceedsReserved { mr, rs });
    }
    Ok(Fragmentation { wasted: mr - rs, reserved: mr })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrePlacement {
    pub assigned: BTreeMap<String, u64>,
    /// Tensors left for the address solve, in problem order.
    pub remaining: Vec<String>,
    /// Bytes stacked by the pyramid.
    pub reserved_base: u64,
}

/// Stacks tensors with successively nested lifetimes from address 0 up,
/// longest first. Stops at the first round where no unprocessed tensor
/// both fits the current window and lives longer than one step.
pub fn preallocate_pyramid(problem: &PlacementProblem) -> PrePlacement {
    let mut min_start = 0usize;
    let mut max_end = usize::MAX;
    let mut base = 0u64;
    let mut processed = vec![false; problem.tensors.len()];
    let mut assigned = BTreeMap::new();
    while max_end > min_start {
        let mut max_duration = 0usize;
        let mut next: Option<usize> = None;
        for (i, t) in problem.tensors.iter().enumerate() {
            let (first_use, last_use) = (t.live.lo, t.live.hi);
            if first_use < min_start || last_use > max_end || processed[i] || t.size == 0 {
                continue;
            }
            let duration = last_use - first_use;
            let better = match next {
                None => duration > max_duration,
                Some(j) => {
                    let cur = &problem.tensors[j];
                    duration > max_duration
                        || (duration == max_duration && (t.size, std::cmp::Reverse(&t.id)) > (cur.size, std::cmp::Reverse(&cur.id)))
                }
            };
            if better {
                max_duration = duration;
                next = Some(i);
            }
        }
        let Some(i) = next else { break };
        let t = &problem.tensors[i];
        assigned.insert(t.id.clone(), base);
        base += t.size;
        min_start = t.live.lo;
        max_end = t.live.hi;
        processed[i] = true;
    }
    let remaining = problem
        .tensors
        .iter()
        .enumerate()
        .filter(|(i, t)| !processed[*i] && t.size > 0)
        .map(|(_, t)| t.id.clone())
        .collect();
    PrePlacement { assigned, remaining, reserved_base: base }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Interval;
    use crate::milp::PlacementTensor;

    fn problem(items: &[(&str, u64, usize, usize)]) -> PlacementProblem {
        PlacementProblem {
            horizon: items.iter().map(|i| i.3).max().unwrap_or(0),
            tensors: items
                .iter()
                .map(|&(id, size, lo, hi)| PlacementTensor { id: id.into(), size, live: Interval::new(lo, hi) })
                .collect(),
            fixed: BTreeMap::new(),
        }
    }

    #[test]
    fn nested_spans_form_a_pyramid() {
        let p = preallocate_pyramid(&problem(&[("a", 4, 1, 6), ("b", 2, 2, 5), ("c", 1, 3, 4)]));
        assert_eq!(p.assigned, BTreeMap::from([("a".into(), 0), ("b".into(), 4), ("c".into(), 6)]));
        assert!(p.remaining.is_empty());
        assert_eq!(p.reserved_base, 7);
    }

    #[test]
    fn crossing_spans_keep_one() {
        let p = preallocate_pyramid(&problem(&[("x", 2, 1, 3), ("y", 3, 2, 4)]));
        // Equal durations: the larger tensor wins.
        assert_eq!(p.assigned, BTreeMap::from([("y".into(), 0)]));
        assert_eq!(p.remaining, vec!["x".to_string()]);
    }

    #[test]
    fn single_step_tensors_are_never_chosen() {
        let p = preallocate_pyramid(&problem(&[("x", 2, 1, 1), ("y", 3, 2, 2)]));
        assert!(p.assigned.is_empty());
        assert_eq!(p.remaining.len(), 2);
    }

    #[test]
    fn empty_problem() {
        let p = preallocate_pyramid(&PlacementProblem::default());
        assert_eq!(p, PrePlacement::default());
    }

    #[test]
    fn fragmentation_values() {
        assert_eq!(fragmentation(10, 8).unwrap().as_f64(), 0.2);
        assert_eq!(fragmentation(6, 6).unwrap().as_f64(), 0.0);
        assert_eq!(fragmentation(0, 0).unwrap().as_f64(), 0.0);
        assert!(fragmentation(1, 2).is_err());
    }
}
