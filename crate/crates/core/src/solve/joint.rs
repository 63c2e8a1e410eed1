use std::collections::BTreeMap;

use super::placement::{placement_assignment, solve_placement_exact};
use super::schedule::{solve_schedule_exact, Schedule, SubsetTables, MAX_DP_NODES};
use super::{Deadline, SolveConfig, SolveError, SolveOutcome, SolveStatus};
use crate::graph::{Graph, NodeIx};

#[derive(Debug, Clone)]
pub struct JointResult {
    pub schedule: Schedule,
    pub order: Vec<NodeIx>,
    pub addresses: BTreeMap<String, u64>,
    pub peak: u64,
    /// Smallest peak resident set over all orders; a lower bound on `peak`.
    pub min_peak_rs: u64,
    pub outcome: SolveOutcome,
}

struct OrderSearch<'a> {
    graph: &'a Graph,
    tables: &'a SubsetTables,
    g: &'a [u64],
    config: &'a SolveConfig,
    deadline: &'a Deadline,
    best: u64,
    best_order: Vec<NodeIx>,
    best_addresses: BTreeMap<String, u64>,
    certified: bool,
    timed_out: bool,
    prefix: Vec<NodeIx>,
}

impl OrderSearch<'_> {
    fn leaf(&mut self) -> Result<(), SolveError> {
        let schedule = Schedule::from_order(self.graph, &self.prefix);
        let placed = solve_placement_exact(&schedule.placement_problem(self.graph), self.config)?;
        if !placed.outcome.status.is_optimal() {
            self.certified = false;
        }
        if placed.peak < self.best {
            self.best = placed.peak;
            self.best_order = self.prefix.clone();
            self.best_addresses = placed.addresses;
        }
        Ok(())
    }

    fn dfs(&mut self, done: u32, prefix_peak: u64) -> Result<(), SolveError> {
        if self.timed_out || self.best == self.g[0] {
            return Ok(());
        }
        if self.deadline.expired() {
            self.timed_out = true;
            return Ok(());
        }
        if self.prefix.len() == self.tables.n {
            return self.leaf();
        }
        let base = self.tables.base(done);
        for v in self.tables.ready_nodes(done) {
            let next = done | 1 << v;
            let peak = prefix_peak.max(base + self.tables.out_size[v]);
            if peak.max(self.g[next as usize]) >= self.best {
                continue;
            }
            self.prefix.push(NodeIx(v));
            self.dfs(next, peak)?;
            self.prefix.pop();
        }
        Ok(())
    }
}

/// Exact joint order-and-placement search. Starts from the best order for
/// the resident set; only when its packing leaves a gap are the other
/// orders whose resident peak could still beat it searched.
pub fn solve_joint_internal(graph: &Graph, config: &SolveConfig) -> Result<JointResult, SolveError> {
    let deadline = config.deadline();
    let split = solve_schedule_exact(graph, config)?;
    let first = solve_placement_exact(&split.schedule.placement_problem(graph), config)?;
    let tables = SubsetTables::new(graph);
    debug_assert!(graph.num_nodes() <= MAX_DP_NODES);
    let g = match tables.cost_to_go(&deadline) {
        Some(g) => g,
        None => vec![split.outcome.objective as u64; 1 << graph.num_nodes()],
    };
    let min_peak_rs = g[0];

    let mut search = OrderSearch {
        graph,
        tables: &tables,
        g: &g,
        config,
        deadline: &deadline,
        best: first.peak,
        best_order: split.order.clone(),
        best_addresses: first.addresses,
        certified: first.outcome.status.is_optimal() && split.outcome.status.is_optimal(),
        timed_out: split.outcome.status == SolveStatus::Timeout,
        prefix: Vec::with_capacity(graph.num_nodes()),
    };
    if search.best > min_peak_rs && !search.timed_out {
        search.dfs(0, 0)?;
    }

    let schedule = Schedule::from_order(graph, &search.best_order);
    let mut assignment = schedule.assignment(graph);
    assignment.extend(placement_assignment(&schedule.placement_problem(graph), &search.best_addresses, search.best));
    let status = if search.best == min_peak_rs && !search.timed_out {
        SolveStatus::Optimal
    } else if search.timed_out {
        SolveStatus::Timeout
    } else if search.certified {
        SolveStatus::Optimal
    } else {
        SolveStatus::FeasibleGap { bound: min_peak_rs as i64 }
    };
    Ok(JointResult {
        order: search.best_order,
        addresses: search.best_addresses,
        peak: search.best,
        min_peak_rs,
        schedule,
        outcome: SolveOutcome { status, assignment, objective: search.best as i64, wall_time: deadline.elapsed() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::compute_bounds;
    use crate::graph::{Node, TensorEdge};
    use crate::milp::{encode_joint, evaluate, EncodeOptions};

    #[test]
    fn order4_joint_matches_split() {
        let g = Graph::new(
            vec![Node::compute("v1"), Node::compute("v3"), Node::compute("v2"), Node::compute("v4")],
            vec![
                TensorEdge::data("e1", "v1", &["v2"], 10),
                TensorEdge::data("e2", "v1", &["v3"], 10),
                TensorEdge::data("e3", "v2", &["v4"], 1),
                TensorEdge::data("e4", "v3", &["v4"], 10),
            ],
        )
        .unwrap();
        let r = solve_joint_internal(&g, &SolveConfig::default()).unwrap();
        assert_eq!(r.peak, 21);
        assert!(r.outcome.status.is_optimal());
        for pruning in [true, false] {
            let m = encode_joint(&g, &compute_bounds(&g), EncodeOptions { pruning }).unwrap();
            let ev = evaluate(&m, &r.outcome.assignment).unwrap();
            assert!(ev.feasible, "{:?}", ev.violated);
            assert_eq!(ev.objective, 21);
        }
    }
}
