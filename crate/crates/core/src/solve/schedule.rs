use serde::{Deserialize, Serialize};

use super::{SolveConfig, SolveError, SolveOutcome, SolveStatus};
use crate::analysis::Interval;
use crate::graph::{EdgeIx, Graph, NodeIx};
use crate::milp::{Assignment, PlacementProblem, PlacementTensor, VarId};

/// Execution timestep of every node (1-based, indexed by `NodeIx`).
/// Several nodes may share a timestep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub timestep_of: Vec<usize>,
}

impl Schedule {
    /// One node per timestep, in the given order.
    pub fn from_order(graph: &Graph, order: &[NodeIx]) -> Self {
        let mut timestep_of = vec![0; graph.num_nodes()];
        for (k, v) in order.iter().enumerate() {
            timestep_of[v.0] = k + 1;
        }
        Self { timestep_of }
    }

    pub fn horizon(&self) -> usize {
        self.timestep_of.len()
    }

    /// Nodes sorted by timestep, then by node id.
    pub fn order(&self, graph: &Graph) -> Vec<NodeIx> {
        let mut order: Vec<NodeIx> = graph.node_ids().collect();
        order.sort_by(|a, b| (self.timestep_of[a.0], &graph.node(*a).id).cmp(&(self.timestep_of[b.0], &graph.node(*b).id)));
        order
    }

    /// Every timestep in range and every consumer strictly after its producers.
    pub fn is_valid(&self, graph: &Graph) -> bool {
        let n = self.horizon();
        self.timestep_of.len() == graph.num_nodes()
            && self.timestep_of.iter().all(|&t| (1..=n).contains(&t))
            && graph
                .edge_ids()
                .all(|e| graph.sinks(e).iter().all(|s| self.timestep_of[s.0] > self.timestep_of[graph.src(e).0]))
    }

    /// From creation to the last consumer; terminal outputs stay to the end.
    pub fn live(&self, graph: &Graph, e: EdgeIx) -> Interval {
        let lo = self.timestep_of[graph.src(e).0];
        let hi = if graph.is_terminal(e) {
            self.horizon()
        } else {
            graph.sinks(e).iter().map(|s| self.timestep_of[s.0]).max().unwrap_or(lo)
        };
        Interval::new(lo, hi)
    }

    /// Resident bytes at each timestep (index `t - 1`).
    pub fn resident(&self, graph: &Graph) -> Vec<u64> {
        let mut rs = vec![0u64; self.horizon()];
        for e in graph.edge_ids() {
            let live = self.live(graph, e);
            for t in live.lo..=live.hi {
                rs[t - 1] += graph.size(e);
            }
        }
        rs
    }

    pub fn peak_resident(&self, graph: &Graph) -> u64 {
        self.resident(graph).into_iter().max().unwrap_or(0)
    }

    /// Create/preserve/run values with preservation kept to the minimum.
    pub fn assignment(&self, graph: &Graph) -> Assignment {
        let n = self.horizon();
        let mut a = Assignment::new();
        for e in graph.edge_ids() {
            let id = &graph.edge(e).id;
            let live = self.live(graph, e);
            for t in 1..=n {
                a.insert(VarId::create(id, t), (t == live.lo) as i64);
                a.insert(VarId::preserve(id, t), (t > live.lo && t <= live.hi) as i64);
            }
        }
        for v in graph.node_ids().filter(|&v| graph.is_fanout_free(v)) {
            for t in 1..=n {
                a.insert(VarId::run(&graph.node(v).id, t), (t == self.timestep_of[v.0]) as i64);
            }
        }
        a
    }

    /// The data tensors with their fixed lifetimes.
    pub fn placement_problem(&self, graph: &Graph) -> PlacementProblem {
        PlacementProblem {
            horizon: self.horizon(),
            tensors: graph
                .edge_ids()
                .filter(|&e| graph.size(e) > 0)
                .map(|e| PlacementTensor { id: graph.edge(e).id.clone(), size: graph.size(e), live: self.live(graph, e) })
                .collect(),
            fixed: Default::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScheduleResult {
    pub schedule: Schedule,
    pub order: Vec<NodeIx>,
    pub outcome: SolveOutcome,
}

/// The cost-to-go table has `2^n` entries; beyond this it no longer fits in
/// memory comfortably.
pub const MAX_DP_NODES: usize = 26;

/// Precomputed per-node bitmasks for the subset dynamic program.
pub(crate) struct SubsetTables {
    pub n: usize,
    pub pred_mask: Vec<u32>,
    pub out_size: Vec<u64>,
    /// (source bit, sink mask, size) for every sized edge; terminal edges
    /// have an empty sink mask and never free.
    edges: Vec<(u32, u32, u64)>,
    pub rank: Vec<usize>,
}

impl SubsetTables {
    pub fn new(graph: &Graph) -> Self {
        let n = graph.num_nodes();
        assert!(n <= MAX_DP_NODES, "subset tables support at most {MAX_DP_NODES} nodes");
        let pred_mask = graph.node_ids().map(|v| graph.predecessors(v).iter().fold(0u32, |m, p| m | 1 << p.0)).collect();
        let out_size = graph.node_ids().map(|v| graph.fanout(v).iter().map(|&e| graph.size(e)).sum()).collect();
        let edges = graph
            .edge_ids()
            .filter(|&e| graph.size(e) > 0)
            .map(|e| (1u32 << graph.src(e).0, graph.sinks(e).iter().fold(0u32, |m, s| m | 1 << s.0), graph.size(e)))
            .collect();
        let mut by_id: Vec<NodeIx> = graph.node_ids().collect();
        by_id.sort_by(|a, b| graph.node(*a).id.cmp(&graph.node(*b).id));
        let mut rank = vec![0; n];
        for (r, v) in by_id.iter().enumerate() {
            rank[v.0] = r;
        }
        Self { n, pred_mask, out_size, edges, rank }
    }

    /// Bytes produced by nodes in `done` that are still needed afterwards.
    pub fn base(&self, done: u32) -> u64 {
        self.edges
            .iter()
            .filter(|(src, sinks, _)| done & src != 0 && (*sinks == 0 || sinks & !done != 0))
            .map(|e| e.2)
            .sum()
    }

    pub fn is_closed(&self, done: u32) -> bool {
        (0..self.n).all(|v| done & (1 << v) == 0 || self.pred_mask[v] & !done == 0)
    }

    pub fn ready(&self, done: u32, v: usize) -> bool {
        done & (1 << v) == 0 && self.pred_mask[v] & !done == 0
    }

    /// Nodes ready after `done`, in node-id order.
    pub fn ready_nodes(&self, done: u32) -> Vec<usize> {
        let mut r: Vec<usize> = (0..self.n).filter(|&v| self.ready(done, v)).collect();
        r.sort_by_key(|&v| self.rank[v]);
        r
    }

    /// Cost-to-go: the smallest achievable peak over the remaining nodes
    /// after `done` has run. `None` when the deadline expired first.
    pub fn cost_to_go(&self, deadline: &super::Deadline) -> Option<Vec<u64>> {
        let full: u32 = (1u32 << self.n) - 1;
        let mut g = vec![u64::MAX; full as usize + 1];
        g[full as usize] = 0;
        for done in (0..full).rev() {
            if done & 0x3fff == 0 && deadline.expired() {
                return None;
            }
            if !self.is_closed(done) {
                continue;
            }
            let base = self.base(done);
            let mut best = u64::MAX;
            for v in 0..self.n {
                if self.ready(done, v) {
                    let rest = g[(done | 1 << v) as usize];
                    best = best.min((base + self.out_size[v]).max(rest));
                }
            }
            g[done as usize] = best;
        }
        Some(g)
    }
}

/// Minimum-peak sequential order by dynamic programming over executed
/// subsets. Ties between equally good next nodes go to the lowest node id.
pub fn solve_schedule_exact(graph: &Graph, config: &SolveConfig) -> Result<ScheduleResult, SolveError> {
    let n = graph.num_nodes();
    let limit = config.max_nodes.min(MAX_DP_NODES);
    if n > limit {
        return Err(SolveError::TooLarge { what: "graph", size: n, limit });
    }
    let deadline = config.deadline();
    let tables = SubsetTables::new(graph);
    let (order, status) = match tables.cost_to_go(&deadline) {
        Some(g) => {
            let mut order = Vec::with_capacity(n);
            let mut done = 0u32;
            for _ in 0..n {
                let base = tables.base(done);
                let target = g[done as usize];
                let v = tables
                    .ready_nodes(done)
                    .into_iter()
                    .find(|&v| (base + tables.out_size[v]).max(g[(done | 1 << v) as usize]) == target)
                    .expect("some ready node attains the cost-to-go");
                order.push(NodeIx(v));
                done |= 1 << v;
            }
            (order, SolveStatus::Optimal)
        }
        None => (graph.topological_order(), SolveStatus::Timeout),
    };
    let schedule = Schedule::from_order(graph, &order);
    let peak = schedule.peak_resident(graph) as i64;
    let mut assignment = schedule.assignment(graph);
    assignment.insert(VarId::PeakMemNoFrag, peak);
    Ok(ScheduleResult {
        schedule,
        order,
        outcome: SolveOutcome { status, assignment, objective: peak, wall_time: deadline.elapsed() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::compute_bounds;
    use crate::graph::{Node, TensorEdge};
    use crate::milp::{encode_scheduling, evaluate, EncodeOptions};

    fn order4() -> Graph {
        Graph::new(
            vec![Node::compute("v1"), Node::compute("v3"), Node::compute("v2"), Node::compute("v4")],
            vec![
                TensorEdge::data("e1", "v1", &["v2"], 10),
                TensorEdge::data("e2", "v1", &["v3"], 10),
                TensorEdge::data("e3", "v2", &["v4"], 1),
                TensorEdge::data("e4", "v3", &["v4"], 10),
            ],
        )
        .unwrap()
    }

    #[test]
    fn order4_runs_small_consumer_first() {
        let g = order4();
        let r = solve_schedule_exact(&g, &SolveConfig::default()).unwrap();
        assert_eq!(r.outcome.objective, 21);
        let ids: Vec<&str> = r.order.iter().map(|v| g.node(*v).id.as_str()).collect();
        assert_eq!(ids, ["v1", "v2", "v3", "v4"]);
        assert_eq!(r.schedule.resident(&g), vec![20, 21, 21, 11]);
        let program = Schedule::from_order(&g, &g.program_order());
        assert_eq!(program.peak_resident(&g), 30);
    }

    #[test]
    fn assignment_satisfies_the_model() {
        let g = order4();
        let r = solve_schedule_exact(&g, &SolveConfig::default()).unwrap();
        for pruning in [true, false] {
            let m = encode_scheduling(&g, &compute_bounds(&g), EncodeOptions { pruning }).unwrap();
            let ev = evaluate(&m, &r.outcome.assignment).unwrap();
            assert!(ev.feasible, "{:?}", ev.violated);
            assert_eq!(ev.objective, 21);
        }
    }

    #[test]
    fn too_large_is_reported() {
        let g = order4();
        let cfg = SolveConfig { max_nodes: 3, ..SolveConfig::default() };
        assert!(matches!(solve_schedule_exact(&g, &cfg), Err(SolveError::TooLarge { .. })));
    }

    #[test]
    fn empty_graph() {
        let r = solve_schedule_exact(&Graph::empty(), &SolveConfig::default()).unwrap();
        assert_eq!(r.outcome.objective, 0);
        assert!(r.order.is_empty());
    }
}
