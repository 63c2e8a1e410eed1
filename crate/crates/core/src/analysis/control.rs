//! Control edges that pull weight updates towards the start of the schedule.
//!
//! For every weight-update node we search outward from its fanin for an
//! anchor: a node at a strictly higher forward level (so the new edge cannot
//! close a cycle) with the highest backward level (so it runs early). A
//! zero-size control edge from the update to the anchor then caps the
//! update's ALAP below the anchor's.

use std::collections::{BTreeSet, HashMap};

use super::levels::{compute_levels, Levelization};
use crate::graph::{Graph, NodeIx, NodeRole, TensorEdge};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddedControlEdge {
    pub edge: String,
    pub update: String,
    pub anchor: String,
}

#[derive(Debug, Clone)]
pub struct ControlEdgeReport {
    pub graph: Graph,
    pub added: Vec<AddedControlEdge>,
}

type Candidate = (Option<NodeIx>, i64);

struct AnchorSearch<'a> {
    graph: &'a Graph,
    levels: &'a Levelization,
    rank: &'a [usize],
    min_fwd_level: usize,
    visited: HashMap<NodeIx, Candidate>,
}

impl AnchorSearch<'_> {
    /// Higher backward level wins; equal levels go to the lower node id.
    fn improves(&self, level: i64, cand: Option<NodeIx>, best: Candidate) -> bool {
        match (cand, best.1) {
            (None, _) => false,
            (Some(_), b) if level > b => true,
            (Some(c), b) if level == b => best.0.is_some_and(|bc| self.rank[c.0] < self.rank[bc.0]),
            _ => false,
        }
    }

    fn find_candidate(&mut self, v: NodeIx) -> Candidate {
        if let Some(&hit) = self.visited.get(&v) {
            return hit;
        }
        let graph = self.graph;
        let mut best: Candidate = (None, -1);
        for &f in graph.fanout(v) {
            for &snk in graph.sinks(f) {
                let snk_bwd = self.levels.bwd(snk) as i64;
                if snk_bwd < best.1 {
                    continue;
                }
                if self.levels.fwd(snk) <= self.min_fwd_level {
                    let (cand, level) = self.find_candidate(snk);
                    if self.improves(level, cand, best) {
                        best = (cand, level);
                    }
                } else if self.improves(snk_bwd, Some(snk), best) {
                    best = (Some(snk), snk_bwd);
                }
            }
        }
        self.visited.insert(v, best);
        best
    }
}

fn control_edge_id(graph_edges: &BTreeSet<String>, update: &str, anchor: &str) -> String {
    let base = format!("ctrl_{update}_{anchor}");
    if !graph_edges.contains(&base) {
        return base;
    }
    (2..).map(|k| format!("{base}_{k}")).find(|id| !graph_edges.contains(id)).expect("unbounded search")
}

/// Adds one control edge per weight-update node that has a valid anchor.
/// Levels are computed once on the input graph.
pub fn enforce_early_weight_updates(graph: &Graph) -> ControlEdgeReport {
    let levels = compute_levels(graph);
    let mut by_id: Vec<NodeIx> = graph.node_ids().collect();
    by_id.sort_by(|a, b| graph.node(*a).id.cmp(&graph.node(*b).id));
    let mut rank = vec![0usize; graph.num_nodes()];
    for (r, v) in by_id.iter().enumerate() {
        rank[v.0] = r;
    }

    let mut edge_ids: BTreeSet<String> = graph.edges().iter().map(|e| e.id.clone()).collect();
    let mut extra = Vec::new();
    let mut added = Vec::new();
    for v in graph.node_ids().filter(|&v| graph.node(v).role == NodeRole::WeightUpdate) {
        let mut search = AnchorSearch {
            graph,
            levels: &levels,
            rank: &rank,
            min_fwd_level: levels.fwd(v),
            visited: HashMap::new(),
        };
        let mut best: Candidate = (None, -1);
        let mut starts: BTreeSet<(usize, NodeIx)> = BTreeSet::from([(rank[v.0], v)]);
        while best.0.is_none() && !starts.is_empty() {
            let next: BTreeSet<(usize, NodeIx)> = starts
                .iter()
                .flat_map(|&(_, u)| graph.fanin(u).iter().map(|&f| graph.src(f)))
                .map(|s| (rank[s.0], s))
                .collect();
            starts = next;
            for &(_, src) in &starts {
                let (cand, level) = search.find_candidate(src);
                if search.improves(level, cand, best) {
                    best = (cand, level);
                }
            }
            if let Some(anchor) = best.0 {
                let update = graph.node(v).id.clone();
                let anchor = graph.node(anchor).id.clone();
                let id = control_edge_id(&edge_ids, &update, &anchor);
                edge_ids.insert(id.clone());
                extra.push(TensorEdge::control(id.clone(), update.clone(), anchor.clone()));
                added.push(AddedControlEdge { edge: id, update, anchor });
            }
        }
    }

    let graph = if extra.is_empty() {
        graph.clone()
    } else {
        // Every control edge climbs the original forward levelization, so the
        // result stays acyclic.
        graph.with_extra_edges(extra).expect("control edges keep the graph acyclic")
    };
    ControlEdgeReport { graph, added }
}
