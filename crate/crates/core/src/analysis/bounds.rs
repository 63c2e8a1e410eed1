use serde::{Deserialize, Serialize};

use super::levels::compute_levels;
use super::reach::Reachability;
use super::Timestep;
use crate::graph::{EdgeIx, Graph, NodeIx};

/// Inclusive timestep range; empty when `lo > hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: Timestep,
    pub hi: Timestep,
}

impl Interval {
    pub fn new(lo: Timestep, hi: Timestep) -> Self {
        Self { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn contains(&self, t: Timestep) -> bool {
        self.lo <= t && t <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        !self.is_empty() && !other.is_empty() && self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            self.hi - self.lo + 1
        }
    }
}

/// ASAP/ALAP windows for nodes and the derived per-edge windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LifetimeBounds {
    /// Number of timesteps (= number of nodes).
    pub horizon: usize,
    pub asap: Vec<Timestep>,
    pub alap: Vec<Timestep>,
    /// Maximum useful lifetime: preservation is impossible outside it.
    pub mul: Vec<Interval>,
    /// Forced preservation window.
    pub pres: Vec<Interval>,
}

impl LifetimeBounds {
    pub fn span(&self, v: NodeIx) -> Interval {
        Interval::new(self.asap[v.0], self.alap[v.0])
    }

    pub fn mul(&self, e: EdgeIx) -> Interval {
        self.mul[e.0]
    }

    pub fn pres(&self, e: EdgeIx) -> Interval {
        self.pres[e.0]
    }

    pub fn is_feasible(&self) -> bool {
        self.asap.iter().zip(&self.alap).all(|(a, b)| a <= b)
    }
}

pub fn compute_bounds(graph: &Graph) -> LifetimeBounds {
    let n = graph.num_nodes();
    let levels = compute_levels(graph);
    let asap: Vec<Timestep> = levels.fwd.iter().map(|l| 1 + l).collect();
    let alap: Vec<Timestep> = levels.bwd.iter().map(|l| n - l).collect();
    let mut mul = Vec::with_capacity(graph.num_edges());
    let mut pres = Vec::with_capacity(graph.num_edges());
    for e in graph.edge_ids() {
        let src = graph.src(e);
        let sinks = graph.sinks(e);
        // Terminal outputs are kept until the last timestep.
        let (last_alap, last_asap) = if sinks.is_empty() {
            (n, n)
        } else {
            (
                sinks.iter().map(|s| alap[s.0]).max().unwrap_or(n),
                sinks.iter().map(|s| asap[s.0]).max().unwrap_or(n),
            )
        };
        mul.push(Interval::new(asap[src.0], last_alap));
        pres.push(Interval::new(alap[src.0] + 1, last_asap));
    }
    LifetimeBounds { horizon: n, asap, alap, mul, pres }
}

/// True when `e1` and `e2` can never be resident together, either because
/// their maximum useful lifetimes are disjoint or because every sink of `e1`
/// runs strictly before the source of `e2` and the two share no vertex.
pub fn edge_precedes(
    e1: EdgeIx,
    e2: EdgeIx,
    graph: &Graph,
    bounds: &LifetimeBounds,
    reach: &mut Reachability<'_>,
) -> bool {
    if e1 == e2 {
        return false;
    }
    if !bounds.mul(e1).overlaps(&bounds.mul(e2)) {
        return true;
    }
    let sinks = graph.sinks(e1);
    // A terminal output lives to the end, so nothing comes strictly after it.
    if sinks.is_empty() {
        return false;
    }
    let src2 = graph.src(e2);
    let endpoints = |e: EdgeIx| std::iter::once(graph.src(e)).chain(graph.sinks(e).iter().copied());
    let shared = endpoints(e1).any(|a| endpoints(e2).any(|b| a == b));
    if shared {
        return false;
    }
    sinks.iter().all(|&s| reach.is_in_transitive_fanin(s, src2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Node, TensorEdge};

    fn chain(n: usize) -> Graph {
        let nodes = (1..=n).map(|i| Node::compute(format!("v{i}"))).collect();
        let edges = (1..n).map(|i| TensorEdge::data(format!("e{i}"), format!("v{i}"), &[&format!("v{}", i + 1)], 1)).collect();
        Graph::new(nodes, edges).unwrap()
    }

    #[test]
    fn chain_spans_are_singletons() {
        let g = chain(3);
        let b = compute_bounds(&g);
        assert_eq!(b.asap, vec![1, 2, 3]);
        assert_eq!(b.alap, vec![1, 2, 3]);
        assert_eq!(b.mul(EdgeIx(0)), Interval::new(1, 2));
        assert_eq!(b.pres(EdgeIx(0)), Interval::new(2, 2));
        for v in g.node_ids() {
            assert_eq!(b.span(v).len(), 1);
        }
    }

    #[test]
    fn diamond_bounds() {
        let g = Graph::new(
            vec![Node::compute("v1"), Node::compute("v2"), Node::compute("v3"), Node::compute("v4")],
            vec![
                TensorEdge::data("a", "v1", &["v2", "v3"], 1),
                TensorEdge::data("b", "v2", &["v4"], 1),
                TensorEdge::data("c", "v3", &["v4"], 1),
            ],
        )
        .unwrap();
        let b = compute_bounds(&g);
        assert_eq!((b.asap[1], b.asap[2]), (2, 2));
        assert_eq!((b.alap[1], b.alap[2]), (3, 3));
        assert!(b.is_feasible());
    }

    #[test]
    fn terminal_edges_reach_the_horizon() {
        let g = Graph::new(
            vec![Node::compute("a"), Node::compute("b")],
            vec![TensorEdge::data("x", "a", &["b"], 1), TensorEdge::data("out", "a", &[], 1)],
        )
        .unwrap();
        let b = compute_bounds(&g);
        assert_eq!(b.mul(EdgeIx(1)), Interval::new(1, 2));
        assert_eq!(b.pres(EdgeIx(1)), Interval::new(2, 2));
    }

    #[test]
    fn precedence_on_a_chain() {
        let g = chain(4);
        let b = compute_bounds(&g);
        let mut r = Reachability::new(&g);
        assert!(edge_precedes(EdgeIx(0), EdgeIx(2), &g, &b, &mut r));
        assert!(!edge_precedes(EdgeIx(0), EdgeIx(1), &g, &b, &mut r));
        // Reversed pair: the windows [1,2] and [3,4] are already disjoint.
        assert!(edge_precedes(EdgeIx(2), EdgeIx(0), &g, &b, &mut r));
    }

    #[test]
    fn precedence_by_disjoint_mul() {
        // Two independent producers whose windows are pinned apart by a chain.
        let g = Graph::new(
            vec![Node::compute("a"), Node::compute("b"), Node::compute("c"), Node::compute("d")],
            vec![
                TensorEdge::data("x", "a", &["b"], 1),
                TensorEdge::data("y", "b", &["c"], 1),
                TensorEdge::data("z", "c", &["d"], 1),
            ],
        )
        .unwrap();
        let b = compute_bounds(&g);
        assert_eq!(b.mul(EdgeIx(0)), Interval::new(1, 2));
        assert_eq!(b.mul(EdgeIx(2)), Interval::new(3, 4));
        let mut r = Reachability::new(&g);
        assert!(edge_precedes(EdgeIx(0), EdgeIx(2), &g, &b, &mut r));
        assert!(edge_precedes(EdgeIx(2), EdgeIx(0), &g, &b, &mut r));
    }

    #[test]
    fn terminal_edge_never_precedes_by_reachability() {
        let g = Graph::new(
            vec![Node::compute("a"), Node::compute("b"), Node::compute("c"), Node::compute("d")],
            vec![
                TensorEdge::data("out", "a", &[], 1),
                TensorEdge::data("x", "a", &["b"], 1),
                TensorEdge::data("y", "b", &["c"], 1),
                TensorEdge::data("z", "c", &["d"], 1),
            ],
        )
        .unwrap();
        let b = compute_bounds(&g);
        let mut r = Reachability::new(&g);
        assert!(!edge_precedes(EdgeIx(0), EdgeIx(3), &g, &b, &mut r));
    }
}
