use std::collections::HashMap;

use crate::graph::{Graph, NodeIx};

/// Memoized reachability queries over one graph.
///
/// Every intermediate answer discovered while walking the fanin of the target
/// is cached, so later queries through the same vertices are constant time.
#[derive(Debug)]
pub struct Reachability<'g> {
    graph: &'g Graph,
    cache: HashMap<(NodeIx, NodeIx), bool>,
}

impl<'g> Reachability<'g> {
    pub fn new(graph: &'g Graph) -> Self {
        Self { graph, cache: HashMap::new() }
    }

    /// True iff there is a directed path `from ~> to` of at least one edge.
    pub fn is_in_transitive_fanin(&mut self, from: NodeIx, to: NodeIx) -> bool {
        if let Some(&hit) = self.cache.get(&(from, to)) {
            return hit;
        }
        let graph = self.graph;
        for &f in graph.fanin(to) {
            let src = graph.src(f);
            if src == from || self.is_in_transitive_fanin(from, src) {
                self.cache.insert((from, to), true);
                return true;
            }
        }
        self.cache.insert((from, to), false);
        false
    }

    pub fn cached_pairs(&self) -> usize {
        self.cache.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_graph, GeneratorKind, GeneratorSpec, Node, TensorEdge};

    fn plain_dfs(g: &Graph, from: NodeIx, to: NodeIx) -> bool {
        let mut seen = vec![false; g.num_nodes()];
        let mut stack = g.successors(from);
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if !std::mem::replace(&mut seen[v.0], true) {
                stack.extend(g.successors(v));
            }
        }
        false
    }

    #[test]
    fn chain_and_diamond() {
        let chain = Graph::new(
            vec![Node::compute("v1"), Node::compute("v2"), Node::compute("v3")],
            vec![TensorEdge::data("e1", "v1", &["v2"], 4), TensorEdge::data("e2", "v2", &["v3"], 2)],
        )
        .unwrap();
        let mut r = Reachability::new(&chain);
        assert!(r.is_in_transitive_fanin(NodeIx(0), NodeIx(2)));
        assert!(!r.is_in_transitive_fanin(NodeIx(2), NodeIx(0)));

        let diamond = Graph::new(
            vec![Node::compute("v1"), Node::compute("v2"), Node::compute("v3"), Node::compute("v4")],
            vec![
                TensorEdge::data("a", "v1", &["v2", "v3"], 1),
                TensorEdge::data("b", "v2", &["v4"], 1),
                TensorEdge::data("c", "v3", &["v4"], 1),
            ],
        )
        .unwrap();
        let mut r = Reachability::new(&diamond);
        assert!(!r.is_in_transitive_fanin(NodeIx(1), NodeIx(2)));
        assert!(r.is_in_transitive_fanin(NodeIx(0), NodeIx(3)));
    }

    #[test]
    fn agrees_with_plain_dfs_on_all_pairs() {
        for seed in 0..20 {
            for kind in [GeneratorKind::Random, GeneratorKind::TrainingLike, GeneratorKind::ForkJoin] {
                let g = generate_graph(&GeneratorSpec::new(kind, 3).with_seed(seed)).unwrap();
                let mut r = Reachability::new(&g);
                for a in g.node_ids() {
                    for b in g.node_ids() {
                        assert_eq!(r.is_in_transitive_fanin(a, b), plain_dfs(&g, a, b));
                    }
                }
            }
        }
    }
}
