use crate::graph::{Graph, NodeIx};

/// Longest-path levels in both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Levelization {
    /// Longest distance (in edges) from any node without fanin.
    pub fwd: Vec<usize>,
    /// Longest distance (in edges) to any node without successors.
    pub bwd: Vec<usize>,
}

impl Levelization {
    pub fn fwd(&self, v: NodeIx) -> usize {
        self.fwd[v.0]
    }

    pub fn bwd(&self, v: NodeIx) -> usize {
        self.bwd[v.0]
    }
}

/// Relaxes levels along a topological order, so it runs in `O(|V| + |E|)`.
pub fn compute_levels(graph: &Graph) -> Levelization {
    let order = graph.topological_order();
    let n = graph.num_nodes();
    let mut fwd = vec![0usize; n];
    for &v in &order {
        for w in graph.successors(v) {
            fwd[w.0] = fwd[w.0].max(fwd[v.0] + 1);
        }
    }
    let mut bwd = vec![0usize; n];
    for &v in order.iter().rev() {
        for w in graph.successors(v) {
            bwd[v.0] = bwd[v.0].max(bwd[w.0] + 1);
        }
    }
    Levelization { fwd, bwd }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Node, TensorEdge};

    fn diamond() -> Graph {
        Graph::new(
            vec![Node::compute("v1"), Node::compute("v2"), Node::compute("v3"), Node::compute("v4")],
            vec![
                TensorEdge::data("a", "v1", &["v2", "v3"], 1),
                TensorEdge::data("b", "v2", &["v4"], 1),
                TensorEdge::data("c", "v3", &["v4"], 1),
            ],
        )
        .unwrap()
    }

    /// Longest path by enumerating every path from every node.
    fn longest_paths_by_enumeration(g: &Graph) -> (Vec<usize>, Vec<usize>) {
        fn walk(g: &Graph, v: NodeIx, depth: usize, fwd: &mut [usize]) {
            fwd[v.0] = fwd[v.0].max(depth);
            for w in g.successors(v) {
                walk(g, w, depth + 1, fwd);
            }
        }
        let n = g.num_nodes();
        let mut fwd = vec![0; n];
        for v in g.node_ids() {
            walk(g, v, 0, &mut fwd);
        }
        let mut bwd = vec![0; n];
        for v in g.node_ids() {
            let mut reach = vec![0; n];
            walk(g, v, 0, &mut reach);
            bwd[v.0] = reach.into_iter().max().unwrap_or(0);
        }
        (fwd, bwd)
    }

    #[test]
    fn chain_levels() {
        let g = Graph::new(
            vec![Node::compute("v1"), Node::compute("v2"), Node::compute("v3")],
            vec![TensorEdge::data("e1", "v1", &["v2"], 4), TensorEdge::data("e2", "v2", &["v3"], 2)],
        )
        .unwrap();
        let l = compute_levels(&g);
        assert_eq!(l.fwd, vec![0, 1, 2]);
        assert_eq!(l.bwd, vec![2, 1, 0]);
    }

    #[test]
    fn diamond_levels_match_enumeration() {
        let g = diamond();
        let l = compute_levels(&g);
        assert_eq!(l.fwd, vec![0, 1, 1, 2]);
        assert_eq!(l.bwd[0], 2);
        let (fwd, bwd) = longest_paths_by_enumeration(&g);
        assert_eq!(l.fwd, fwd);
        assert_eq!(l.bwd, bwd);
    }

    #[test]
    fn single_node() {
        let g = Graph::new(vec![Node::compute("v")], vec![]).unwrap();
        let l = compute_levels(&g);
        assert_eq!((l.fwd[0], l.bwd[0]), (0, 0));
    }

    #[test]
    fn generated_graphs_match_enumeration() {
        use crate::graph::{generate_graph, GeneratorKind, GeneratorSpec};
        for seed in 0..30 {
            let g = generate_graph(&GeneratorSpec::new(GeneratorKind::Random, 7).with_seed(seed)).unwrap();
            let l = compute_levels(&g);
            let (fwd, bwd) = longest_paths_by_enumeration(&g);
            assert_eq!(l.fwd, fwd, "seed {seed}");
            assert_eq!(l.bwd, bwd, "seed {seed}");
        }
    }
}
