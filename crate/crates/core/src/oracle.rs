//! Brute-force reference answers for small instances.
//!
//! Nothing here shares code with the planner apart from [`Graph`]; the
//! searches are exhaustive and deliberately unoptimized so they can be
//! trusted as ground truth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, NodeIx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleBudget {
    pub max_nodes: usize,
    pub max_tensors: usize,
    /// Cap on orders visited or packing states expanded.
    pub max_states: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self { max_nodes: 9, max_tensors: 7, max_states: 50_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("oracle budget exceeded: {0}")]
    BudgetExceeded(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderOptimum {
    pub min_peak: u64,
    pub order: Vec<NodeIx>,
}

/// Peak resident bytes of one complete order: each tensor occupies memory
/// from its producer's step through its last consumer's step, or through
/// the final step when nothing consumes it.
fn order_peak(graph: &Graph, order: &[NodeIx]) -> u64 {
    let n = order.len();
    let mut step = vec![0usize; graph.num_nodes()];
    for (k, v) in order.iter().enumerate() {
        step[v.0] = k + 1;
    }
    let mut peak = 0;
    for t in 1..=n {
        let mut bytes = 0;
        for e in graph.edge_ids() {
            let born = step[graph.src(e).0];
            let dies = graph.sinks(e).iter().map(|s| step[s.0]).max().unwrap_or(n);
            if born <= t && t <= dies {
                bytes += graph.size(e);
            }
        }
        peak = peak.max(bytes);
    }
    peak
}

struct OrderEnum<'a> {
    graph: &'a Graph,
    budget: u64,
    visited: u64,
    prefix: Vec<NodeIx>,
    placed: Vec<bool>,
    best: Option<OrderOptimum>,
}

impl OrderEnum<'_> {
    fn ready(&self, v: NodeIx) -> bool {
        self.graph.fanin(v).iter().all(|&e| self.placed[self.graph.src(e).0])
    }

    fn walk(&mut self) -> Result<(), OracleError> {
        if self.prefix.len() == self.graph.num_nodes() {
            self.visited += 1;
            if self.visited > self.budget {
                return Err(OracleError::BudgetExceeded(format!("more than {} orders", self.budget)));
            }
            let peak = order_peak(self.graph, &self.prefix);
            if self.best.as_ref().is_none_or(|b| peak < b.min_peak) {
                self.best = Some(OrderOptimum { min_peak: peak, order: self.prefix.clone() });
            }
            return Ok(());
        }
        for v in self.graph.node_ids() {
            if !self.placed[v.0] && self.ready(v) {
                self.placed[v.0] = true;
                self.prefix.push(v);
                self.walk()?;
                self.prefix.pop();
                self.placed[v.0] = false;
            }
        }
        Ok(())
    }
}

/// Minimum peak resident set over every topological order.
pub fn enumerate_min_peak(graph: &Graph, budget: &OracleBudget) -> Result<OrderOptimum, OracleError> {
    if graph.num_nodes() > budget.max_nodes {
        return Err(OracleError::BudgetExceeded(format!(
            "{} nodes, limit {}",
            graph.num_nodes(),
            budget.max_nodes
        )));
    }
    let mut walk = OrderEnum {
        graph,
        budget: budget.max_states,
        visited: 0,
        prefix: Vec::new(),
        placed: vec![false; graph.num_nodes()],
        best: None,
    };
    walk.walk()?;
    Ok(walk.best.unwrap_or(OrderOptimum { min_peak: 0, order: Vec::new() }))
}

/// One item to pack: inclusive lifetime `[first, last]` and byte size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackItem {
    pub first: usize,
    pub last: usize,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackingOptimum {
    pub min_peak: u64,
    /// Offset per input item.
    pub offsets: Vec<u64>,
}

fn concurrent(a: &PackItem, b: &PackItem) -> bool {
    a.first <= b.last && b.first <= a.last
}

struct Packer<'a> {
    items: &'a [PackItem],
    offsets: Vec<u64>,
    states: u64,
    budget: u64,
}

impl Packer<'_> {
    /// Tries every byte offset for item `i` below `peak`. Identical items
    /// are forced into increasing offsets; that is the only pruning.
    fn fits(&mut self, i: usize, peak: u64) -> Result<bool, OracleError> {
        if i == self.items.len() {
            return Ok(true);
        }
        let it = self.items[i];
        if it.size > peak {
            return Ok(false);
        }
        let floor = (0..i).filter(|&j| self.items[j] == it).map(|j| self.offsets[j] + 1).max().unwrap_or(0);
        for offset in floor..=peak - it.size {
            self.states += 1;
            if self.states > self.budget {
                return Err(OracleError::BudgetExceeded(format!("more than {} packing states", self.budget)));
            }
            let clash = (0..i).any(|j| {
                let other = &self.items[j];
                concurrent(&it, other)
                    && offset < self.offsets[j] + other.size
                    && self.offsets[j] < offset + it.size
            });
            if !clash {
                self.offsets[i] = offset;
                if self.fits(i + 1, peak)? {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }
}

/// Smallest buffer that holds every item without two concurrent items
/// sharing a byte, found by trying each buffer size from zero upward.
pub fn enumerate_min_packing(items: &[PackItem], budget: &OracleBudget) -> Result<PackingOptimum, OracleError> {
    if items.len() > budget.max_tensors {
        return Err(OracleError::BudgetExceeded(format!("{} tensors, limit {}", items.len(), budget.max_tensors)));
    }
    let total: u64 = items.iter().map(|i| i.size).sum();
    let mut packer = Packer { items, offsets: vec![0; items.len()], states: 0, budget: budget.max_states };
    for peak in 0..=total {
        if packer.fits(0, peak)? {
            return Ok(PackingOptimum { min_peak: peak, offsets: packer.offsets });
        }
    }
    unreachable!("stacking every item fits in the total size")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Node, TensorEdge};

    fn item(first: usize, last: usize, size: u64) -> PackItem {
        PackItem { first, last, size }
    }

    #[test]
    fn chain3_and_order4() {
        let chain3 = Graph::new(
            vec![Node::compute("v1"), Node::compute("v2"), Node::compute("v3")],
            vec![TensorEdge::data("e1", "v1", &["v2"], 4), TensorEdge::data("e2", "v2", &["v3"], 2)],
        )
        .unwrap();
        assert_eq!(enumerate_min_peak(&chain3, &OracleBudget::default()).unwrap().min_peak, 6);

        let order4 = Graph::new(
            vec![Node::compute("v1"), Node::compute("v3"), Node::compute("v2"), Node::compute("v4")],
            vec![
                TensorEdge::data("e1", "v1", &["v2"], 10),
                TensorEdge::data("e2", "v1", &["v3"], 10),
                TensorEdge::data("e3", "v2", &["v4"], 1),
                TensorEdge::data("e4", "v3", &["v4"], 10),
            ],
        )
        .unwrap();
        let best = enumerate_min_peak(&order4, &OracleBudget::default()).unwrap();
        assert_eq!(best.min_peak, 21);
        assert_eq!(order_peak(&order4, &order4.program_order()), 30);
    }

    #[test]
    fn independent_terminal_outputs() {
        let g = Graph::new(
            vec![Node::compute("a"), Node::compute("b")],
            vec![TensorEdge::data("x", "a", &[], 5), TensorEdge::data("y", "b", &[], 3)],
        )
        .unwrap();
        assert_eq!(enumerate_min_peak(&g, &OracleBudget::default()).unwrap().min_peak, 8);
    }

    #[test]
    fn packing_examples() {
        let b = OracleBudget::default();
        // pack3 lifetimes under its program order.
        let pack3 = [item(1, 2, 2), item(1, 4, 4), item(3, 4, 4)];
        assert_eq!(enumerate_min_packing(&pack3, &b).unwrap().min_peak, 8);
        let disjoint = [item(1, 1, 9), item(2, 2, 1), item(3, 3, 1)];
        assert_eq!(enumerate_min_packing(&disjoint, &b).unwrap().min_peak, 9);
        let overlapping = [item(1, 2, 2), item(1, 2, 3)];
        assert_eq!(enumerate_min_packing(&overlapping, &b).unwrap().min_peak, 5);
        assert_eq!(enumerate_min_packing(&[], &b).unwrap().min_peak, 0);
    }

    #[test]
    fn budgets_abort() {
        let tight = OracleBudget { max_nodes: 1, max_tensors: 1, max_states: 1 };
        let items = [item(1, 2, 2), item(1, 2, 3)];
        assert!(enumerate_min_packing(&items, &tight).is_err());
        let g = Graph::new(vec![Node::compute("a"), Node::compute("b")], vec![]).unwrap();
        assert!(enumerate_min_peak(&g, &tight).is_err());
    }
}
