use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{fragmentation, Fragmentation, PlacementError};
use crate::graph::{Graph, NodeIx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocPolicy {
    FirstFit,
    BestFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub policy: AllocPolicy,
    /// Arena high-water mark.
    pub mr_peak: u64,
    /// Resident bytes at the first timestep the arena reached `mr_peak`.
    pub rs_at_peak: u64,
    pub peak_timestep: usize,
    pub fragmentation: Fragmentation,
    pub addresses: BTreeMap<String, u64>,
}

/// Free-list arena that only grows at the top.
struct Arena {
    /// Free blocks as (offset, size), sorted and coalesced.
    free: Vec<(u64, u64)>,
    top: u64,
}

impl Arena {
    fn allocate(&mut self, size: u64, policy: AllocPolicy) -> u64 {
        let fits = self.free.iter().enumerate().filter(|(_, b)| b.1 >= size);
        let chosen = match policy {
            AllocPolicy::FirstFit => fits.map(|(i, _)| i).next(),
            AllocPolicy::BestFit => fits.min_by_key(|(_, b)| (b.1, b.0)).map(|(i, _)| i),
        };
        if let Some(i) = chosen {
            let (offset, avail) = self.free[i];
            if avail == size {
                self.free.remove(i);
            } else {
                self.free[i] = (offset + size, avail - size);
            }
            return offset;
        }
        // Grow, reusing a free block that already touches the top.
        match self.free.last() {
            Some(&(offset, avail)) if offset + avail == self.top => {
                self.free.pop();
                self.top = offset + size;
                offset
            }
            _ => {
                let offset = self.top;
                self.top += size;
                offset
            }
        }
    }

    fn release(&mut self, offset: u64, size: u64) {
        let at = self.free.partition_point(|b| b.0 < offset);
        self.free.insert(at, (offset, size));
        if at + 1 < self.free.len() && self.free[at].0 + self.free[at].1 == self.free[at + 1].0 {
            self.free[at].1 += self.free[at + 1].1;
            self.free.remove(at + 1);
        }
        if at > 0 && self.free[at - 1].0 + self.free[at - 1].1 == self.free[at].0 {
            self.free[at - 1].1 += self.free[at].1;
            self.free.remove(at);
        }
    }
}

/// Simulates allocate-on-create and free-after-last-use along `order`.
/// Frees happen at the start of the step after a tensor's last consumer
/// ran; terminal outputs are never freed.
pub fn run_baseline(graph: &Graph, order: &[NodeIx], policy: AllocPolicy) -> Result<BaselineResult, PlacementError> {
    if order.len() != graph.num_nodes() || !graph.is_topological(order) {
        return Err(PlacementError::InvalidOrder(
            order.iter().map(|v| graph.node(*v).id.as_str()).collect::<Vec<_>>().join(", "),
        ));
    }
    let mut step = vec![0usize; graph.num_nodes()];
    for (k, v) in order.iter().enumerate() {
        step[v.0] = k + 1;
    }
    let last_use = |e| graph.sinks(e).iter().map(|s: &NodeIx| step[s.0]).max();

    let mut arena = Arena { free: Vec::new(), top: 0 };
    let mut addresses = BTreeMap::new();
    let mut live: Vec<(crate::graph::EdgeIx, u64)> = Vec::new();
    let (mut mr_peak, mut rs_at_peak, mut peak_timestep) = (0u64, 0u64, 0usize);
    for (k, &v) in order.iter().enumerate() {
        let t = k + 1;
        live.retain(|&(e, offset)| {
            let keep = last_use(e).is_none_or(|last| last >= t);
            if !keep {
                arena.release(offset, graph.size(e));
            }
            keep
        });
        for &e in graph.fanout(v).iter().filter(|&&e| graph.size(e) > 0) {
            let offset = arena.allocate(graph.size(e), policy);
            addresses.insert(graph.edge(e).id.clone(), offset);
            live.push((e, offset));
        }
        let rs: u64 = live.iter().map(|&(e, _)| graph.size(e)).sum();
        if arena.top > mr_peak {
            (mr_peak, rs_at_peak, peak_timestep) = (arena.top, rs, t);
        }
    }
    Ok(BaselineResult {
        policy,
        mr_peak,
        rs_at_peak,
        peak_timestep,
        fragmentation: fragmentation(mr_peak, rs_at_peak)?,
        addresses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Node, TensorEdge};

    fn pack3() -> Graph {
        Graph::new(
            vec![Node::compute("v1"), Node::compute("v2"), Node::compute("v3"), Node::compute("v4")],
            vec![
                TensorEdge::data("A", "v1", &["v2"], 2),
                TensorEdge::data("B", "v1", &["v4"], 4),
                TensorEdge::control("K", "v2", "v3"),
                TensorEdge::data("C", "v3", &["v4"], 4),
            ],
        )
        .unwrap()
    }

    #[test]
    fn pack3_first_fit_fragments() {
        let g = pack3();
        let r = run_baseline(&g, &g.program_order(), AllocPolicy::FirstFit).unwrap();
        assert_eq!((r.mr_peak, r.rs_at_peak), (10, 8));
        assert_eq!(r.addresses["C"], 6);
        assert_eq!(r.fragmentation.as_f64(), 0.2);
    }

    #[test]
    fn chain_has_no_fragmentation() {
        let g = Graph::new(
            vec![Node::compute("v1"), Node::compute("v2"), Node::compute("v3")],
            vec![TensorEdge::data("e1", "v1", &["v2"], 4), TensorEdge::data("e2", "v2", &["v3"], 2)],
        )
        .unwrap();
        let r = run_baseline(&g, &g.program_order(), AllocPolicy::FirstFit).unwrap();
        assert_eq!((r.mr_peak, r.rs_at_peak), (6, 6));
        assert_eq!(r.fragmentation.as_f64(), 0.0);
    }

    #[test]
    fn rejects_bad_orders() {
        let g = pack3();
        let bad = vec![NodeIx(1), NodeIx(0), NodeIx(2), NodeIx(3)];
        assert!(matches!(run_baseline(&g, &bad, AllocPolicy::FirstFit), Err(PlacementError::InvalidOrder(_))));
    }

    #[test]
    fn coalescing_and_growth() {
        let mut a = Arena { free: Vec::new(), top: 0 };
        let x = a.allocate(4, AllocPolicy::FirstFit);
        let y = a.allocate(4, AllocPolicy::FirstFit);
        let z = a.allocate(4, AllocPolicy::FirstFit);
        a.release(y, 4);
        a.release(x, 4);
        assert_eq!(a.free, vec![(0, 8)]);
        a.release(z, 4);
        assert_eq!(a.free, vec![(0, 12)]);
        // A 16-byte request extends the trailing block instead of leaving it.
        assert_eq!(a.allocate(16, AllocPolicy::BestFit), 0);
        assert_eq!(a.top, 16);
    }
}
