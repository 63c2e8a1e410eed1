//! Operator dataflow graphs.
//!
//! A [`Graph`] is an immutable DAG whose nodes are operators and whose edges
//! are tensors. Each edge has exactly one source and any number of sinks; an
//! edge with no sinks is a terminal output and stays resident until the end of
//! the run. The node order given at construction is the program order.

mod format;
mod generate;

pub use format::{load_graph, save_graph};
pub use generate::{generate_graph, GeneratorKind, GeneratorSpec};

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node inside its [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeIx(pub usize);

/// Index of an edge inside its [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeIx(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Compute,
    /// Applies a gradient to a weight; candidate for early scheduling.
    WeightUpdate,
    Source,
    SinkOnly,
}

impl NodeRole {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeRole::Compute => "compute",
            NodeRole::WeightUpdate => "weight_update",
            NodeRole::Source => "source",
            NodeRole::SinkOnly => "sink_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Data,
    /// Zero-size ordering dependency.
    Control,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub role: NodeRole,
}

impl Node {
    pub fn new(id: impl Into<String>, role: NodeRole) -> Self {
        Self { id: id.into(), role }
    }

    pub fn compute(id: impl Into<String>) -> Self {
        Self::new(id, NodeRole::Compute)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorEdge {
    pub id: String,
    pub source: String,
    pub sinks: Vec<String>,
    pub size: u64,
    pub kind: EdgeKind,
}

impl TensorEdge {
    pub fn data(id: impl Into<String>, source: impl Into<String>, sinks: &[&str], size: u64) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            sinks: sinks.iter().map(|s| s.to_string()).collect(),
            size,
            kind: EdgeKind::Data,
        }
    }

    pub fn control(id: impl Into<String>, source: impl Into<String>, sink: impl Into<String>) -> Self {
        Self { id: id.into(), source: source.into(), sinks: vec![sink.into()], size: 0, kind: EdgeKind::Control }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("edge `{edge}` references unknown node `{node}`")]
    DanglingEndpoint { edge: String, node: String },
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("control edge `{0}` must have size 0")]
    ControlEdgeWithSize(String),
    #[error("data edge `{0}` must have a positive size")]
    DataEdgeWithoutSize(String),
    #[error("empty {0} id")]
    EmptyId(&'static str),
    #[error("edge `{0}` lists the same sink twice")]
    DuplicateSink(String),
    #[error("source node `{0}` has incoming edges")]
    SourceWithFanin(String),
    #[error("alignment {0} is not a power of two")]
    BadAlignment(u64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

/// Validated dataflow graph with fanin/fanout indexes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    nodes: Vec<Node>,
    edges: Vec<TensorEdge>,
    node_index: HashMap<String, NodeIx>,
    edge_index: HashMap<String, EdgeIx>,
    edge_source: Vec<NodeIx>,
    edge_sinks: Vec<Vec<NodeIx>>,
    fanin: Vec<Vec<EdgeIx>>,
    fanout: Vec<Vec<EdgeIx>>,
}

impl Graph {
    /// Validates `nodes` and `edges` and builds the derived indexes.
    pub fn new(nodes: Vec<Node>, edges: Vec<TensorEdge>) -> Result<Self, GraphError> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if n.id.is_empty() {
                return Err(GraphError::EmptyId("node"));
            }
            if node_index.insert(n.id.clone(), NodeIx(i)).is_some() {
                return Err(GraphError::DuplicateId { kind: "node", id: n.id.clone() });
            }
        }

        let mut edge_index = HashMap::with_capacity(edges.len());
        let mut edge_source = Vec::with_capacity(edges.len());
        let mut edge_sinks = Vec::with_capacity(edges.len());
        let mut fanin = vec![Vec::new(); nodes.len()];
        let mut fanout = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            if e.id.is_empty() {
                return Err(GraphError::EmptyId("edge"));
            }
            if edge_index.insert(e.id.clone(), EdgeIx(i)).is_some() {
                return Err(GraphError::DuplicateId { kind: "edge", id: e.id.clone() });
            }
            match e.kind {
                EdgeKind::Control if e.size != 0 => return Err(GraphError::ControlEdgeWithSize(e.id.clone())),
                EdgeKind::Data if e.size == 0 => return Err(GraphError::DataEdgeWithoutSize(e.id.clone())),
                _ => {}
            }
            let lookup = |name: &str| {
                node_index
                    .get(name)
                    .copied()
                    .ok_or_else(|| GraphError::DanglingEndpoint { edge: e.id.clone(), node: name.to_string() })
            };
            let src = lookup(&e.source)?;
            let mut sinks = Vec::with_capacity(e.sinks.len());
            let mut seen = HashSet::new();
            for s in &e.sinks {
                let ix = lookup(s)?;
                if !seen.insert(ix) {
                    return Err(GraphError::DuplicateSink(e.id.clone()));
                }
                fanin[ix.0].push(EdgeIx(i));
                sinks.push(ix);
            }
            fanout[src.0].push(EdgeIx(i));
            edge_source.push(src);
            edge_sinks.push(sinks);
        }

        for (i, n) in nodes.iter().enumerate() {
            if n.role == NodeRole::Source && !fanin[i].is_empty() {
                return Err(GraphError::SourceWithFanin(n.id.clone()));
            }
        }

        let graph = Self { nodes, edges, node_index, edge_index, edge_source, edge_sinks, fanin, fanout };
        if let Some(cycle) = graph.find_cycle() {
            return Err(GraphError::CycleDetected(cycle));
        }
        Ok(graph)
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new()).expect("empty graph is valid")
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[TensorEdge] {
        &self.edges
    }

    pub fn node(&self, v: NodeIx) -> &Node {
        &self.nodes[v.0]
    }

    pub fn edge(&self, e: EdgeIx) -> &TensorEdge {
        &self.edges[e.0]
    }

    pub fn node_ix(&self, id: &str) -> Option<NodeIx> {
        self.node_index.get(id).copied()
    }

    pub fn edge_ix(&self, id: &str) -> Option<EdgeIx> {
        self.edge_index.get(id).copied()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeIx> {
        (0..self.nodes.len()).map(NodeIx)
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeIx> {
        (0..self.edges.len()).map(EdgeIx)
    }

    pub fn src(&self, e: EdgeIx) -> NodeIx {
        self.edge_source[e.0]
    }

    pub fn sinks(&self, e: EdgeIx) -> &[NodeIx] {
        &self.edge_sinks[e.0]
    }

    pub fn size(&self, e: EdgeIx) -> u64 {
        self.edges[e.0].size
    }

    pub fn is_terminal(&self, e: EdgeIx) -> bool {
        self.edge_sinks[e.0].is_empty()
    }

    pub fn fanin(&self, v: NodeIx) -> &[EdgeIx] {
        &self.fanin[v.0]
    }

    pub fn fanout(&self, v: NodeIx) -> &[EdgeIx] {
        &self.fanout[v.0]
    }

    /// Edges driven by the same source as `e`, including `e` itself.
    pub fn siblings(&self, e: EdgeIx) -> &[EdgeIx] {
        self.fanout(self.src(e))
    }

    /// Edges feeding the source of `e`.
    pub fn edge_fanin(&self, e: EdgeIx) -> &[EdgeIx] {
        self.fanin(self.src(e))
    }

    /// Immediate predecessors of `v`, deduplicated, in fanin order.
    pub fn predecessors(&self, v: NodeIx) -> Vec<NodeIx> {
        let mut out: Vec<NodeIx> = Vec::new();
        for &f in self.fanin(v) {
            let s = self.src(f);
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }

    /// Immediate successors of `v`, deduplicated, in fanout order.
    pub fn successors(&self, v: NodeIx) -> Vec<NodeIx> {
        let mut out: Vec<NodeIx> = Vec::new();
        for &f in self.fanout(v) {
            for &s in self.sinks(f) {
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        out
    }

    /// Sum of all edge sizes; the big-M constant of the placement encodings.
    pub fn total_size(&self) -> u64 {
        self.edges.iter().map(|e| e.size).sum()
    }

    /// Nodes with no outgoing edge at all. Their execution is not implied by
    /// any tensor creation.
    pub fn is_fanout_free(&self, v: NodeIx) -> bool {
        self.fanout[v.0].is_empty()
    }

    /// Kahn topological order, breaking ties by program order.
    pub fn topological_order(&self) -> Vec<NodeIx> {
        let n = self.nodes.len();
        let mut indeg: Vec<usize> = (0..n).map(|v| self.predecessors(NodeIx(v)).len()).collect();
        let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(NodeIx(v));
            for w in self.successors(NodeIx(v)) {
                indeg[w.0] -= 1;
                if indeg[w.0] == 0 {
                    ready.insert(w.0);
                }
            }
        }
        order
    }

    /// Whether `order` lists every node once with producers before consumers.
    pub fn is_topological(&self, order: &[NodeIx]) -> bool {
        if order.len() != self.nodes.len() {
            return false;
        }
        let mut pos = vec![usize::MAX; self.nodes.len()];
        for (i, v) in order.iter().enumerate() {
            if v.0 >= pos.len() || pos[v.0] != usize::MAX {
                return false;
            }
            pos[v.0] = i;
        }
        self.edge_ids().all(|e| self.sinks(e).iter().all(|s| pos[s.0] > pos[self.src(e).0]))
    }

    /// Program order as node indexes.
    pub fn program_order(&self) -> Vec<NodeIx> {
        self.node_ids().collect()
    }

    /// Copy of this graph with data sizes rounded up to `align` bytes.
    pub fn aligned(&self, align: u64) -> Result<Graph, GraphError> {
        if align == 0 || !align.is_power_of_two() {
            return Err(GraphError::BadAlignment(align));
        }
        let edges = self
            .edges
            .iter()
            .map(|e| TensorEdge { size: e.size.div_ceil(align) * align, ..e.clone() })
            .collect();
        Graph::new(self.nodes.clone(), edges)
    }

    /// Copy of this graph with extra edges appended.
    pub fn with_extra_edges(&self, extra: Vec<TensorEdge>) -> Result<Graph, GraphError> {
        let mut edges = self.edges.clone();
        edges.extend(extra);
        Graph::new(self.nodes.clone(), edges)
    }

    /// Copy with a node's role replaced.
    pub fn with_role(&self, id: &str, role: NodeRole) -> Result<Graph, GraphError> {
        let mut nodes = self.nodes.clone();
        match nodes.iter_mut().find(|n| n.id == id) {
            Some(n) => n.role = role,
            None => return Err(GraphError::DanglingEndpoint { edge: String::new(), node: id.to_string() }),
        }
        Graph::new(nodes, self.edges.clone())
    }

    pub fn into_parts(self) -> (Vec<Node>, Vec<TensorEdge>) {
        (self.nodes, self.edges)
    }

    fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let n = self.nodes.len();
        let succ: Vec<Vec<NodeIx>> = (0..n).map(|v| self.successors(NodeIx(v))).collect();
        let mut mark = vec![Mark::New; n];
        for root in 0..n {
            if mark[root] != Mark::New {
                continue;
            }
            // (node, next successor position)
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            mark[root] = Mark::Active;
            while let Some(&mut (v, ref mut pos)) = stack.last_mut() {
                if let Some(&w) = succ[v].get(*pos) {
                    *pos += 1;
                    match mark[w.0] {
                        Mark::New => {
                            mark[w.0] = Mark::Active;
                            stack.push((w.0, 0));
                        }
                        Mark::Active => {
                            let start = stack.iter().position(|&(u, _)| u == w.0).unwrap_or(0);
                            let mut cycle: Vec<String> =
                                stack[start..].iter().map(|&(u, _)| self.nodes[u].id.clone()).collect();
                            cycle.push(self.nodes[w.0].id.clone());
                            return Some(cycle);
                        }
                        Mark::Done => {}
                    }
                } else {
                    mark[v] = Mark::Done;
                    stack.pop();
                }
            }
        }
        None
    }
}

impl fmt::Display for NodeIx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}
