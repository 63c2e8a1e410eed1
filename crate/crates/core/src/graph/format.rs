//! Canonical on-disk graph format (JSON).

use serde::{Deserialize, Serialize};

use super::{EdgeKind, Graph, GraphError, Node, NodeRole, TensorEdge};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: String,
    role: NodeRole,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    id: String,
    source: String,
    sinks: Vec<String>,
    size: u64,
    kind: EdgeKind,
}

/// Parses a graph file and validates it.
pub fn load_graph(bytes: &[u8]) -> Result<Graph, GraphError> {
    let file: GraphFile = serde_json::from_slice(bytes).map_err(|e| GraphError::Parse(e.to_string()))?;
    let nodes = file.nodes.into_iter().map(|n| Node { id: n.id, role: n.role }).collect();
    let edges = file
        .edges
        .into_iter()
        .map(|e| TensorEdge { id: e.id, source: e.source, sinks: e.sinks, size: e.size, kind: e.kind })
        .collect();
    Graph::new(nodes, edges)
}

/// Serializes a graph in canonical form: two-space indentation, fixed key
/// order, trailing newline.
pub fn save_graph(graph: &Graph) -> Vec<u8> {
    let file = GraphFile {
        nodes: graph.nodes().iter().map(|n| NodeRecord { id: n.id.clone(), role: n.role }).collect(),
        edges: graph
            .edges()
            .iter()
            .map(|e| EdgeRecord {
                id: e.id.clone(),
                source: e.source.clone(),
                sinks: e.sinks.clone(),
                size: e.size,
                kind: e.kind,
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("graph serialization cannot fail");
    out.push(b'\n');
    out
}
