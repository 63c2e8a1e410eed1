//! Deterministic synthetic graph generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, GraphError, Node, NodeRole, TensorEdge};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `layers` operators in a line, plus the input operator.
    Chain,
    /// `layers` stages of a two-way fork followed by a join.
    ForkJoin,
    /// Forward pass, loss, backward pass and one weight update per layer.
    TrainingLike,
    /// Random DAG with `layers` operators.
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub layers: usize,
    /// Activation size in bytes (upper bound of sizes for `Random`).
    pub size: u64,
    /// Weight and gradient size in bytes (`TrainingLike` only).
    pub weight_size: u64,
    /// Each tensor size gets a uniform extra in `0..=jitter`.
    pub jitter: u64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, layers: usize) -> Self {
        Self { kind, layers, size: 4, weight_size: 12, jitter: 0, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_sizes(mut self, size: u64, weight_size: u64, jitter: u64) -> Self {
        self.size = size;
        self.weight_size = weight_size;
        self.jitter = jitter;
        self
    }
}

pub fn generate_graph(spec: &GeneratorSpec) -> Result<Graph, GraphError> {
    if spec.layers == 0 {
        return Err(GraphError::InvalidSpec("layers must be at least 1".into()));
    }
    if spec.size == 0 || (spec.kind == GeneratorKind::TrainingLike && spec.weight_size == 0) {
        return Err(GraphError::InvalidSpec("sizes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (nodes, edges) = match spec.kind {
        GeneratorKind::Chain => chain(spec, &mut rng),
        GeneratorKind::ForkJoin => fork_join(spec, &mut rng),
        GeneratorKind::TrainingLike => training_like(spec, &mut rng),
        GeneratorKind::Random => random_dag(spec, &mut rng),
    };
    Graph::new(nodes, edges)
}

fn jittered(base: u64, jitter: u64, rng: &mut ChaCha8Rng) -> u64 {
    if jitter == 0 {
        base
    } else {
        base + rng.gen_range(0..=jitter)
    }
}

/// `v1..vN`, zero padded so lexicographic order matches numeric order.
fn numbered(prefix: &str, i: usize, count: usize) -> String {
    let width = count.to_string().len();
    format!("{prefix}{i:0width$}")
}

fn chain(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> (Vec<Node>, Vec<TensorEdge>) {
    let n = spec.layers + 1;
    let nodes: Vec<Node> = (1..=n)
        .map(|i| {
            let role = if i == 1 { NodeRole::Source } else { NodeRole::Compute };
            Node::new(numbered("v", i, n), role)
        })
        .collect();
    let edges = (1..n)
        .map(|i| {
            let size = jittered(spec.size, spec.jitter, rng);
            TensorEdge::data(numbered("e", i, n - 1), nodes[i - 1].id.clone(), &[nodes[i].id.as_str()], size)
        })
        .collect();
    (nodes, edges)
}

fn fork_join(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> (Vec<Node>, Vec<TensorEdge>) {
    let l = spec.layers;
    let hub = |i: usize| numbered("h", i, l);
    let mut nodes = vec![Node::new(hub(0), NodeRole::Source)];
    let mut edges = Vec::new();
    for i in 1..=l {
        let left = format!("{}a", numbered("b", i, l));
        let right = format!("{}b", numbered("b", i, l));
        nodes.push(Node::compute(left.clone()));
        nodes.push(Node::compute(right.clone()));
        nodes.push(Node::compute(hub(i)));
        let fork = jittered(spec.size, spec.jitter, rng);
        edges.push(TensorEdge::data(numbered("f", i, l), hub(i - 1), &[left.as_str(), right.as_str()], fork));
        let ls = jittered(spec.size, spec.jitter, rng);
        edges.push(TensorEdge::data(format!("{}a", numbered("x", i, l)), left, &[hub(i).as_str()], ls));
        let rs = jittered(spec.size, spec.jitter, rng);
        edges.push(TensorEdge::data(format!("{}b", numbered("x", i, l)), right, &[hub(i).as_str()], rs));
    }
    (nodes, edges)
}

/// Program order runs the whole backward pass before any weight update, the
/// way an eager framework calls the optimizer after the backward call.
fn training_like(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> (Vec<Node>, Vec<TensorEdge>) {
    let l = spec.layers;
    let name = |p: &str, i: usize| numbered(p, i, l);
    let mut nodes = vec![Node::new("input", NodeRole::Source)];
    for i in 1..=l {
        nodes.push(Node::new(name("w", i), NodeRole::Source));
        nodes.push(Node::compute(name("fwd", i)));
    }
    nodes.push(Node::compute("loss"));
    for i in (1..=l).rev() {
        nodes.push(Node::compute(name("bwd", i)));
    }
    nodes.push(Node::compute("grad_in"));
    nodes.push(Node::new("grad_out", NodeRole::SinkOnly));
    for i in (1..=l).rev() {
        nodes.push(Node::new(name("upd", i), NodeRole::WeightUpdate));
    }

    let act = |rng: &mut ChaCha8Rng| jittered(spec.size, spec.jitter, rng);
    let wsz = |rng: &mut ChaCha8Rng| jittered(spec.weight_size, spec.jitter, rng);
    let mut edges = Vec::new();
    let first = [name("fwd", 1), name("bwd", 1)];
    edges.push(TensorEdge::data("x0", "input", &[first[0].as_str(), first[1].as_str()], act(rng)));
    for i in 1..=l {
        let sinks = [name("fwd", i), name("bwd", i), name("upd", i)];
        let s: Vec<&str> = sinks.iter().map(String::as_str).collect();
        edges.push(TensorEdge::data(name("W", i), name("w", i), &s, wsz(rng)));
    }
    for i in 1..=l {
        let sinks = if i < l { vec![name("fwd", i + 1), name("bwd", i + 1)] } else { vec!["loss".to_string()] };
        let s: Vec<&str> = sinks.iter().map(String::as_str).collect();
        edges.push(TensorEdge::data(name("a", i), name("fwd", i), &s, act(rng)));
    }
    edges.push(TensorEdge::data("g", "loss", &[name("bwd", l).as_str()], act(rng)));
    for i in (1..=l).rev() {
        let next = if i > 1 { name("bwd", i - 1) } else { "grad_in".to_string() };
        edges.push(TensorEdge::data(name("G", i), name("bwd", i), &[name("upd", i).as_str(), next.as_str()], wsz(rng)));
    }
    edges.push(TensorEdge::data("gx", "grad_in", &["grad_out"], act(rng)));
    (nodes, edges)
}

fn random_dag(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> (Vec<Node>, Vec<TensorEdge>) {
    let n = spec.layers;
    let nodes: Vec<Node> = (1..=n).map(|i| Node::compute(numbered("v", i, n))).collect();
    let mut edges = Vec::new();
    let mut count = 0usize;
    for i in 0..n {
        let outputs = if i + 1 == n {
            usize::from(rng.gen_bool(0.3))
        } else if rng.gen_bool(0.2) {
            2
        } else {
            1
        };
        for _ in 0..outputs {
            let mut sinks: Vec<&str> = Vec::new();
            if i + 1 < n && !rng.gen_bool(0.1) {
                for node in nodes.iter().skip(i + 1) {
                    if rng.gen_bool(0.35) {
                        sinks.push(node.id.as_str());
                    }
                }
                if sinks.is_empty() {
                    sinks.push(nodes[rng.gen_range(i + 1..n)].id.as_str());
                }
            }
            count += 1;
            let size = rng.gen_range(1..=spec.size);
            edges.push(TensorEdge::data(format!("e{count}"), nodes[i].id.clone(), &sinks, size));
        }
    }
    (nodes, edges)
}
