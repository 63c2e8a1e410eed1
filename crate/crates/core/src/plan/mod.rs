//! Execution sequences, resident-set timelines, validated memory plans and
//! the runtime allocation-request mapping.

mod io;
mod validate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeKind, Graph, NodeIx};
use crate::milp::{Assignment, VarId};
use crate::solve::Schedule;

pub use io::{load_plan, save_plan};
pub use validate::{validate_plan, ValidationReport, Violation, ViolationKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("plan parse error: {0}")]
    Parse(String),
    #[error("decoded sequence is not topological: {0}")]
    NonTopological(String),
    #[error("outputs of `{0}` are not created at the same timestep")]
    SiblingMismatch(String),
    #[error("operator `{0}` has several outputs; request mapping needs one output per operator")]
    MultiOutputUnsupported(String),
    #[error("operator `{0}` produces no data tensor")]
    NoOutputEdge(String),
    #[error("the plan has an empty execution sequence")]
    EmptySequence,
    #[error("tensor `{0}` has no planned address")]
    MissingAddress(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceStep {
    pub node: String,
    pub timestep: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionSequence {
    pub steps: Vec<SequenceStep>,
}

impl ExecutionSequence {
    pub fn from_schedule(graph: &Graph, schedule: &Schedule) -> Self {
        let steps = schedule
            .order(graph)
            .into_iter()
            .map(|v| SequenceStep { node: graph.node(v).id.clone(), timestep: schedule.timestep_of[v.0] })
            .collect();
        Self { steps }
    }

    pub fn nodes(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.node.as_str()).collect()
    }

    pub fn timestep_of(&self, node: &str) -> Option<usize> {
        self.steps.iter().find(|s| s.node == node).map(|s| s.timestep)
    }

    /// Back to per-node timesteps; `None` unless every node appears.
    pub fn schedule(&self, graph: &Graph) -> Option<Schedule> {
        let mut timestep_of = vec![0; graph.num_nodes()];
        for s in &self.steps {
            timestep_of[graph.node_ix(&s.node)?.0] = s.timestep;
        }
        timestep_of.iter().all(|&t| t > 0).then_some(Schedule { timestep_of })
    }
}

/// Walks timesteps in order and emits the producer of every tensor created
/// there (plus any fanout-free node run there), keeping only the first
/// occurrence of each node. Nodes sharing a timestep are ordered by id.
pub fn decode_sequence(values: &Assignment, graph: &Graph) -> Result<ExecutionSequence, PlanError> {
    let n = graph.num_nodes();
    let on = |id: VarId| values.get(&id).copied().unwrap_or(0) == 1;
    let mut seen = vec![false; n];
    let mut steps = Vec::with_capacity(n);
    for t in 1..=n {
        let mut here: BTreeSet<(&str, NodeIx)> = BTreeSet::new();
        for e in graph.edge_ids() {
            if on(VarId::create(&graph.edge(e).id, t)) {
                let src = graph.src(e);
                here.insert((graph.node(src).id.as_str(), src));
                let siblings_agree =
                    graph.siblings(e).iter().all(|&s| on(VarId::create(&graph.edge(s).id, t)));
                if !siblings_agree {
                    return Err(PlanError::SiblingMismatch(graph.node(src).id.clone()));
                }
            }
        }
        for v in graph.node_ids().filter(|&v| graph.is_fanout_free(v)) {
            if on(VarId::run(&graph.node(v).id, t)) {
                here.insert((graph.node(v).id.as_str(), v));
            }
        }
        for (id, v) in here {
            if !std::mem::replace(&mut seen[v.0], true) {
                steps.push(SequenceStep { node: id.to_string(), timestep: t });
            }
        }
    }
    let seq = ExecutionSequence { steps };
    match seq.schedule(graph) {
        Some(s) if s.is_valid(graph) => Ok(seq),
        Some(_) => Err(PlanError::NonTopological(seq.nodes().join(", "))),
        None => {
            let missing: Vec<&str> =
                graph.node_ids().filter(|v| !seen[v.0]).map(|v| graph.node(v).id.as_str()).collect();
            Err(PlanError::NonTopological(format!("never executed: {}", missing.join(", "))))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineStep {
    pub t: usize,
    pub live: Vec<String>,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidentTimeline {
    pub steps: Vec<TimelineStep>,
    pub peak_rs: u64,
    /// First timestep reaching `peak_rs` (0 for an empty graph).
    pub peak_timestep: usize,
}

impl ResidentTimeline {
    pub fn bytes(&self) -> Vec<u64> {
        self.steps.iter().map(|s| s.bytes).collect()
    }
}

/// `RS(t)`: every tensor with create or preserve set at `t`.
pub fn build_timeline(values: &Assignment, graph: &Graph) -> ResidentTimeline {
    let n = graph.num_nodes();
    let get = |id: VarId| values.get(&id).copied().unwrap_or(0);
    let mut steps = Vec::with_capacity(n);
    let (mut peak_rs, mut peak_timestep) = (0, 0);
    for t in 1..=n {
        let mut live = Vec::new();
        let mut bytes = 0;
        for e in graph.edge_ids() {
            let id = &graph.edge(e).id;
            if get(VarId::create(id, t)) + get(VarId::preserve(id, t)) > 0 {
                live.push(id.clone());
                bytes += graph.size(e);
            }
        }
        if bytes > peak_rs || peak_timestep == 0 {
            (peak_rs, peak_timestep) = (bytes, t);
        }
        steps.push(TimelineStep { t, live, bytes });
    }
    ResidentTimeline { steps, peak_rs, peak_timestep }
}

/// Control edge added by the planner, recorded so a plan can be checked
/// against the graph file it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlEdgeRecord {
    pub id: String,
    pub source: String,
    pub sink: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mode: String,
    pub pruning: bool,
    pub control_edges: bool,
    /// The pyramid pre-placement is part of the final addresses. False when
    /// it was disabled, or dropped because it left a gap the solve without
    /// it could close.
    pub preplacement: bool,
    pub align: Option<u64>,
    pub schedule_engine: String,
    pub placement_engine: String,
    pub schedule_status: String,
    pub placement_status: String,
    pub schedule_seconds: f64,
    pub placement_seconds: f64,
    /// A phase ran out of time and the plan is the best found.
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryPlan {
    pub sequence: ExecutionSequence,
    /// Byte offsets into one shared buffer, data tensors only.
    pub addresses: BTreeMap<String, u64>,
    pub peak_mem: u64,
    pub timeline: ResidentTimeline,
    pub added_control_edges: Vec<ControlEdgeRecord>,
    pub provenance: Provenance,
}

impl MemoryPlan {
    pub fn fragmentation(&self) -> f64 {
        if self.peak_mem == 0 {
            0.0
        } else {
            self.peak_mem.saturating_sub(self.timeline.peak_rs) as f64 / self.peak_mem as f64
        }
    }
}

/// Address for the `k`-th allocation request of a run that repeats the
/// plan's sequence: the single data output of operator `k mod |V|`,
/// offset by `buffer_base`.
pub fn map_allocation_request(k: usize, plan: &MemoryPlan, graph: &Graph, buffer_base: u64) -> Result<u64, PlanError> {
    if plan.sequence.steps.is_empty() {
        return Err(PlanError::EmptySequence);
    }
    let node = &plan.sequence.steps[k % plan.sequence.steps.len()].node;
    let v = graph.node_ix(node).ok_or_else(|| PlanError::Parse(format!("unknown node `{node}`")))?;
    let outputs: Vec<_> =
        graph.fanout(v).iter().filter(|&&e| graph.edge(e).kind == EdgeKind::Data).collect();
    match outputs.as_slice() {
        [] => Err(PlanError::NoOutputEdge(node.clone())),
        [&e] => {
            let id = &graph.edge(e).id;
            plan.addresses.get(id).map(|a| buffer_base + a).ok_or_else(|| PlanError::MissingAddress(id.clone()))
        }
        _ => Err(PlanError::MultiOutputUnsupported(node.clone())),
    }
}
