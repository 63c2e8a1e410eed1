use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{build_timeline, MemoryPlan};
use crate::graph::{EdgeKind, Graph, TensorEdge};
use crate::solve::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A node is missing, repeated or unknown.
    CreateOnce,
    /// A consumer does not run strictly after a producer.
    FaninInMemory,
    /// Two tensors live at the same time share bytes.
    BelowAbove,
    /// A tensor is unplaced or reaches past `peak_mem`.
    PeakAddress,
    /// The stored timeline does not match the sequence.
    PeakMemNoFrag,
}

impl ViolationKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::CreateOnce => "create_once",
            Self::FaninInMemory => "fanin_in_memory",
            Self::BelowAbove => "below_above",
            Self::PeakAddress => "peak_address",
            Self::PeakMemNoFrag => "peak_mem_no_frag",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn tags(&self) -> BTreeSet<&'static str> {
        self.violations.iter().map(|v| v.kind.tag()).collect()
    }

    fn push(&mut self, kind: ViolationKind, message: String) {
        self.violations.push(Violation { kind, message });
    }
}

/// Checks a plan against `graph` plus the control edges the plan records.
pub fn validate_plan(plan: &MemoryPlan, graph: &Graph) -> ValidationReport {
    let mut report = ValidationReport::default();
    let extra: Vec<TensorEdge> = plan
        .added_control_edges
        .iter()
        .filter(|c| graph.edge_ix(&c.id).is_none())
        .map(|c| TensorEdge::control(&c.id, &c.source, &c.sink))
        .collect();
    let graph = match graph.with_extra_edges(extra).and_then(|g| match plan.provenance.align {
        Some(a) => g.aligned(a),
        None => Ok(g),
    }) {
        Ok(g) => g,
        Err(e) => {
            report.push(ViolationKind::FaninInMemory, format!("recorded control edges or alignment do not fit the graph: {e}"));
            return report;
        }
    };

    let n = graph.num_nodes();
    let mut timestep_of = vec![0usize; n];
    for step in &plan.sequence.steps {
        match graph.node_ix(&step.node) {
            None => report.push(ViolationKind::CreateOnce, format!("unknown node `{}`", step.node)),
            Some(v) if timestep_of[v.0] != 0 => {
                report.push(ViolationKind::CreateOnce, format!("node `{}` runs twice", step.node))
            }
            Some(_) if step.timestep == 0 || step.timestep > n => report.push(
                ViolationKind::CreateOnce,
                format!("node `{}` at timestep {} outside 1..={n}", step.node, step.timestep),
            ),
            Some(v) => timestep_of[v.0] = step.timestep,
        }
    }
    for v in graph.node_ids().filter(|v| timestep_of[v.0] == 0) {
        report.push(ViolationKind::CreateOnce, format!("node `{}` never runs", graph.node(v).id));
    }
    if !report.is_valid() {
        // Lifetimes are undefined without a complete sequence.
        return report;
    }

    for e in graph.edge_ids() {
        let src = graph.src(e);
        for &s in graph.sinks(e) {
            if timestep_of[s.0] <= timestep_of[src.0] {
                report.push(
                    ViolationKind::FaninInMemory,
                    format!(
                        "`{}` runs at {} but needs `{}` from `{}` at {}",
                        graph.node(s).id,
                        timestep_of[s.0],
                        graph.edge(e).id,
                        graph.node(src).id,
                        timestep_of[src.0]
                    ),
                );
            }
        }
    }
    let schedule = Schedule { timestep_of };

    let mut placed = Vec::new();
    for e in graph.edge_ids().filter(|&e| graph.edge(e).kind == EdgeKind::Data) {
        let id = &graph.edge(e).id;
        match plan.addresses.get(id) {
            None => report.push(ViolationKind::PeakAddress, format!("tensor `{id}` has no address")),
            Some(&a) if a + graph.size(e) > plan.peak_mem => report.push(
                ViolationKind::PeakAddress,
                format!("tensor `{id}` at {a} of size {} ends past peak {}", graph.size(e), plan.peak_mem),
            ),
            Some(&a) => placed.push((e, a)),
        }
    }
    for id in plan.addresses.keys().filter(|id| graph.edge_ix(id).is_none()) {
        report.push(ViolationKind::PeakAddress, format!("address for unknown tensor `{id}`"));
    }
    for (i, &(e, a)) in placed.iter().enumerate() {
        for &(f, b) in &placed[i + 1..] {
            let time = schedule.live(&graph, e).overlaps(&schedule.live(&graph, f));
            let space = a < b + graph.size(f) && b < a + graph.size(e);
            if time && space {
                report.push(
                    ViolationKind::BelowAbove,
                    format!("`{}` and `{}` overlap in time and address", graph.edge(e).id, graph.edge(f).id),
                );
            }
        }
    }

    let expected = build_timeline(&schedule.assignment(&graph), &graph);
    if expected != plan.timeline {
        let stored: BTreeMap<usize, u64> = plan.timeline.steps.iter().map(|s| (s.t, s.bytes)).collect();
        let first_diff = expected.steps.iter().find(|s| stored.get(&s.t) != Some(&s.bytes)).map(|s| s.t);
        report.push(
            ViolationKind::PeakMemNoFrag,
            match first_diff {
                Some(t) => format!("resident bytes at timestep {t} differ from the sequence"),
                None => format!("stored peak {} differs from recomputed {}", plan.timeline.peak_rs, expected.peak_rs),
            },
        );
    }
    report
}
