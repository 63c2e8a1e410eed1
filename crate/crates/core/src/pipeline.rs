//! The full planning pipeline: optional alignment and control edges, the
//! scheduling solve, pyramid pre-placement, the address solve, plan
//! assembly and validation.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{compute_bounds, enforce_early_weight_updates};
use crate::graph::{EdgeKind, Graph, GraphError};
use crate::milp::{
    encode_addresses, encode_joint, encode_scheduling, evaluate, EncodeOptions, MilpError, PlacementProblem, VarId,
};
use crate::placement::preallocate_pyramid;
use crate::plan::{
    build_timeline, decode_sequence, validate_plan, ControlEdgeRecord, ExecutionSequence, MemoryPlan, PlanError,
    Provenance, ValidationReport,
};
use crate::solve::{
    solve_external, solve_joint_internal, solve_placement_exact, solve_schedule_exact, Schedule, SolveConfig,
    SolveError, SolveMode, SolveOutcome, SolveStatus,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// Order first, then addresses for the fixed lifetimes.
    Split,
    /// Order and addresses in one problem.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub mode: PlanMode,
    pub pruning: bool,
    pub control_edges: bool,
    pub preplacement: bool,
    pub align: Option<u64>,
    pub solve: SolveConfig,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            mode: PlanMode::Split,
            pruning: true,
            control_edges: true,
            preplacement: true,
            align: None,
            solve: SolveConfig::default(),
        }
    }
}

impl PlanOptions {
    /// Every search-space reduction switched off.
    pub fn unreduced(mut self) -> Self {
        self.pruning = false;
        self.control_edges = false;
        self.preplacement = false;
        self
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("internal schedule violates the scheduling model ({0})")]
    SelfCheck(String),
    #[error("plan failed validation with {} violation(s)", .0.violations.len())]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone)]
pub struct PlanReport {
    pub plan: MemoryPlan,
    /// The graph that was planned: aligned and with control edges added.
    pub graph: Graph,
    pub program_order_peak_rs: u64,
    pub validation: ValidationReport,
}

impl PlanReport {
    /// Peak memory saved against running the program order, in percent.
    pub fn savings_pct(&self) -> f64 {
        if self.program_order_peak_rs == 0 {
            0.0
        } else {
            (self.program_order_peak_rs as f64 - self.plan.peak_mem as f64) * 100.0 / self.program_order_peak_rs as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Engine {
    Internal,
    External,
}

impl Engine {
    fn label(self) -> &'static str {
        match self {
            Engine::Internal => "internal",
            Engine::External => "external",
        }
    }
}

fn pick_engine(config: &SolveConfig, what: &'static str, size: usize, limit: usize) -> Result<Engine, SolveError> {
    match config.mode {
        SolveMode::Internal => Ok(Engine::Internal),
        SolveMode::External => Ok(Engine::External),
        SolveMode::Auto if size <= limit => Ok(Engine::Internal),
        SolveMode::Auto if config.solver_cmd.is_some() => Ok(Engine::External),
        SolveMode::Auto => Err(SolveError::TooLarge { what, size, limit }),
    }
}

struct Phase {
    engine: Engine,
    status: SolveStatus,
    seconds: f64,
}

/// Runs an external solve; a timeout without any solution becomes `None`
/// so the caller can fall back to a heuristic answer.
fn external(model: &crate::milp::MilpModel, config: &SolveConfig) -> Result<Option<SolveOutcome>, SolveError> {
    match solve_external(model, config) {
        Ok(outcome) => Ok(Some(outcome)),
        Err(SolveError::Timeout(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn decoded_schedule(outcome: &SolveOutcome, graph: &Graph) -> Result<Schedule, PipelineError> {
    let seq = decode_sequence(&outcome.assignment, graph)?;
    Ok(seq.schedule(graph).expect("decoded sequences cover every node"))
}

fn addresses_from(outcome: &SolveOutcome, problem: &PlacementProblem) -> BTreeMap<String, u64> {
    problem
        .tensors
        .iter()
        .map(|t| {
            let a = outcome.assignment.get(&VarId::addr(&t.id)).copied().unwrap_or(0);
            (t.id.clone(), u64::try_from(a).unwrap_or(0))
        })
        .collect()
}

fn schedule_phase(graph: &Graph, opts: &PlanOptions) -> Result<(Schedule, Phase), PipelineError> {
    let start = Instant::now();
    let config = &opts.solve;
    let bounds = compute_bounds(graph);
    let engine = pick_engine(config, "graph", graph.num_nodes(), config.max_nodes)?;
    let (schedule, status) = match engine {
        Engine::Internal => {
            let result = solve_schedule_exact(graph, config)?;
            // The DP never looks at the model; checking its answer against
            // the encoding keeps the two honest with each other.
            let model = encode_scheduling(graph, &bounds, EncodeOptions { pruning: opts.pruning })?;
            let ev = evaluate(&model, &result.outcome.assignment)?;
            if !ev.feasible {
                let tags: Vec<&str> = ev.violated.iter().map(|t| t.as_str()).collect();
                return Err(PipelineError::SelfCheck(tags.join(", ")));
            }
            (result.schedule, result.outcome.status)
        }
        Engine::External => {
            let model = encode_scheduling(graph, &bounds, EncodeOptions { pruning: opts.pruning })?;
            match external(&model, config)? {
                Some(outcome) => (decoded_schedule(&outcome, graph)?, outcome.status),
                None => (Schedule::from_order(graph, &graph.topological_order()), SolveStatus::Timeout),
            }
        }
    };
    Ok((schedule, Phase { engine, status, seconds: start.elapsed().as_secs_f64() }))
}

fn placement_phase(
    problem: &PlacementProblem,
    opts: &PlanOptions,
) -> Result<(BTreeMap<String, u64>, Phase), PipelineError> {
    let start = Instant::now();
    let config = &opts.solve;
    let free = (0..problem.tensors.len()).filter(|&i| !problem.is_fixed(i)).count();
    let engine = pick_engine(config, "placement problem", free, config.max_tensors)?;
    let (addresses, status) = match engine {
        Engine::Internal => {
            let r = solve_placement_exact(problem, config)?;
            (r.addresses, r.outcome.status)
        }
        Engine::External => {
            let model = encode_addresses(problem, EncodeOptions { pruning: opts.pruning })?;
            match external(&model, config)? {
                Some(outcome) => (addresses_from(&outcome, problem), outcome.status),
                None => (stacked(problem), SolveStatus::Timeout),
            }
        }
    };
    Ok((addresses, Phase { engine, status, seconds: start.elapsed().as_secs_f64() }))
}

/// Fixed tensors where they are, everything else stacked above them.
fn stacked(problem: &PlacementProblem) -> BTreeMap<String, u64> {
    let mut top = problem
        .tensors
        .iter()
        .filter_map(|t| problem.fixed.get(&t.id).map(|a| a + t.size))
        .max()
        .unwrap_or(0);
    let mut out = problem.fixed.clone();
    for t in problem.tensors.iter().filter(|t| !problem.fixed.contains_key(&t.id)) {
        out.insert(t.id.clone(), top);
        top += t.size;
    }
    out
}

fn joint_phase(graph: &Graph, opts: &PlanOptions) -> Result<(Schedule, BTreeMap<String, u64>, Phase), PipelineError> {
    let start = Instant::now();
    let config = &opts.solve;
    let tensors = graph.edges().iter().filter(|e| e.kind == EdgeKind::Data).count();
    let engine = if graph.num_nodes() > config.max_nodes {
        pick_engine(config, "graph", graph.num_nodes(), config.max_nodes)?
    } else {
        pick_engine(config, "placement problem", tensors, config.max_tensors)?
    };
    let (schedule, addresses, status) = match engine {
        Engine::Internal => {
            let r = solve_joint_internal(graph, config)?;
            (r.schedule, r.addresses, r.outcome.status)
        }
        Engine::External => {
            let model = encode_joint(graph, &compute_bounds(graph), EncodeOptions { pruning: opts.pruning })?;
            match external(&model, config)? {
                Some(outcome) => {
                    let schedule = decoded_schedule(&outcome, graph)?;
                    let addresses = addresses_from(&outcome, &schedule.placement_problem(graph));
                    (schedule, addresses, outcome.status)
                }
                None => {
                    let schedule = Schedule::from_order(graph, &graph.topological_order());
                    let addresses = stacked(&schedule.placement_problem(graph));
                    (schedule, addresses, SolveStatus::Timeout)
                }
            }
        }
    };
    Ok((schedule, addresses, Phase { engine, status, seconds: start.elapsed().as_secs_f64() }))
}

/// Highest byte any placed tensor reaches.
fn top_of(graph: &Graph, addresses: &BTreeMap<String, u64>) -> u64 {
    graph.edge_ids().filter_map(|e| addresses.get(&graph.edge(e).id).map(|a| a + graph.size(e))).max().unwrap_or(0)
}

/// Plans `graph` end to end. A phase that runs out of time still yields a
/// plan, marked `timed_out` in its provenance.
pub fn plan_graph(graph: &Graph, opts: &PlanOptions) -> Result<PlanReport, PipelineError> {
    let base = match opts.align {
        Some(a) => graph.aligned(a)?,
        None => graph.clone(),
    };
    let program_order_peak_rs = Schedule::from_order(&base, &base.topological_order()).peak_resident(&base);
    let (planned, added) = if opts.control_edges {
        let report = enforce_early_weight_updates(&base);
        let added: Vec<ControlEdgeRecord> = report
            .added
            .iter()
            .map(|a| ControlEdgeRecord { id: a.edge.clone(), source: a.update.clone(), sink: a.anchor.clone() })
            .collect();
        (report.graph, added)
    } else {
        (base, Vec::new())
    };

    let (schedule, addresses, sched, place, preplaced) = match opts.mode {
        PlanMode::Split => {
            let (schedule, sched) = schedule_phase(&planned, opts)?;
            let problem = schedule.placement_problem(&planned);
            let (addresses, place, kept) = if opts.preplacement {
                let mut fixed = problem.clone();
                fixed.fixed = preallocate_pyramid(&problem).assigned;
                let (addresses, place) = placement_phase(&fixed, opts)?;
                if top_of(&planned, &addresses) > problem.resident_lower_bound() {
                    // The pyramid can block a gap-free packing; retry without it.
                    let (free_addresses, free_place) = placement_phase(&problem, opts)?;
                    let seconds = place.seconds + free_place.seconds;
                    if top_of(&planned, &free_addresses) < top_of(&planned, &addresses) {
                        (free_addresses, Phase { seconds, ..free_place }, false)
                    } else {
                        (addresses, Phase { seconds, ..place }, true)
                    }
                } else {
                    (addresses, place, true)
                }
            } else {
                let (addresses, place) = placement_phase(&problem, opts)?;
                (addresses, place, false)
            };
            (schedule, addresses, sched, place, kept)
        }
        PlanMode::Joint => {
            let (schedule, addresses, phase) = joint_phase(&planned, opts)?;
            let place = Phase { engine: phase.engine, status: phase.status.clone(), seconds: 0.0 };
            (schedule, addresses, phase, place, false)
        }
    };

    let peak_mem = top_of(&planned, &addresses);
    let timed_out = sched.status == SolveStatus::Timeout || place.status == SolveStatus::Timeout;
    let plan = MemoryPlan {
        sequence: ExecutionSequence::from_schedule(&planned, &schedule),
        addresses,
        peak_mem,
        timeline: build_timeline(&schedule.assignment(&planned), &planned),
        added_control_edges: added,
        provenance: Provenance {
            mode: match opts.mode {
                PlanMode::Split => "split",
                PlanMode::Joint => "joint",
            }
            .into(),
            pruning: opts.pruning,
            control_edges: opts.control_edges,
            preplacement: preplaced,
            align: opts.align,
            schedule_engine: sched.engine.label().into(),
            placement_engine: place.engine.label().into(),
            schedule_status: sched.status.label().into(),
            placement_status: place.status.label().into(),
            schedule_seconds: sched.seconds,
            placement_seconds: place.seconds,
            timed_out,
        },
    };
    let validation = validate_plan(&plan, graph);
    if !validation.is_valid() {
        return Err(PipelineError::Invalid(validation));
    }
    Ok(PlanReport { plan, graph: planned, program_order_peak_rs, validation })
}
