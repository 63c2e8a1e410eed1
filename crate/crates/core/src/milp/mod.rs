//! Solver-neutral MILP models for the scheduling, placement and joint
//! problems, plus an LP-format bridge and an exact constraint evaluator.

mod builder;
mod encode;
mod lp;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use encode::{encode_addresses, encode_joint, encode_scheduling, EncodeOptions, PlacementProblem, PlacementTensor};
pub use lp::{parse_lp, write_lp};

/// Structured variable name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VarId {
    Create { edge: String, t: usize },
    Preserve { edge: String, t: usize },
    /// Execution indicator for operators without fanout edges.
    Run { node: String, t: usize },
    Addr { edge: String },
    Below { i: String, j: String },
    Above { i: String, j: String },
    PeakMem,
    PeakMemNoFrag,
    /// A variable read back from an LP file.
    Named(String),
}

impl VarId {
    pub fn create(edge: impl Into<String>, t: usize) -> Self {
        VarId::Create { edge: edge.into(), t }
    }

    pub fn preserve(edge: impl Into<String>, t: usize) -> Self {
        VarId::Preserve { edge: edge.into(), t }
    }

    pub fn run(node: impl Into<String>, t: usize) -> Self {
        VarId::Run { node: node.into(), t }
    }

    pub fn addr(edge: impl Into<String>) -> Self {
        VarId::Addr { edge: edge.into() }
    }

    /// Name used in LP files: every non-alphanumeric character becomes `_`.
    pub fn lp_name(&self) -> String {
        match self {
            VarId::Named(name) => name.clone(),
            other => other.to_string().chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect(),
        }
    }

    pub fn is_create_or_preserve(&self) -> bool {
        matches!(self, VarId::Create { .. } | VarId::Preserve { .. })
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarId::Create { edge, t } => write!(f, "create.{edge}.t{t}"),
            VarId::Preserve { edge, t } => write!(f, "preserve.{edge}.t{t}"),
            VarId::Run { node, t } => write!(f, "run.{node}.t{t}"),
            VarId::Addr { edge } => write!(f, "addr.{edge}"),
            VarId::Below { i, j } => write!(f, "below.{i}.{j}"),
            VarId::Above { i, j } => write!(f, "above.{i}.{j}"),
            VarId::PeakMem => f.write_str("peak_mem"),
            VarId::PeakMemNoFrag => f.write_str("peak_mem_no_frag"),
            VarId::Named(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Binary,
    Integer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub id: VarId,
    pub kind: VarKind,
    pub lo: i64,
    pub hi: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    pub fn holds(self, lhs: i128, rhs: i128) -> bool {
        match self {
            Relation::Le => lhs <= rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Eq => lhs == rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        }
    }
}

/// Which family a constraint or a pinned value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    LiveOrPreserved,
    PreserveFeasibility,
    CreateOnce,
    FaninInMemory,
    MultipleOutputs,
    TerminalOutput,
    Live,
    Below,
    Above,
    PeakAddress,
    PeakMemNoFrag,
    /// Creation outside the source's ASAP/ALAP window.
    Span,
    /// Preservation outside the maximum useful lifetime.
    Mul,
    /// Forced preservation.
    Pres,
    /// Fixed by propagating other fixed values through a single-variable row.
    Propagated,
    /// Address fixed before the placement solve.
    Preplaced,
    /// Value outside the declared variable bounds.
    Bounds,
    /// Row read from an LP file without a recognised tag.
    Unlabeled,
}

impl Tag {
    pub const ALL: [Tag; 18] = [
        Tag::LiveOrPreserved,
        Tag::PreserveFeasibility,
        Tag::CreateOnce,
        Tag::FaninInMemory,
        Tag::MultipleOutputs,
        Tag::TerminalOutput,
        Tag::Live,
        Tag::Below,
        Tag::Above,
        Tag::PeakAddress,
        Tag::PeakMemNoFrag,
        Tag::Span,
        Tag::Mul,
        Tag::Pres,
        Tag::Propagated,
        Tag::Preplaced,
        Tag::Bounds,
        Tag::Unlabeled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::LiveOrPreserved => "live_or_preserved",
            Tag::PreserveFeasibility => "preserve_feasibility",
            Tag::CreateOnce => "create_once",
            Tag::FaninInMemory => "fanin_in_memory",
            Tag::MultipleOutputs => "multiple_outputs",
            Tag::TerminalOutput => "terminal_output",
            Tag::Live => "live",
            Tag::Below => "below",
            Tag::Above => "above",
            Tag::PeakAddress => "peak_address",
            Tag::PeakMemNoFrag => "peak_mem_no_frag",
            Tag::Span => "span",
            Tag::Mul => "mul",
            Tag::Pres => "pres",
            Tag::Propagated => "propagated",
            Tag::Preplaced => "preplaced",
            Tag::Bounds => "bounds",
            Tag::Unlabeled => "unlabeled",
        }
    }

    pub fn from_name(name: &str) -> Option<Tag> {
        Tag::ALL.into_iter().find(|t| t.as_str() == name)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: Vec<(i64, VarId)>,
    pub rel: Relation,
    pub rhs: i64,
    pub tag: Tag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Scheduling,
    Addresses,
    Joint,
    Parsed,
}

/// Size bookkeeping reported by the encoders.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub horizon: usize,
    /// Create/preserve binaries before pruning: `2 * |E| * |T|`.
    pub cp_raw: usize,
    pub cp_pinned: usize,
    pub cp_free: usize,
    pub free_binaries: usize,
    pub free_integers: usize,
    /// Tensor pairs considered for non-overlap, before and after filtering.
    pub pair_candidates: usize,
    pub pairs_emitted: usize,
    pub rows_by_tag: BTreeMap<Tag, usize>,
    pub pins_by_tag: BTreeMap<Tag, usize>,
}

/// Minimize a single variable subject to integer linear constraints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MilpModel {
    pub kind: ModelKind,
    /// Free variables in declaration order.
    pub variables: Vec<Variable>,
    pub constraints: Vec<LinearConstraint>,
    pub objective: VarId,
    /// Variables eliminated before solving, with their value and reason.
    pub pinned: BTreeMap<VarId, (i64, Tag)>,
    pub metadata: ModelMetadata,
}

pub type Assignment = BTreeMap<VarId, i64>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub feasible: bool,
    /// One entry per violated row, bound or pin, in model order.
    pub violated: Vec<Tag>,
    pub objective: i64,
}

impl Evaluation {
    pub fn violated_tags(&self) -> Vec<Tag> {
        let mut tags = self.violated.clone();
        tags.sort();
        tags.dedup();
        tags
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MilpError {
    #[error("lifetime bounds are infeasible: {0}")]
    InfeasibleBounds(String),
    #[error("variable `{0}` has no value")]
    UnassignedVariable(String),
    #[error("LP parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("variables `{0}` and `{1}` map to the same LP name")]
    NameCollision(String, String),
    #[error("coefficient overflow while encoding `{0}`")]
    Overflow(String),
}

impl MilpModel {
    pub fn variable(&self, id: &VarId) -> Option<&Variable> {
        self.variables.iter().find(|v| &v.id == id)
    }

    pub fn free_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    /// Value of `id` under `a`, falling back to the pinned value.
    pub fn value(&self, a: &Assignment, id: &VarId) -> Option<i64> {
        a.get(id).copied().or_else(|| self.pinned.get(id).map(|p| p.0))
    }

    /// Same variables, rows (up to order) and objective after renaming
    /// everything to LP names.
    pub fn is_isomorphic(&self, other: &MilpModel) -> bool {
        type Var = (String, VarKind, i64, i64);
        type Row = (Vec<(i64, String)>, Relation, i64, Tag);
        fn canon(m: &MilpModel) -> (String, Vec<Var>, Vec<Row>) {
            let mut vars: Vec<_> = m.variables.iter().map(|v| (v.id.lp_name(), v.kind, v.lo, v.hi)).collect();
            vars.sort();
            let mut rows: Vec<_> = m
                .constraints
                .iter()
                .map(|c| {
                    let mut terms: Vec<_> = c.terms.iter().map(|(k, v)| (*k, v.lp_name())).collect();
                    terms.sort_by(|a, b| a.1.cmp(&b.1));
                    (terms, c.rel, c.rhs, c.tag)
                })
                .collect();
            rows.sort();
            (m.objective.lp_name(), vars, rows)
        }
        canon(self) == canon(other)
    }
}

/// Checks every bound, pin and row of `model` under `a` with exact
/// arithmetic. Variables the model does not know about are ignored.
pub fn evaluate(model: &MilpModel, a: &Assignment) -> Result<Evaluation, MilpError> {
    let mut violated = Vec::new();
    for v in &model.variables {
        let x = *a.get(&v.id).ok_or_else(|| MilpError::UnassignedVariable(v.id.to_string()))?;
        if x < v.lo || x > v.hi {
            violated.push(Tag::Bounds);
        }
    }
    for (id, (value, tag)) in &model.pinned {
        if a.get(id).is_some_and(|x| x != value) {
            violated.push(*tag);
        }
    }
    for row in &model.constraints {
        let mut lhs: i128 = 0;
        for (k, id) in &row.terms {
            let x = model.value(a, id).ok_or_else(|| MilpError::UnassignedVariable(id.to_string()))?;
            lhs += *k as i128 * x as i128;
        }
        if !row.rel.holds(lhs, row.rhs as i128) {
            violated.push(row.tag);
        }
    }
    let objective = model
        .value(a, &model.objective)
        .ok_or_else(|| MilpError::UnassignedVariable(model.objective.to_string()))?;
    Ok(Evaluation { feasible: violated.is_empty(), violated, objective })
}
