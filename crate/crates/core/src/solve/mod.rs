//! Exact internal solvers and the external-solver bridge.
//!
//! The internal scheduler is a dynamic program over executed-node subsets,
//! the internal placer a branch-and-bound over normalized offset packings.
//! Larger instances go through LP export and a user-supplied command.

mod external;
mod joint;
mod placement;
mod schedule;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::{Assignment, MilpError, Tag};

pub use external::{parse_solution, solve_external, ParsedSolution};
pub use joint::{solve_joint_internal, JointResult};
pub use placement::{placement_assignment, solve_placement_exact, PlacementResult};
pub use schedule::{solve_schedule_exact, Schedule, ScheduleResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Internal,
    External,
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub mode: SolveMode,
    /// Per-phase wall-clock budget in seconds.
    pub time_limit: f64,
    /// Shell command with `{lp}` and `{sol}` placeholders.
    pub solver_cmd: Option<String>,
    /// Largest graph the subset dynamic program accepts.
    pub max_nodes: usize,
    /// Largest tensor count the exact placer accepts.
    pub max_tensors: usize,
    /// Search-node budget for the exact placer.
    pub max_search_nodes: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            mode: SolveMode::Auto,
            time_limit: 300.0,
            solver_cmd: None,
            max_nodes: 20,
            max_tensors: 24,
            max_search_nodes: 5_000_000,
        }
    }
}

impl SolveConfig {
    pub fn deadline(&self) -> Deadline {
        Deadline::after(self.time_limit)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Deadline {
    start: Instant,
    limit: Duration,
}

impl Deadline {
    pub fn after(seconds: f64) -> Self {
        let limit = Duration::try_from_secs_f64(seconds.max(0.0)).unwrap_or(Duration::MAX);
        Self { start: Instant::now(), limit }
    }

    pub fn expired(&self) -> bool {
        self.start.elapsed() >= self.limit
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn remaining(&self) -> Duration {
        self.limit.saturating_sub(self.start.elapsed())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum SolveStatus {
    Optimal,
    /// Feasible, with a proven lower bound on the objective.
    FeasibleGap { bound: i64 },
    Infeasible,
    /// Budget exhausted; the attached solution is the best found.
    Timeout,
    Error { message: String },
}

impl SolveStatus {
    pub fn is_optimal(&self) -> bool {
        matches!(self, SolveStatus::Optimal)
    }

    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleGap { .. } => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Timeout => "timeout",
            SolveStatus::Error { .. } => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub assignment: Assignment,
    pub objective: i64,
    pub wall_time: f64,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("{what} has {size} elements, above the internal limit of {limit}; use an external solver")]
    TooLarge { what: &'static str, size: usize, limit: usize },
    #[error("no solver command configured for an instance beyond the internal limits")]
    NoSolver,
    #[error("solver process failed: {0}")]
    SolverProcessFailed(String),
    #[error("solution parse error on line {line}: {msg}")]
    SolutionParseError { line: usize, msg: String },
    #[error("solver returned an infeasible solution (violates {})", tag_list(.0))]
    SolutionInfeasible(Vec<Tag>),
    #[error("solver exceeded the time limit of {0} s")]
    Timeout(f64),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn tag_list(tags: &[Tag]) -> String {
    tags.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(", ")
}
