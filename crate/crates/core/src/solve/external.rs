use std::collections::HashMap;
use std::fs::File;
use std::process::{Command, Stdio};
use std::time::Duration;

use super::{SolveConfig, SolveError, SolveOutcome, SolveStatus};
use crate::milp::{evaluate, write_lp, Assignment, MilpModel};

/// Values read from a solution file, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedSolution {
    /// (line, LP name, value).
    pub values: Vec<(usize, String, i64)>,
    /// `# status feasible` was present: the solver did not prove optimality.
    pub gap: bool,
    /// Optional `# bound N` line.
    pub bound: Option<i64>,
}

/// Parses `name value` lines. `#` starts a comment; `# status feasible`
/// and `# bound N` are recognised. Values within 1e-6 of an integer are
/// rounded, anything else is rejected.
pub fn parse_solution(text: &str) -> Result<ParsedSolution, SolveError> {
    let mut out = ParsedSolution::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let (body, comment) = match raw.split_once('#') {
            Some((b, c)) => (b, Some(c)),
            None => (raw, None),
        };
        if let Some(c) = comment {
            let words: Vec<&str> = c.split_whitespace().collect();
            match words.as_slice() {
                ["status", s] => out.gap = s.eq_ignore_ascii_case("feasible"),
                ["bound", b] => {
                    out.bound = Some(b.parse().map_err(|_| SolveError::SolutionParseError {
                        line,
                        msg: format!("bad bound `{b}`"),
                    })?)
                }
                _ => {}
            }
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        match fields.as_slice() {
            [] => {}
            [name, value] => {
                let x: f64 = value
                    .parse()
                    .map_err(|_| SolveError::SolutionParseError { line, msg: format!("bad value `{value}`") })?;
                let r = x.round();
                if !r.is_finite() || (x - r).abs() > 1e-6 || r.abs() > i64::MAX as f64 {
                    return Err(SolveError::SolutionParseError { line, msg: format!("`{value}` is not an integer") });
                }
                out.values.push((line, name.to_string(), r as i64));
            }
            _ => return Err(SolveError::SolutionParseError { line, msg: "expected `name value`".into() }),
        }
    }
    Ok(out)
}

fn quote(path: &std::path::Path) -> String {
    format!("'{}'", path.display().to_string().replace('\'', r"'\''"))
}

/// Writes `model` as LP, runs the configured command, and checks the
/// returned solution against the model before accepting it.
pub fn solve_external(model: &MilpModel, config: &SolveConfig) -> Result<SolveOutcome, SolveError> {
    let template = config.solver_cmd.as_deref().ok_or(SolveError::NoSolver)?;
    let deadline = config.deadline();
    let dir = tempfile::tempdir()?;
    let lp = dir.path().join("model.lp");
    let sol = dir.path().join("model.sol");
    std::fs::write(&lp, write_lp(model)?)?;
    let cmd = template.replace("{lp}", &quote(&lp)).replace("{sol}", &quote(&sol));
    let stderr_path = dir.path().join("stderr.txt");
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(File::create(&stderr_path)?)
        .spawn()?;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if deadline.expired() {
            let _ = child.kill();
            let _ = child.wait();
            return Err(SolveError::Timeout(config.time_limit));
        }
        std::thread::sleep(Duration::from_millis(5).min(deadline.remaining()));
    };
    if !status.success() {
        let stderr = std::fs::read_to_string(&stderr_path).unwrap_or_default();
        let tail: String = stderr.lines().rev().take(5).collect::<Vec<_>>().into_iter().rev().collect::<Vec<_>>().join("\n");
        return Err(SolveError::SolverProcessFailed(format!("`{cmd}` exited with {status}\n{tail}")));
    }
    let text = std::fs::read_to_string(&sol)
        .map_err(|e| SolveError::SolverProcessFailed(format!("no readable solution file: {e}")))?;
    let parsed = parse_solution(&text)?;

    let by_name: HashMap<String, &crate::milp::VarId> = model.variables.iter().map(|v| (v.id.lp_name(), &v.id)).collect();
    let mut assignment = Assignment::new();
    for (line, name, value) in &parsed.values {
        let id = by_name.get(name).ok_or_else(|| SolveError::SolutionParseError {
            line: *line,
            msg: format!("unknown variable `{name}`"),
        })?;
        assignment.insert((*id).clone(), *value);
    }
    // Variables the solver leaves out are zero, as in most solution formats.
    for v in &model.variables {
        assignment.entry(v.id.clone()).or_insert(0);
    }
    for (id, (value, _)) in &model.pinned {
        assignment.insert(id.clone(), *value);
    }
    let ev = evaluate(model, &assignment)?;
    if !ev.feasible {
        return Err(SolveError::SolutionInfeasible(ev.violated_tags()));
    }
    let status = if parsed.gap { SolveStatus::FeasibleGap { bound: parsed.bound.unwrap_or(0) } } else { SolveStatus::Optimal };
    Ok(SolveOutcome { status, assignment, objective: ev.objective, wall_time: deadline.elapsed() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_comments_and_status() {
        let s = parse_solution("# status feasible\n# bound 4\nx 1\ny 2.0000000001 # near\n\n").unwrap();
        assert!(s.gap);
        assert_eq!(s.bound, Some(4));
        assert_eq!(s.values, vec![(3, "x".into(), 1), (4, "y".into(), 2)]);
    }

    #[test]
    fn rejects_fractions_and_junk() {
        assert!(matches!(parse_solution("x 0.5"), Err(SolveError::SolutionParseError { line: 1, .. })));
        assert!(matches!(parse_solution("x\n"), Err(SolveError::SolutionParseError { line: 1, .. })));
        assert!(matches!(parse_solution("ok 1\nx y z"), Err(SolveError::SolutionParseError { line: 2, .. })));
    }
}
