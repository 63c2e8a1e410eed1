//! LP-format text export and a reader for the subset this crate writes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use super::{LinearConstraint, MilpError, MilpModel, ModelKind, ModelMetadata, Relation, Tag, VarId, VarKind, Variable};

const TERMS_PER_LINE: usize = 8;

fn push_terms(out: &mut String, terms: &[(i64, VarId)], indent: &str) {
    for (n, (k, id)) in terms.iter().enumerate() {
        if n > 0 && n % TERMS_PER_LINE == 0 {
            out.push('\n');
            out.push_str(indent);
        }
        let sign = if *k < 0 { "-" } else { "+" };
        let mag = k.unsigned_abs();
        if n == 0 {
            if *k < 0 {
                out.push_str("- ");
            }
        } else {
            let _ = write!(out, " {sign} ");
        }
        if mag != 1 {
            let _ = write!(out, "{mag} ");
        }
        out.push_str(&id.lp_name());
    }
}

/// Deterministic LP text for `model`. Pinned variables are not written.
pub fn write_lp(model: &MilpModel) -> Result<Vec<u8>, MilpError> {
    let mut names: HashMap<String, &VarId> = HashMap::new();
    for v in &model.variables {
        if let Some(prev) = names.insert(v.id.lp_name(), &v.id) {
            return Err(MilpError::NameCollision(prev.to_string(), v.id.to_string()));
        }
    }
    let mut out = String::new();
    let kind = match model.kind {
        ModelKind::Scheduling => "scheduling",
        ModelKind::Addresses => "addresses",
        ModelKind::Joint => "joint",
        ModelKind::Parsed => "parsed",
    };
    let _ = writeln!(out, "\\ memplan {kind} model");
    let _ = writeln!(out, "\\ free variables: {}, rows: {}", model.variables.len(), model.constraints.len());
    out.push_str("Minimize\n");
    let _ = writeln!(out, " obj: {}", model.objective.lp_name());
    out.push_str("Subject To\n");
    for (r, c) in model.constraints.iter().enumerate() {
        let _ = write!(out, " r{r}_{}: ", c.tag);
        push_terms(&mut out, &c.terms, "   ");
        let _ = writeln!(out, " {} {}", c.rel.symbol(), c.rhs);
    }
    out.push_str("Bounds\n");
    for v in model.variables.iter().filter(|v| v.kind == VarKind::Integer) {
        let _ = writeln!(out, " {} <= {} <= {}", v.lo, v.id.lp_name(), v.hi);
    }
    out.push_str("Generals\n");
    for v in model.variables.iter().filter(|v| v.kind == VarKind::Integer) {
        let _ = writeln!(out, " {}", v.id.lp_name());
    }
    out.push_str("Binaries\n");
    for v in model.variables.iter().filter(|v| v.kind == VarKind::Binary) {
        let _ = writeln!(out, " {}", v.id.lp_name());
    }
    out.push_str("End\n");
    Ok(out.into_bytes())
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Num(i64),
    Plus,
    Minus,
    Colon,
    Rel(Relation),
}

fn err(line: usize, msg: impl Into<String>) -> MilpError {
    MilpError::Parse { line, msg: msg.into() }
}

fn tokenize(line: &str, lineno: usize, out: &mut Vec<(Tok, usize)>) -> Result<(), MilpError> {
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || "_.[]".contains(chars[i])) {
                i += 1;
            }
            out.push((Tok::Name(chars[start..i].iter().collect()), lineno));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse::<i64>().map_err(|_| err(lineno, format!("expected an integer, found `{text}`")))?;
            out.push((Tok::Num(value), lineno));
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let (tok, width) = match (c, two.as_str()) {
                (_, "<=" | "=<") => (Tok::Rel(Relation::Le), 2),
                (_, ">=" | "=>") => (Tok::Rel(Relation::Ge), 2),
                ('<', _) => (Tok::Rel(Relation::Le), 1),
                ('>', _) => (Tok::Rel(Relation::Ge), 1),
                ('=', _) => (Tok::Rel(Relation::Eq), 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                (':', _) => (Tok::Colon, 1),
                _ => return Err(err(lineno, format!("unexpected character `{c}`"))),
            };
            out.push((tok, lineno));
            i += width;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Objective,
    Rows,
    Bounds,
    Generals,
    Binaries,
    End,
}

fn section_header(line: &str) -> Option<Section> {
    let lower = line.trim().to_ascii_lowercase();
    match lower.as_str() {
        "minimize" | "minimise" | "min" => Some(Section::Objective),
        "subject to" | "such that" | "st" | "s.t." => Some(Section::Rows),
        "bounds" => Some(Section::Bounds),
        "generals" | "general" | "gen" => Some(Section::Generals),
        "binaries" | "binary" | "bin" => Some(Section::Binaries),
        "end" => Some(Section::End),
        _ => None,
    }
}

struct Cursor<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|t| &t.0)
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).or(self.toks.last()).map_or(0, |t| t.1)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn signed_number(&mut self) -> Result<i64, MilpError> {
        let line = self.line();
        let neg = match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                true
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                false
            }
            _ => false,
        };
        match self.next() {
            Some(Tok::Num(v)) => Ok(if neg { -v } else { v }),
            other => Err(err(line, format!("expected a number, found {other:?}"))),
        }
    }

    /// `[sign] [coef] name` terms up to (not including) a relation token.
    fn expression(&mut self) -> Result<Vec<(i64, String, usize)>, MilpError> {
        let mut terms = Vec::new();
        loop {
            let line = self.line();
            let mut sign = 1i64;
            let mut signed = false;
            while let Some(Tok::Plus | Tok::Minus) = self.peek() {
                if self.next() == Some(Tok::Minus) {
                    sign = -sign;
                }
                signed = true;
            }
            if !terms.is_empty() && !signed {
                return Ok(terms);
            }
            let coef = match self.peek() {
                Some(Tok::Num(v)) => {
                    let v = *v;
                    self.pos += 1;
                    v
                }
                _ => 1,
            };
            match self.next() {
                Some(Tok::Name(name)) => terms.push((sign * coef, name, line)),
                other => return Err(err(line, format!("expected a variable, found {other:?}"))),
            }
            if matches!(self.peek(), Some(Tok::Rel(_)) | None) {
                return Ok(terms);
            }
        }
    }
}

/// Reads LP text written by [`write_lp`] (or any file in the same subset:
/// integer coefficients, binary and general integer variables).
pub fn parse_lp(bytes: &[u8]) -> Result<MilpModel, MilpError> {
    let text = std::str::from_utf8(bytes).map_err(|e| err(0, e.to_string()))?;
    let mut section = Section::Preamble;
    let mut toks: BTreeMap<u8, Vec<(Tok, usize)>> = BTreeMap::new();
    let mut bound_lines: Vec<(Vec<(Tok, usize)>, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('\\').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        if let Some(s) = section_header(line) {
            section = s;
            continue;
        }
        let mut line_toks = Vec::new();
        tokenize(line, lineno, &mut line_toks)?;
        match section {
            Section::Preamble => return Err(err(lineno, "content before `Minimize`")),
            Section::End => return Err(err(lineno, "content after `End`")),
            Section::Bounds => bound_lines.push((line_toks, lineno)),
            s => toks.entry(s as u8).or_default().extend(line_toks),
        }
    }
    if section != Section::End {
        return Err(err(text.lines().count(), "missing `End`"));
    }

    // Declarations first, so rows can be checked against them.
    let mut variables: Vec<Variable> = Vec::new();
    let mut declared: HashMap<String, usize> = HashMap::new();
    let names_of = |s: Section, toks: &BTreeMap<u8, Vec<(Tok, usize)>>| -> Result<Vec<String>, MilpError> {
        toks.get(&(s as u8))
            .map(|v| {
                v.iter()
                    .map(|(t, line)| match t {
                        Tok::Name(n) => Ok(n.clone()),
                        other => Err(err(*line, format!("expected a variable name, found {other:?}"))),
                    })
                    .collect()
            })
            .unwrap_or_else(|| Ok(Vec::new()))
    };
    for name in names_of(Section::Generals, &toks)? {
        if declared.insert(name.clone(), variables.len()).is_none() {
            variables.push(Variable { id: VarId::Named(name), kind: VarKind::Integer, lo: 0, hi: i64::MAX });
        }
    }
    for name in names_of(Section::Binaries, &toks)? {
        if let Some(&i) = declared.get(&name) {
            variables[i].kind = VarKind::Binary;
            (variables[i].lo, variables[i].hi) = (0, 1);
        } else {
            declared.insert(name.clone(), variables.len());
            variables.push(Variable { id: VarId::Named(name), kind: VarKind::Binary, lo: 0, hi: 1 });
        }
    }
    for (line_toks, lineno) in &bound_lines {
        let mut c = Cursor { toks: line_toks, pos: 0 };
        let (name, lo, hi) = match (c.peek(), c.peek2()) {
            (Some(Tok::Name(_)), _) => {
                let Some(Tok::Name(name)) = c.next() else { unreachable!() };
                let rel = match c.next() {
                    Some(Tok::Rel(r)) => r,
                    other => return Err(err(*lineno, format!("expected a relation, found {other:?}"))),
                };
                let v = c.signed_number()?;
                match rel {
                    Relation::Le => (name, None, Some(v)),
                    Relation::Ge => (name, Some(v), None),
                    Relation::Eq => (name, Some(v), Some(v)),
                }
            }
            _ => {
                let lo = c.signed_number()?;
                if c.next() != Some(Tok::Rel(Relation::Le)) {
                    return Err(err(*lineno, "expected `<=` in a two-sided bound"));
                }
                let Some(Tok::Name(name)) = c.next() else { return Err(err(*lineno, "expected a variable name")) };
                if c.next() != Some(Tok::Rel(Relation::Le)) {
                    return Err(err(*lineno, "expected `<=` in a two-sided bound"));
                }
                (name, Some(lo), Some(c.signed_number()?))
            }
        };
        if c.peek().is_some() {
            return Err(err(*lineno, "trailing tokens after bound"));
        }
        let Some(&i) = declared.get(&name) else {
            return Err(err(*lineno, format!("bound on `{name}`, which is neither general nor binary")));
        };
        if let Some(lo) = lo {
            variables[i].lo = lo;
        }
        if let Some(hi) = hi {
            variables[i].hi = hi;
        }
    }

    let objective = {
        let empty = Vec::new();
        let otoks = toks.get(&(Section::Objective as u8)).unwrap_or(&empty);
        let mut c = Cursor { toks: otoks, pos: 0 };
        if matches!((c.peek(), c.peek2()), (Some(Tok::Name(_)), Some(Tok::Colon))) {
            c.pos += 2;
        }
        let terms = c.expression()?;
        if c.peek().is_some() {
            return Err(err(c.line(), "unexpected tokens in objective"));
        }
        match terms.as_slice() {
            [(1, name, line)] => {
                if !declared.contains_key(name) {
                    return Err(err(*line, format!("objective variable `{name}` is not declared")));
                }
                VarId::Named(name.clone())
            }
            _ => return Err(err(c.line(), "objective must be a single variable with coefficient 1")),
        }
    };

    let mut constraints = Vec::new();
    let empty = Vec::new();
    let rtoks = toks.get(&(Section::Rows as u8)).unwrap_or(&empty);
    let mut c = Cursor { toks: rtoks, pos: 0 };
    while c.peek().is_some() {
        let mut tag = Tag::Unlabeled;
        if let (Some(Tok::Name(name)), Some(Tok::Colon)) = (c.peek(), c.peek2()) {
            tag = name.split_once('_').and_then(|(_, t)| Tag::from_name(t)).unwrap_or(Tag::Unlabeled);
            c.pos += 2;
        }
        let terms = c.expression()?;
        let line = c.line();
        let rel = match c.next() {
            Some(Tok::Rel(r)) => r,
            other => return Err(err(line, format!("expected a relation, found {other:?}"))),
        };
        let rhs = c.signed_number()?;
        let mut seen = HashSet::new();
        let mut row = Vec::with_capacity(terms.len());
        for (k, name, line) in terms {
            if !declared.contains_key(&name) {
                return Err(err(line, format!("undeclared variable `{name}`")));
            }
            if !seen.insert(name.clone()) {
                return Err(err(line, format!("variable `{name}` repeated in one row")));
            }
            row.push((k, VarId::Named(name)));
        }
        constraints.push(LinearConstraint { terms: row, rel, rhs, tag });
    }

    let mut metadata = ModelMetadata::default();
    metadata.free_binaries = variables.iter().filter(|v| v.kind == VarKind::Binary).count();
    metadata.free_integers = variables.len() - metadata.free_binaries;
    for row in &constraints {
        *metadata.rows_by_tag.entry(row.tag).or_default() += 1;
    }
    Ok(MilpModel { kind: ModelKind::Parsed, variables, constraints, objective, pinned: BTreeMap::new(), metadata })
}
