use std::collections::{BTreeMap, HashMap, VecDeque};

use super::{LinearConstraint, MilpError, MilpModel, ModelKind, ModelMetadata, Relation, Tag, VarId, VarKind, Variable};

/// Collects variables, pins and rows, then substitutes pinned values out.
pub(crate) struct ModelBuilder {
    vars: Vec<Variable>,
    index: HashMap<VarId, usize>,
    pinned: HashMap<VarId, (i64, Tag)>,
    conflicts: Vec<String>,
    rows: Vec<LinearConstraint>,
}

impl ModelBuilder {
    pub fn new() -> Self {
        Self { vars: Vec::new(), index: HashMap::new(), pinned: HashMap::new(), conflicts: Vec::new(), rows: Vec::new() }
    }

    fn declare(&mut self, id: VarId, kind: VarKind, lo: i64, hi: i64) {
        if !self.index.contains_key(&id) {
            self.index.insert(id.clone(), self.vars.len());
            self.vars.push(Variable { id, kind, lo, hi });
        }
    }

    pub fn binary(&mut self, id: VarId) {
        self.declare(id, VarKind::Binary, 0, 1);
    }

    pub fn integer(&mut self, id: VarId, lo: i64, hi: i64) {
        self.declare(id, VarKind::Integer, lo, hi);
    }

    pub fn pin(&mut self, id: VarId, value: i64, tag: Tag) {
        match self.pinned.get(&id) {
            Some(&(old, _)) if old != value => self.conflicts.push(format!("{id} pinned to both {old} and {value}")),
            Some(_) => {}
            None => {
                self.pinned.insert(id, (value, tag));
            }
        }
    }

    pub fn row(&mut self, terms: Vec<(i64, VarId)>, rel: Relation, rhs: i64, tag: Tag) {
        let mut merged: Vec<(i64, VarId)> = Vec::with_capacity(terms.len());
        let mut seen: HashMap<VarId, usize> = HashMap::with_capacity(terms.len());
        for (k, id) in terms {
            match seen.get(&id) {
                Some(&slot) => merged[slot].0 += k,
                None => {
                    seen.insert(id.clone(), merged.len());
                    merged.push((k, id));
                }
            }
        }
        merged.retain(|(k, _)| *k != 0);
        self.rows.push(LinearConstraint { terms: merged, rel, rhs, tag });
    }

    /// Substitutes pins into every row. With `propagate`, single-binary rows
    /// are turned into further pins until nothing changes.
    pub fn finish(
        mut self,
        kind: ModelKind,
        objective: VarId,
        propagate: bool,
        mut metadata: ModelMetadata,
    ) -> Result<MilpModel, MilpError> {
        if let Some(c) = self.conflicts.first() {
            return Err(MilpError::InfeasibleBounds(c.clone()));
        }
        let mut rows: Vec<Option<LinearConstraint>> = self.rows.drain(..).map(Some).collect();
        let mut uses: HashMap<VarId, Vec<usize>> = HashMap::new();
        for (r, row) in rows.iter().enumerate() {
            for (_, id) in &row.as_ref().expect("fresh row").terms {
                uses.entry(id.clone()).or_default().push(r);
            }
        }
        let mut queue: VecDeque<usize> = (0..rows.len()).collect();
        let mut queued = vec![true; rows.len()];
        while let Some(r) = queue.pop_front() {
            queued[r] = false;
            let Some(row) = rows[r].as_mut() else { continue };
            let mut rhs = row.rhs as i128;
            row.terms.retain(|(k, id)| match self.pinned.get(id) {
                Some(&(value, _)) => {
                    rhs -= *k as i128 * value as i128;
                    false
                }
                None => true,
            });
            row.rhs = i64::try_from(rhs).map_err(|_| MilpError::Overflow(row.tag.to_string()))?;
            if row.terms.is_empty() {
                if !row.rel.holds(0, rhs) {
                    return Err(MilpError::InfeasibleBounds(format!(
                        "{} row reduces to 0 {} {}",
                        row.tag,
                        row.rel.symbol(),
                        rhs
                    )));
                }
                rows[r] = None;
                continue;
            }
            if !propagate || row.terms.len() != 1 {
                continue;
            }
            let (k, id) = row.terms[0].clone();
            let Some(&vi) = self.index.get(&id) else { continue };
            if self.vars[vi].kind != VarKind::Binary {
                continue;
            }
            let ok: Vec<i64> = [0i64, 1].into_iter().filter(|&x| row.rel.holds(k as i128 * x as i128, rhs)).collect();
            match ok.as_slice() {
                [] => {
                    return Err(MilpError::InfeasibleBounds(format!("{} row admits no value for {id}", row.tag)));
                }
                [value] => {
                    self.pinned.insert(id.clone(), (*value, Tag::Propagated));
                    rows[r] = None;
                    for &other in uses.get(&id).map(Vec::as_slice).unwrap_or(&[]) {
                        if !queued[other] && rows[other].is_some() {
                            queued[other] = true;
                            queue.push_back(other);
                        }
                    }
                }
                _ => rows[r] = None,
            }
        }

        let constraints: Vec<LinearConstraint> = rows.into_iter().flatten().collect();
        let variables: Vec<Variable> = self.vars.into_iter().filter(|v| !self.pinned.contains_key(&v.id)).collect();
        let pinned: BTreeMap<VarId, (i64, Tag)> = self.pinned.into_iter().collect();

        metadata.cp_pinned = pinned.keys().filter(|id| id.is_create_or_preserve()).count();
        metadata.cp_free = variables.iter().filter(|v| v.id.is_create_or_preserve()).count();
        metadata.free_binaries = variables.iter().filter(|v| v.kind == VarKind::Binary).count();
        metadata.free_integers = variables.len() - metadata.free_binaries;
        metadata.rows_by_tag.clear();
        for c in &constraints {
            *metadata.rows_by_tag.entry(c.tag).or_default() += 1;
        }
        metadata.pins_by_tag.clear();
        for (_, tag) in pinned.values() {
            *metadata.pins_by_tag.entry(*tag).or_default() += 1;
        }
        Ok(MilpModel { kind, variables, constraints, objective, pinned, metadata })
    }
}
