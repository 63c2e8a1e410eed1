#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use memplan_core::graph::{generate_graph, load_graph, GeneratorKind, GeneratorSpec, Graph};
use memplan_core::milp::{Assignment, MilpModel, Relation, VarId, VarKind};

pub const FIXTURES: [&str; 4] = ["chain3", "order4", "pack3", "training_mini"];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> Graph {
    let bytes = std::fs::read(fixture_path(&format!("{name}.json"))).expect("fixture exists");
    load_graph(&bytes).expect("fixture parses")
}

pub fn fixtures() -> Vec<(String, Graph)> {
    FIXTURES.iter().map(|n| (n.to_string(), fixture(n))).collect()
}

/// Random DAGs with 2 to 9 operators and sizes in 1..=8.
pub fn random_graphs(count: u64) -> Vec<(String, Graph)> {
    (0..count)
        .map(|seed| {
            let layers = 2 + (seed % 8) as usize;
            let spec = GeneratorSpec::new(GeneratorKind::Random, layers).with_sizes(8, 8, 0).with_seed(seed);
            (format!("random/{layers}/{seed}"), generate_graph(&spec).expect("valid spec"))
        })
        .collect()
}

/// Small structured graphs with jittered sizes.
pub fn structured_graphs() -> Vec<(String, Graph)> {
    let mut out = Vec::new();
    for seed in 0..4 {
        for (kind, layers) in [
            (GeneratorKind::Chain, 5),
            (GeneratorKind::ForkJoin, 2),
            (GeneratorKind::TrainingLike, 1),
        ] {
            let spec = GeneratorSpec::new(kind, layers).with_sizes(4, 9, 5).with_seed(seed);
            out.push((format!("{kind:?}/{layers}/{seed}"), generate_graph(&spec).expect("valid spec")));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetExceeded;

/// Terms over free variables, relation, right-hand side.
type Row = (Vec<(i128, usize)>, Relation, i128);

/// Exhaustive minimum of a model whose integer variables have small ranges.
/// Variables are fixed one at a time, binaries first; a branch is cut as
/// soon as some row cannot be satisfied by any completion within bounds.
/// `Ok(None)` means infeasible; `Err` means `max_nodes` was exceeded.
pub fn brute_force_min(model: &MilpModel, max_nodes: u64) -> Result<Option<i64>, BudgetExceeded> {
    let mut order: Vec<usize> = (0..model.variables.len()).collect();
    let obj = model.variables.iter().position(|v| v.id == model.objective);
    order.sort_by_key(|&i| (model.variables[i].kind == VarKind::Integer, Some(i) == obj, i));
    let index: HashMap<&VarId, usize> = model.variables.iter().enumerate().map(|(i, v)| (&v.id, i)).collect();

    // Rows over free variables only, pinned values folded into the rhs.
    let mut rows = Vec::new();
    for c in &model.constraints {
        let mut rhs = c.rhs as i128;
        let mut terms = Vec::new();
        for (coef, id) in &c.terms {
            match index.get(id) {
                Some(&i) => terms.push((*coef as i128, i)),
                None => rhs -= *coef as i128 * model.pinned.get(id).map_or(0, |p| p.0) as i128,
            }
        }
        rows.push((terms, c.rel, rhs));
    }
    let mut rows_of = vec![Vec::new(); model.variables.len()];
    for (r, (terms, _, _)) in rows.iter().enumerate() {
        for &(_, i) in terms {
            rows_of[i].push(r);
        }
    }

    struct Dfs<'a> {
        model: &'a MilpModel,
        order: Vec<usize>,
        rows: Vec<Row>,
        rows_of: Vec<Vec<usize>>,
        value: Vec<Option<i64>>,
        hi: Vec<i64>,
        obj: Option<usize>,
        best: Option<i64>,
        nodes: u64,
        max_nodes: u64,
    }

    impl Dfs<'_> {
        fn row_possible(&self, r: usize) -> bool {
            let (terms, rel, rhs) = &self.rows[r];
            let (mut lo, mut hi) = (0i128, 0i128);
            for &(c, i) in terms {
                let (a, b) = match self.value[i] {
                    Some(x) => (x as i128, x as i128),
                    None => (self.model.variables[i].lo as i128, self.hi[i] as i128),
                };
                lo += (c * a).min(c * b);
                hi += (c * a).max(c * b);
            }
            match rel {
                Relation::Le => lo <= *rhs,
                Relation::Ge => hi >= *rhs,
                Relation::Eq => lo <= *rhs && *rhs <= hi,
            }
        }

        fn go(&mut self, k: usize) -> Result<(), BudgetExceeded> {
            self.nodes += 1;
            if self.nodes > self.max_nodes {
                return Err(BudgetExceeded);
            }
            if k == self.order.len() {
                let v = match self.obj {
                    Some(o) => self.value[o].unwrap(),
                    None => self.model.pinned.get(&self.model.objective).map_or(0, |p| p.0),
                };
                if self.best.is_none_or(|b| v < b) {
                    self.best = Some(v);
                    if let Some(o) = self.obj {
                        self.hi[o] = v - 1;
                    }
                }
                return Ok(());
            }
            let i = self.order[k];
            let var = &self.model.variables[i];
            let mut x = var.lo;
            while x <= self.hi[i] {
                self.value[i] = Some(x);
                if self.rows_of[i].iter().all(|&r| self.row_possible(r)) {
                    self.go(k + 1)?;
                    if Some(i) == self.obj && self.best == Some(x) {
                        // Larger objective values cannot improve.
                        break;
                    }
                }
                x += 1;
            }
            self.value[i] = None;
            Ok(())
        }
    }

    let hi = model.variables.iter().map(|v| v.hi).collect();
    let mut dfs = Dfs {
        model,
        order,
        rows,
        rows_of,
        value: vec![None; model.variables.len()],
        hi,
        obj,
        best: None,
        nodes: 0,
        max_nodes,
    };
    if !(0..dfs.rows.len()).all(|r| dfs.row_possible(r)) {
        return Ok(None);
    }
    dfs.go(0)?;
    Ok(dfs.best)
}

/// `values` plus every pinned variable of `model`.
pub fn with_pins(model: &MilpModel, values: &Assignment) -> Assignment {
    let mut a = values.clone();
    for (id, (v, _)) in &model.pinned {
        a.insert(id.clone(), *v);
    }
    a
}
