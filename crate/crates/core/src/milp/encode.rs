use serde::{Deserialize, Serialize};

use super::builder::ModelBuilder;
use super::{MilpError, MilpModel, ModelKind, ModelMetadata, Relation, Tag, VarId};
use crate::analysis::{edge_precedes, Interval, LifetimeBounds, Reachability};
use crate::graph::{EdgeIx, Graph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeOptions {
    /// Pin variables from the lifetime windows, propagate the pins, and skip
    /// tensor pairs that can never be live together.
    pub pruning: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self { pruning: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementTensor {
    pub id: String,
    pub size: u64,
    /// Timesteps during which the tensor is resident.
    pub live: Interval,
}

/// Address-assignment instance with fixed lifetimes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementProblem {
    pub horizon: usize,
    pub tensors: Vec<PlacementTensor>,
    /// Addresses decided before the solve, keyed by tensor id.
    pub fixed: std::collections::BTreeMap<String, u64>,
}

impl PlacementProblem {
    pub fn total_size(&self) -> u64 {
        self.tensors.iter().map(|t| t.size).sum()
    }

    /// Largest number of bytes resident at any one timestep.
    pub fn resident_lower_bound(&self) -> u64 {
        (1..=self.horizon)
            .map(|t| self.tensors.iter().filter(|x| x.live.contains(t)).map(|x| x.size).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.fixed.contains_key(&self.tensors[i].id)
    }
}

fn big_m(total: u64) -> Result<i64, MilpError> {
    i64::try_from(total).map_err(|_| MilpError::Overflow("total tensor size".into()))
}

fn size_coef(graph: &Graph, e: EdgeIx) -> Result<i64, MilpError> {
    i64::try_from(graph.size(e)).map_err(|_| MilpError::Overflow(graph.edge(e).id.clone()))
}

fn check_bounds(bounds: &LifetimeBounds) -> Result<(), MilpError> {
    match bounds.asap.iter().zip(&bounds.alap).position(|(a, b)| a > b) {
        Some(v) => Err(MilpError::InfeasibleBounds(format!(
            "node #{v} has asap {} > alap {}",
            bounds.asap[v], bounds.alap[v]
        ))),
        None => Ok(()),
    }
}

/// Create/preserve variables, run variables for fanout-free nodes, the
/// lifetime pins, and the ordering rows shared by the scheduling and joint
/// models.
fn add_schedule_part(b: &mut ModelBuilder, graph: &Graph, bounds: &LifetimeBounds, pruning: bool) {
    let n = graph.num_nodes();
    let eid = |e: EdgeIx| graph.edge(e).id.as_str();
    let fanout_free: Vec<_> = graph.node_ids().filter(|&v| graph.is_fanout_free(v)).collect();

    for e in graph.edge_ids() {
        for t in 1..=n {
            b.binary(VarId::create(eid(e), t));
            b.binary(VarId::preserve(eid(e), t));
        }
    }
    for &v in &fanout_free {
        for t in 1..=n {
            b.binary(VarId::run(&graph.node(v).id, t));
        }
    }

    if pruning {
        for e in graph.edge_ids() {
            let span = bounds.span(graph.src(e));
            let (mul, pres) = (bounds.mul(e), bounds.pres(e));
            for t in 1..=n {
                if !span.contains(t) {
                    b.pin(VarId::create(eid(e), t), 0, Tag::Span);
                }
                if !mul.contains(t) {
                    b.pin(VarId::preserve(eid(e), t), 0, Tag::Mul);
                } else if pres.contains(t) {
                    b.pin(VarId::preserve(eid(e), t), 1, Tag::Pres);
                }
            }
        }
        for &v in &fanout_free {
            let span = bounds.span(v);
            for t in (1..=n).filter(|&t| !span.contains(t)) {
                b.pin(VarId::run(&graph.node(v).id, t), 0, Tag::Span);
            }
        }
    }

    for e in graph.edge_ids() {
        for t in 1..=n {
            b.row(
                vec![(1, VarId::preserve(eid(e), t)), (1, VarId::create(eid(e), t))],
                Relation::Le,
                1,
                Tag::LiveOrPreserved,
            );
        }
    }
    for e in graph.edge_ids() {
        for t in 1..=n {
            let mut terms = vec![(1, VarId::preserve(eid(e), t))];
            if t > 1 {
                terms.push((-1, VarId::preserve(eid(e), t - 1)));
                terms.push((-1, VarId::create(eid(e), t - 1)));
            }
            b.row(terms, Relation::Le, 0, Tag::PreserveFeasibility);
        }
    }
    for e in graph.edge_ids() {
        let terms = (1..=n).map(|t| (1, VarId::create(eid(e), t))).collect();
        b.row(terms, Relation::Eq, 1, Tag::CreateOnce);
    }
    for &v in &fanout_free {
        let terms = (1..=n).map(|t| (1, VarId::run(&graph.node(v).id, t))).collect();
        b.row(terms, Relation::Eq, 1, Tag::CreateOnce);
    }
    for e in graph.edge_ids() {
        for &f in graph.edge_fanin(e) {
            for t in 1..=n {
                b.row(
                    vec![(1, VarId::create(eid(e), t)), (-1, VarId::preserve(eid(f), t))],
                    Relation::Le,
                    0,
                    Tag::FaninInMemory,
                );
            }
        }
    }
    for &v in &fanout_free {
        for &f in graph.fanin(v) {
            for t in 1..=n {
                b.row(
                    vec![(1, VarId::run(&graph.node(v).id, t)), (-1, VarId::preserve(eid(f), t))],
                    Relation::Le,
                    0,
                    Tag::FaninInMemory,
                );
            }
        }
    }
    for v in graph.node_ids() {
        let out = graph.fanout(v);
        if let Some((&first, rest)) = out.split_first() {
            for &s in rest {
                for t in 1..=n {
                    b.row(
                        vec![(1, VarId::create(eid(s), t)), (-1, VarId::create(eid(first), t))],
                        Relation::Eq,
                        0,
                        Tag::MultipleOutputs,
                    );
                }
            }
        }
    }
    for e in graph.edge_ids().filter(|&e| graph.is_terminal(e)) {
        b.row(
            vec![(1, VarId::create(eid(e), n)), (1, VarId::preserve(eid(e), n))],
            Relation::Eq,
            1,
            Tag::TerminalOutput,
        );
    }
}

fn schedule_metadata(graph: &Graph) -> ModelMetadata {
    ModelMetadata {
        horizon: graph.num_nodes(),
        cp_raw: 2 * graph.num_edges() * graph.num_nodes(),
        ..ModelMetadata::default()
    }
}

/// Lifetime-only model: minimize the peak resident set.
pub fn encode_scheduling(graph: &Graph, bounds: &LifetimeBounds, options: EncodeOptions) -> Result<MilpModel, MilpError> {
    check_bounds(bounds)?;
    let n = graph.num_nodes();
    let mut b = ModelBuilder::new();
    add_schedule_part(&mut b, graph, bounds, options.pruning);
    b.integer(VarId::PeakMemNoFrag, 0, big_m(graph.total_size())?);
    for t in 1..=n {
        let mut terms = Vec::new();
        for e in graph.edge_ids().filter(|&e| graph.size(e) > 0) {
            let s = size_coef(graph, e)?;
            let id = &graph.edge(e).id;
            terms.push((s, VarId::create(id, t)));
            terms.push((s, VarId::preserve(id, t)));
        }
        terms.push((-1, VarId::PeakMemNoFrag));
        b.row(terms, Relation::Le, 0, Tag::PeakMemNoFrag);
    }
    b.finish(ModelKind::Scheduling, VarId::PeakMemNoFrag, options.pruning, schedule_metadata(graph))
}

fn pair_vars(i: &str, j: &str) -> (VarId, VarId) {
    (VarId::Below { i: i.to_string(), j: j.to_string() }, VarId::Above { i: i.to_string(), j: j.to_string() })
}

/// Rows forcing `i` entirely below `j` when `a = 1` and entirely above when
/// `b = 1`.
fn add_non_overlap(b: &mut ModelBuilder, (i, si): (&str, i64), (j, sj): (&str, i64), m: i64, (a, bv): (&VarId, &VarId)) {
    b.row(
        vec![(1, VarId::addr(i)), (-1, VarId::addr(j)), (m, a.clone())],
        Relation::Le,
        m - si,
        Tag::Below,
    );
    b.row(
        vec![(1, VarId::addr(i)), (-1, VarId::addr(j)), (-m, bv.clone())],
        Relation::Ge,
        sj - m,
        Tag::Above,
    );
}

/// Address-only model for fixed lifetimes: minimize the buffer size.
pub fn encode_addresses(problem: &PlacementProblem, options: EncodeOptions) -> Result<MilpModel, MilpError> {
    let tensors: Vec<&PlacementTensor> = problem.tensors.iter().filter(|t| t.size > 0).collect();
    let m = big_m(problem.total_size())?;
    let mut b = ModelBuilder::new();
    for t in &tensors {
        b.integer(VarId::addr(&t.id), 0, m);
        if let Some(&a) = problem.fixed.get(&t.id) {
            b.pin(VarId::addr(&t.id), big_m(a)?, Tag::Preplaced);
        }
    }
    b.integer(VarId::PeakMem, 0, m);

    let mut meta = ModelMetadata { horizon: problem.horizon, ..ModelMetadata::default() };
    for (x, ti) in tensors.iter().enumerate() {
        for tj in &tensors[x + 1..] {
            meta.pair_candidates += 1;
            if problem.fixed.contains_key(&ti.id) && problem.fixed.contains_key(&tj.id) {
                continue;
            }
            let overlapping = ti.live.overlaps(&tj.live);
            if options.pruning && !overlapping {
                continue;
            }
            meta.pairs_emitted += 1;
            let (a, bv) = pair_vars(&ti.id, &tj.id);
            b.binary(a.clone());
            b.binary(bv.clone());
            if options.pruning {
                b.row(vec![(1, a.clone()), (1, bv.clone())], Relation::Eq, 1, Tag::Live);
            } else {
                b.row(vec![(1, a.clone()), (1, bv.clone())], Relation::Le, 1, Tag::Live);
                for t in 1..=problem.horizon {
                    let live = ti.live.contains(t) as i64 + tj.live.contains(t) as i64;
                    b.row(vec![(1, a.clone()), (1, bv.clone())], Relation::Ge, live - 1, Tag::Live);
                }
            }
            add_non_overlap(&mut b, (&ti.id, big_m(ti.size)?), (&tj.id, big_m(tj.size)?), m, (&a, &bv));
        }
    }
    for t in &tensors {
        b.row(vec![(1, VarId::addr(&t.id)), (-1, VarId::PeakMem)], Relation::Le, -big_m(t.size)?, Tag::PeakAddress);
    }
    b.finish(ModelKind::Addresses, VarId::PeakMem, options.pruning, meta)
}

/// Combined lifetime and address model: minimize the buffer size over all
/// schedules.
pub fn encode_joint(graph: &Graph, bounds: &LifetimeBounds, options: EncodeOptions) -> Result<MilpModel, MilpError> {
    check_bounds(bounds)?;
    let n = graph.num_nodes();
    let m = big_m(graph.total_size())?;
    let mut b = ModelBuilder::new();
    add_schedule_part(&mut b, graph, bounds, options.pruning);

    let data: Vec<EdgeIx> = graph.edge_ids().filter(|&e| graph.size(e) > 0).collect();
    for &e in &data {
        b.integer(VarId::addr(&graph.edge(e).id), 0, m);
    }
    b.integer(VarId::PeakMem, 0, m);

    let mut meta = schedule_metadata(graph);
    let mut reach = Reachability::new(graph);
    for (x, &i) in data.iter().enumerate() {
        for &j in &data[x + 1..] {
            meta.pair_candidates += 1;
            if options.pruning
                && (edge_precedes(i, j, graph, bounds, &mut reach) || edge_precedes(j, i, graph, bounds, &mut reach))
            {
                continue;
            }
            meta.pairs_emitted += 1;
            let (ei, ej) = (graph.edge(i).id.as_str(), graph.edge(j).id.as_str());
            let (a, bv) = pair_vars(ei, ej);
            b.binary(a.clone());
            b.binary(bv.clone());
            b.row(vec![(1, a.clone()), (1, bv.clone())], Relation::Le, 1, Tag::Live);
            let window = if options.pruning {
                let (mi, mj) = (bounds.mul(i), bounds.mul(j));
                Interval::new(mi.lo.max(mj.lo), mi.hi.min(mj.hi))
            } else {
                Interval::new(1, n)
            };
            for t in window.lo..=window.hi {
                b.row(
                    vec![
                        (1, a.clone()),
                        (1, bv.clone()),
                        (-1, VarId::create(ei, t)),
                        (-1, VarId::preserve(ei, t)),
                        (-1, VarId::create(ej, t)),
                        (-1, VarId::preserve(ej, t)),
                    ],
                    Relation::Ge,
                    -1,
                    Tag::Live,
                );
            }
            add_non_overlap(&mut b, (ei, size_coef(graph, i)?), (ej, size_coef(graph, j)?), m, (&a, &bv));
        }
    }
    for &e in &data {
        b.row(
            vec![(1, VarId::addr(&graph.edge(e).id)), (-1, VarId::PeakMem)],
            Relation::Le,
            -size_coef(graph, e)?,
            Tag::PeakAddress,
        );
    }
    b.finish(ModelKind::Joint, VarId::PeakMem, options.pruning, meta)
}
