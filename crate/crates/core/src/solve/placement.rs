use std::collections::BTreeMap;

use super::{Deadline, SolveConfig, SolveError, SolveOutcome, SolveStatus};
use crate::milp::{Assignment, PlacementProblem, VarId};

#[derive(Debug, Clone)]
pub struct PlacementResult {
    /// Offsets of every sized tensor, fixed ones included.
    pub addresses: BTreeMap<String, u64>,
    pub peak: u64,
    /// Largest resident set, or a fixed tensor's top if higher.
    pub lower_bound: u64,
    pub search_nodes: u64,
    pub outcome: SolveOutcome,
}

/// Address, below/above and peak values for the given offsets. Pair
/// indicators follow the geometry of time-overlapping pairs and are 0
/// otherwise.
pub fn placement_assignment(problem: &PlacementProblem, addresses: &BTreeMap<String, u64>, peak: u64) -> Assignment {
    let mut a = Assignment::new();
    let sized: Vec<_> = problem.tensors.iter().filter(|t| t.size > 0).collect();
    for t in &sized {
        a.insert(VarId::addr(&t.id), addresses[&t.id] as i64);
    }
    for (x, ti) in sized.iter().enumerate() {
        for tj in &sized[x + 1..] {
            let below = ti.live.overlaps(&tj.live) && addresses[&ti.id] + ti.size <= addresses[&tj.id];
            let above = ti.live.overlaps(&tj.live) && !below;
            a.insert(VarId::Below { i: ti.id.clone(), j: tj.id.clone() }, below as i64);
            a.insert(VarId::Above { i: ti.id.clone(), j: tj.id.clone() }, above as i64);
        }
    }
    a.insert(VarId::PeakMem, peak as i64);
    a
}

struct Search<'a> {
    sizes: Vec<u64>,
    /// Free tensors that share a timestep with each free tensor.
    conflicts: Vec<Vec<usize>>,
    /// Address ranges of fixed tensors that share a timestep, sorted.
    fixed_blocks: Vec<Vec<(u64, u64)>>,
    /// Free tensors live at each timestep.
    by_time: Vec<Vec<usize>>,
    fixed_top: u64,
    lower_bound: u64,
    deadline: &'a Deadline,
    max_nodes: u64,
    nodes: u64,
    aborted: bool,
    timed_out: bool,
    best: u64,
    best_offsets: Vec<u64>,
    offset: Vec<Option<u64>>,
}

impl Search<'_> {
    /// Lowest offset at or above `floor` that clears every fixed block.
    fn clear_fixed(&self, i: usize, floor: u64) -> u64 {
        let mut p = floor;
        loop {
            let hit = self.fixed_blocks[i].iter().find(|&&(lo, hi)| p < hi && lo < p + self.sizes[i]);
            match hit {
                Some(&(_, hi)) => p = hi,
                None => return p,
            }
        }
    }

    /// Lowest feasible offset given the tensors placed so far, also using
    /// gaps between them.
    fn first_fit(&self, i: usize) -> u64 {
        let mut candidates: Vec<u64> = vec![0];
        candidates.extend(self.conflicts[i].iter().filter_map(|&j| self.offset[j].map(|o| o + self.sizes[j])));
        candidates.extend(self.fixed_blocks[i].iter().map(|b| b.1));
        candidates.sort_unstable();
        candidates.dedup();
        for p in candidates {
            let clear_free = self.conflicts[i].iter().all(|&j| match self.offset[j] {
                Some(o) => p + self.sizes[i] <= o || o + self.sizes[j] <= p,
                None => true,
            });
            if clear_free && self.clear_fixed(i, p) == p {
                return p;
            }
        }
        unreachable!("the top of the highest candidate is always free")
    }

    fn greedy(&mut self, order: &[usize]) {
        self.offset.iter_mut().for_each(|o| *o = None);
        let mut peak = self.fixed_top;
        for &i in order {
            let p = self.first_fit(i);
            self.offset[i] = Some(p);
            peak = peak.max(p + self.sizes[i]);
        }
        if peak < self.best {
            self.best = peak;
            self.best_offsets = self.offset.iter().map(|o| o.expect("all placed")).collect();
        }
        self.offset.iter_mut().for_each(|o| *o = None);
    }

    /// Enumerates packings in which every tensor sits as low as the tensors
    /// placed before it allow, placed in nondecreasing (offset, index)
    /// order. Every packing can be lowered into one of these.
    fn dfs(&mut self, placed: usize, last: (u64, usize), peak: u64) {
        if self.best == self.lower_bound || self.aborted {
            return;
        }
        self.nodes += 1;
        if self.nodes.is_multiple_of(1024) && self.deadline.expired() {
            self.aborted = true;
            self.timed_out = true;
            return;
        }
        if self.nodes >= self.max_nodes {
            self.aborted = true;
            return;
        }
        let k = self.sizes.len();
        if placed == k {
            if peak < self.best {
                self.best = peak;
                self.best_offsets = self.offset.iter().map(|o| o.expect("all placed")).collect();
            }
            return;
        }
        // Unplaced tensors all sit at or above the last offset and those
        // sharing a timestep stack.
        let stacked = self
            .by_time
            .iter()
            .map(|ts| ts.iter().filter(|&&j| self.offset[j].is_none()).map(|&j| self.sizes[j]).sum::<u64>())
            .max()
            .unwrap_or(0);
        if peak.max(last.0 + stacked) >= self.best {
            return;
        }
        for i in 0..k {
            if self.offset[i].is_some() {
                continue;
            }
            let floor = self.conflicts[i].iter().filter_map(|&j| self.offset[j].map(|o| o + self.sizes[j])).max().unwrap_or(0);
            let p = self.clear_fixed(i, floor);
            if (p, i) <= last && placed > 0 {
                continue;
            }
            let top = p + self.sizes[i];
            if peak.max(top) >= self.best {
                continue;
            }
            self.offset[i] = Some(p);
            self.dfs(placed + 1, (p, i), peak.max(top));
            self.offset[i] = None;
            if self.best == self.lower_bound || self.aborted {
                return;
            }
        }
    }
}

/// Exact offset assignment for fixed lifetimes. Returns as soon as a
/// packing meets the resident-set lower bound.
pub fn solve_placement_exact(problem: &PlacementProblem, config: &SolveConfig) -> Result<PlacementResult, SolveError> {
    let deadline = config.deadline();
    let free: Vec<usize> =
        (0..problem.tensors.len()).filter(|&i| problem.tensors[i].size > 0 && !problem.is_fixed(i)).collect();
    if free.len() > config.max_tensors {
        return Err(SolveError::TooLarge { what: "placement problem", size: free.len(), limit: config.max_tensors });
    }
    let fixed: Vec<(usize, u64)> = (0..problem.tensors.len())
        .filter_map(|i| problem.fixed.get(&problem.tensors[i].id).map(|&a| (i, a)))
        .filter(|&(i, _)| problem.tensors[i].size > 0)
        .collect();
    let tensor = |i: usize| &problem.tensors[i];
    let conflicts = free
        .iter()
        .map(|&i| (0..free.len()).filter(|&y| free[y] != i && tensor(free[y]).live.overlaps(&tensor(i).live)).collect())
        .collect();
    let fixed_blocks = free
        .iter()
        .map(|&i| {
            let mut blocks: Vec<(u64, u64)> = fixed
                .iter()
                .filter(|&&(f, _)| tensor(f).live.overlaps(&tensor(i).live))
                .map(|&(f, a)| (a, a + tensor(f).size))
                .collect();
            blocks.sort_unstable();
            blocks
        })
        .collect();
    let by_time = (1..=problem.horizon)
        .map(|t| (0..free.len()).filter(|&y| tensor(free[y]).live.contains(t)).collect())
        .collect();
    let fixed_top = fixed.iter().map(|&(f, a)| a + tensor(f).size).max().unwrap_or(0);
    let lower_bound = problem.resident_lower_bound().max(fixed_top);

    let mut search = Search {
        sizes: free.iter().map(|&i| tensor(i).size).collect(),
        conflicts,
        fixed_blocks,
        by_time,
        fixed_top,
        lower_bound,
        deadline: &deadline,
        max_nodes: config.max_search_nodes,
        nodes: 0,
        aborted: false,
        timed_out: false,
        best: u64::MAX,
        best_offsets: vec![],
        offset: vec![None; free.len()],
    };

    let k = free.len();
    let mut orders: Vec<Vec<usize>> = Vec::new();
    let mut by_size: Vec<usize> = (0..k).collect();
    by_size.sort_by_key(|&y| (std::cmp::Reverse(search.sizes[y]), y));
    orders.push(by_size);
    let mut by_start: Vec<usize> = (0..k).collect();
    by_start.sort_by_key(|&y| (tensor(free[y]).live.lo, std::cmp::Reverse(search.sizes[y]), y));
    orders.push(by_start);
    let mut by_length: Vec<usize> = (0..k).collect();
    by_length.sort_by_key(|&y| (std::cmp::Reverse(tensor(free[y]).live.len()), std::cmp::Reverse(search.sizes[y]), y));
    orders.push(by_length);
    for order in &orders {
        search.greedy(order);
    }
    if k == 0 {
        search.best = fixed_top;
    }
    if search.best > lower_bound {
        search.dfs(0, (0, 0), fixed_top);
    }

    let mut addresses: BTreeMap<String, u64> = BTreeMap::new();
    for (y, &i) in free.iter().enumerate() {
        addresses.insert(tensor(i).id.clone(), search.best_offsets[y]);
    }
    for &(f, a) in &fixed {
        addresses.insert(tensor(f).id.clone(), a);
    }
    let peak = search.best;
    let status = if peak == lower_bound || !search.aborted {
        SolveStatus::Optimal
    } else if search.timed_out {
        SolveStatus::Timeout
    } else {
        SolveStatus::FeasibleGap { bound: lower_bound as i64 }
    };
    let assignment = placement_assignment(problem, &addresses, peak);
    Ok(PlacementResult {
        addresses,
        peak,
        lower_bound,
        search_nodes: search.nodes,
        outcome: SolveOutcome { status, assignment, objective: peak as i64, wall_time: deadline.elapsed() },
    })
}
