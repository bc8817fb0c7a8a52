//! Planner for recursive-doubling NOT broadcasts with per-target polarity
//! requirements.
//!
//! Every copy inverts, so a landing's polarity equals its hop-count parity.
//! The planner searches nested interval splits: a holder serves its interval
//! by hopping into the far side, splitting the interval in two, and
//! recursing in parallel; same-partition targets consume a holder cycle
//! without splitting. Segment disjointness holds by construction because
//! sibling intervals never overlap. Failed interval states are memoized.

use std::collections::HashSet;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeTarget {
    /// 0-based partition of the landing cell.
    pub cp: usize,
    /// Whether the landing should hold the complemented bit.
    pub want_odd: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopSource {
    Root,
    Target(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no broadcast plan for {targets} targets over {partitions} partitions in {cycles} cycles")]
pub struct TreeError {
    pub partitions: usize,
    pub cycles: usize,
    pub targets: usize,
}

/// One interval's holder partition: which source cell is available per
/// polarity (a partition that received both polarities can source either,
/// from the matching cell).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Holder {
    cp: usize,
    even: Option<HopSource>,
    odd: Option<HopSource>,
}

impl Holder {
    /// Cell able to produce a landing of the requested polarity.
    fn source_for(&self, want_odd: bool) -> Option<HopSource> {
        if want_odd {
            self.even
        } else {
            self.odd
        }
    }
}

impl std::hash::Hash for HopSource {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match self {
            HopSource::Root => usize::MAX.hash(state),
            HopSource::Target(i) => i.hash(state),
        }
    }
}

type Key = (usize, usize, usize, bool, bool, usize, u64);

struct Solver<'a> {
    targets: &'a [TreeTarget],
    total_cycles: usize,
    /// Partition the first global cycle must not touch, if any.
    avoid_first: Option<usize>,
    dead: HashSet<Key>,
}

/// Plan a broadcast from `src_cp` (holding the true bit) to all `targets`
/// within `cycles` cycles. Returns hops per global cycle.
pub fn plan_broadcast(
    partitions: usize,
    src_cp: usize,
    cycles: usize,
    targets: &[TreeTarget],
) -> Result<Vec<Vec<(HopSource, usize)>>, TreeError> {
    plan_broadcast_avoiding(partitions, src_cp, cycles, targets, None)
}

/// As [`plan_broadcast`], but the first cycle's hops must not touch
/// partition `avoid_first` (so an unrelated gate can ride that cycle).
pub fn plan_broadcast_avoiding(
    partitions: usize,
    src_cp: usize,
    cycles: usize,
    targets: &[TreeTarget],
    avoid_first: Option<usize>,
) -> Result<Vec<Vec<(HopSource, usize)>>, TreeError> {
    assert!(targets.len() < 64, "planner uses a 64-bit mask");
    let lo = targets
        .iter()
        .map(|t| t.cp)
        .min()
        .unwrap_or(src_cp)
        .min(src_cp);
    let hi = targets
        .iter()
        .map(|t| t.cp)
        .max()
        .unwrap_or(src_cp)
        .max(src_cp);
    let mut solver = Solver {
        targets,
        total_cycles: cycles,
        avoid_first,
        dead: HashSet::new(),
    };
    let mut plan = vec![Vec::new(); cycles];
    let full_mask = if targets.len() == 64 {
        u64::MAX
    } else {
        (1u64 << targets.len()) - 1
    };
    let root = Holder {
        cp: src_cp,
        even: Some(HopSource::Root),
        odd: None,
    };
    if solver.solve(lo, hi, root, 0, full_mask, &mut plan) {
        while plan.last().is_some_and(|c| c.is_empty()) {
            plan.pop();
        }
        Ok(plan)
    } else {
        Err(TreeError {
            partitions,
            cycles,
            targets: targets.len(),
        })
    }
}

impl<'a> Solver<'a> {
    fn mask_in(&self, lo: usize, hi: usize, mask: u64) -> u64 {
        let mut m = 0u64;
        for (i, t) in self.targets.iter().enumerate() {
            if mask & (1 << i) != 0 && t.cp >= lo && t.cp <= hi {
                m |= 1 << i;
            }
        }
        m
    }

    /// Quick parity-aware capacity bound for one interval.
    fn feasible(&self, holder: &Holder, t: usize, mask: u64) -> bool {
        let mut even = usize::from(holder.even.is_some());
        let mut odd = usize::from(holder.odd.is_some());
        let mut need_odd = 0usize;
        let mut need_even = 0usize;
        for (i, tg) in self.targets.iter().enumerate() {
            if mask & (1 << i) != 0 {
                if tg.want_odd {
                    need_odd += 1;
                } else {
                    need_even += 1;
                }
            }
        }
        for _ in 0..t {
            if need_odd == 0 && need_even == 0 {
                return true;
            }
            let new_odd = even.min(need_odd);
            let new_even = odd.min(need_even);
            need_odd -= new_odd;
            need_even -= new_even;
            odd += new_odd;
            even += new_even;
        }
        need_odd == 0 && need_even == 0
    }

    fn solve(
        &mut self,
        lo: usize,
        hi: usize,
        holder: Holder,
        cycle: usize,
        mask: u64,
        plan: &mut Vec<Vec<(HopSource, usize)>>,
    ) -> bool {
        if mask == 0 {
            return true;
        }
        let t = self.total_cycles - cycle;
        if t == 0 || !self.feasible(&holder, t, mask) {
            return false;
        }
        let key = (
            lo,
            hi,
            holder.cp,
            holder.even.is_some(),
            holder.odd.is_some(),
            cycle,
            mask,
        );
        if self.dead.contains(&key) {
            return false;
        }
        // Self copies: a target in the holder's own partition.
        for (i, tg) in self.targets.iter().enumerate() {
            if mask & (1 << i) == 0 || tg.cp != holder.cp {
                continue;
            }
            let Some(src) = holder.source_for(tg.want_odd) else {
                continue;
            };
            if cycle == 0 && self.avoid_first == Some(holder.cp) {
                continue;
            }
            plan[cycle].push((src, i));
            let mut upgraded = holder;
            if tg.want_odd {
                upgraded.odd = Some(HopSource::Target(i));
            } else {
                upgraded.even = Some(HopSource::Target(i));
            }
            if self.solve(lo, hi, upgraded, cycle + 1, mask & !(1 << i), plan) {
                return true;
            }
            plan[cycle].pop();
        }
        // Remote copy plus interval split. Try far targets first.
        let mut cands: Vec<(usize, HopSource)> = (0..self.targets.len())
            .filter_map(|i| {
                if mask & (1 << i) == 0 || self.targets[i].cp == holder.cp {
                    return None;
                }
                holder
                    .source_for(self.targets[i].want_odd)
                    .map(|src| (i, src))
            })
            .collect();
        cands.sort_by_key(|&(i, _)| usize::MAX - self.targets[i].cp.abs_diff(holder.cp));
        for (i, src) in cands {
            let dcp = self.targets[i].cp;
            if cycle == 0 {
                if let Some(avoid) = self.avoid_first {
                    if holder.cp.min(dcp) <= avoid && avoid <= holder.cp.max(dcp) {
                        continue;
                    }
                }
            }
            let dholder = Holder {
                cp: dcp,
                even: if self.targets[i].want_odd {
                    None
                } else {
                    Some(HopSource::Target(i))
                },
                odd: if self.targets[i].want_odd {
                    Some(HopSource::Target(i))
                } else {
                    None
                },
            };
            let rest = mask & !(1 << i);
            // Split somewhere strictly between holder and destination.
            let (a, b) = (holder.cp.min(dcp), holder.cp.max(dcp));
            for m in a..b {
                let (h_lo, h_hi, d_lo, d_hi) = if holder.cp < dcp {
                    (lo, m, m + 1, hi)
                } else {
                    (m + 1, hi, lo, m)
                };
                let h_mask = self.mask_in(h_lo, h_hi, rest);
                let d_mask = self.mask_in(d_lo, d_hi, rest);
                if h_mask | d_mask != rest {
                    continue; // a pending target would be stranded
                }
                plan[cycle].push((src, i));
                if self.solve(h_lo, h_hi, holder, cycle + 1, h_mask, plan)
                    && self.solve(d_lo, d_hi, dholder, cycle + 1, d_mask, plan)
                {
                    return true;
                }
                // Roll back any partial progress from the failed branch by
                // truncating every later cycle to what it held before.
                plan[cycle].pop();
                self.rollback(cycle, plan, &mask);
            }
        }
        // Idle this cycle (slack budgets only).
        if self.solve(lo, hi, holder, cycle + 1, mask, plan) {
            return true;
        }
        self.dead.insert(key);
        false
    }

    /// Remove hops recorded by failed child searches: any hop in cycles
    /// after `cycle` whose destination is still pending in `mask`.
    fn rollback(&self, cycle: usize, plan: &mut [Vec<(HopSource, usize)>], mask: &u64) {
        for c in plan.iter_mut().skip(cycle + 1) {
            c.retain(|&(_, dst)| mask & (1 << dst) == 0);
        }
    }
}
