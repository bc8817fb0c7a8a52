//! Generic partition routing: broadcasting one bit to k partitions and
//! shifting bits between neighbouring partitions.
//!
//! These are the standalone techniques; emitted cycle counts exclude the
//! initialization of the landing cells, which the caller batches into its
//! own init cycle (the multiplier folds them into its per-stage init).

use thiserror::Error;

use crate::crossbar::{
    Conduct, CycleInstruction, Execution, GateExecution, InitMode, TransistorConfig,
};
use crate::gates::GateKind;
use crate::schedule::{Phase, Schedule};

/// A run of consecutive partitions on a known crossbar geometry.
#[derive(Debug, Clone)]
pub struct PartitionSpan {
    /// Column span of every partition, in order; `cells[p] + offset`
    /// addresses a cell inside partition `p`.
    pub starts: Vec<usize>,
    pub n_boundaries: usize,
    /// Index (into `starts`) of the first partition of the span.
    pub first: usize,
    pub count: usize,
    /// Column offset of the routed bit inside each partition.
    pub cell_offset: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RoutingError {
    #[error("span of {count} partitions starting at {first} exceeds {available}")]
    SpanTooLarge {
        first: usize,
        count: usize,
        available: usize,
    },
    #[error("shift requires at least 2 partitions")]
    SpanTooSmall,
    #[error("shift target offset collides with an input offset")]
    TargetCollision,
}

/// Polarity of each partition's landed bit relative to the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    TrueValue,
    Complemented,
}

#[derive(Debug, Clone)]
pub struct PolarityMap(pub Vec<Polarity>);

impl PartitionSpan {
    /// Evenly partitioned helper geometry: `parts` partitions of `width`
    /// columns each.
    pub fn uniform(parts: usize, width: usize, cell_offset: usize) -> PartitionSpan {
        PartitionSpan {
            starts: (0..parts).map(|p| p * width).collect(),
            n_boundaries: parts - 1,
            first: 0,
            count: parts,
            cell_offset,
        }
    }

    fn check(&self) -> Result<(), RoutingError> {
        if self.first + self.count > self.starts.len() {
            return Err(RoutingError::SpanTooLarge {
                first: self.first,
                count: self.count,
                available: self.starts.len(),
            });
        }
        Ok(())
    }

    fn cell(&self, p: usize) -> usize {
        self.starts[self.first + p] + self.cell_offset
    }

    /// Boundary index separating relative partitions `p` and `p+1`.
    fn boundary_after(&self, p: usize) -> usize {
        self.first + p
    }
}

fn one_gate_cycle(
    span: &PartitionSpan,
    gate: GateKind,
    inputs: Vec<usize>,
    output: usize,
    conducting: std::ops::Range<usize>,
) -> CycleInstruction {
    let mut config = vec![Conduct::Isolated; span.n_boundaries];
    for b in conducting {
        config[b] = Conduct::Conducting;
    }
    CycleInstruction {
        config: TransistorConfig(config),
        executions: vec![Execution::Gate(GateExecution {
            kind: gate,
            inputs,
            output,
            rows: vec![0],
            init_mode: InitMode::Standard,
        })],
    }
}

/// Recursive-doubling broadcast: the bit in the span's first partition
/// reaches every other partition in ceil(log2 k) cycles. With a NOT gate
/// each landing's polarity is its hop-count parity.
pub fn broadcast_log(
    span: &PartitionSpan,
    gate: GateKind,
) -> Result<(Schedule, PolarityMap), RoutingError> {
    span.check()?;
    let k = span.count;
    let mut polarity = vec![Polarity::TrueValue; k];
    let mut sched = Schedule::new();
    if k == 1 {
        return Ok((sched, PolarityMap(polarity)));
    }
    // hops[depth] = list of (src_rel, dst_rel)
    let mut hops: Vec<Vec<(usize, usize)>> = Vec::new();
    fn rec(lo: usize, hi: usize, depth: usize, hops: &mut Vec<Vec<(usize, usize)>>) {
        if hi - lo <= 1 {
            return;
        }
        // Split at the ceiling so non-powers of two keep the log bound.
        let mid = lo + (hi - lo).div_ceil(2);
        if hops.len() <= depth {
            hops.push(Vec::new());
        }
        hops[depth].push((lo, mid));
        rec(lo, mid, depth + 1, hops);
        rec(mid, hi, depth + 1, hops);
    }
    rec(0, k, 0, &mut hops);
    for level in &hops {
        let mut config = vec![Conduct::Isolated; span.n_boundaries];
        let mut executions = Vec::new();
        for &(src, dst) in level {
            for b in src..dst {
                config[span.boundary_after(b)] = Conduct::Conducting;
            }
            executions.push(Execution::Gate(GateExecution {
                kind: gate,
                inputs: vec![span.cell(src)],
                output: span.cell(dst),
                rows: vec![0],
                init_mode: InitMode::Standard,
            }));
            polarity[dst] = match (gate, polarity[src]) {
                (GateKind::Not, Polarity::TrueValue) => Polarity::Complemented,
                (GateKind::Not, Polarity::Complemented) => Polarity::TrueValue,
                (_, p) => p,
            };
        }
        sched.push(
            Phase::Routing,
            CycleInstruction {
                config: TransistorConfig(config),
                executions,
            },
        );
    }
    Ok((sched, PolarityMap(polarity)))
}

/// Serial broadcast: k-1 cycles, every landing one hop from the source.
pub fn broadcast_naive(span: &PartitionSpan, gate: GateKind) -> Result<Schedule, RoutingError> {
    span.check()?;
    let mut sched = Schedule::new();
    for dst in 1..span.count {
        let instr = one_gate_cycle(
            span,
            gate,
            vec![span.cell(0)],
            span.cell(dst),
            span.boundary_after(0)..span.boundary_after(dst),
        );
        sched.push(Phase::Routing, instr);
    }
    Ok(sched)
}

/// Two-phase neighbour shift: partition p's gate output lands in p+1 for
/// every p, odd-indexed sources first (1-based), then even-indexed. The
/// gate reads `input_offsets` inside the sending partition and writes
/// `target_offset` in the receiver.
pub fn shift_parallel(
    span: &PartitionSpan,
    gate: GateKind,
    input_offsets: &[usize],
    target_offset: usize,
) -> Result<Schedule, RoutingError> {
    span.check()?;
    if span.count < 2 {
        return Err(RoutingError::SpanTooSmall);
    }
    if input_offsets.contains(&target_offset) {
        return Err(RoutingError::TargetCollision);
    }
    let mut sched = Schedule::new();
    for phase in [1usize, 0usize] {
        let mut config = vec![Conduct::Isolated; span.n_boundaries];
        let mut executions = Vec::new();
        // 1-based sender index p+1 must match the phase parity.
        for p in 0..span.count - 1 {
            if (p + 1) % 2 != phase {
                continue;
            }
            config[span.boundary_after(p)] = Conduct::Conducting;
            executions.push(Execution::Gate(GateExecution {
                kind: gate,
                inputs: input_offsets
                    .iter()
                    .map(|&o| span.starts[span.first + p] + o)
                    .collect(),
                output: span.starts[span.first + p + 1] + target_offset,
                rows: vec![0],
                init_mode: InitMode::Standard,
            }));
        }
        if !executions.is_empty() {
            sched.push(
                Phase::Routing,
                CycleInstruction {
                    config: TransistorConfig(config),
                    executions,
                },
            );
        }
    }
    Ok(sched)
}

/// Serial neighbour shift, highest pair first: k-1 cycles.
pub fn shift_naive(
    span: &PartitionSpan,
    gate: GateKind,
    input_offsets: &[usize],
    target_offset: usize,
) -> Result<Schedule, RoutingError> {
    span.check()?;
    if span.count < 2 {
        return Err(RoutingError::SpanTooSmall);
    }
    if input_offsets.contains(&target_offset) {
        return Err(RoutingError::TargetCollision);
    }
    let mut sched = Schedule::new();
    for p in (0..span.count - 1).rev() {
        let instr = one_gate_cycle(
            span,
            gate,
            input_offsets
                .iter()
                .map(|&o| span.starts[span.first + p] + o)
                .collect(),
            span.starts[span.first + p + 1] + target_offset,
            span.boundary_after(p)..span.boundary_after(p) + 1,
        );
        sched.push(Phase::Routing, instr);
    }
    Ok(sched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::{CrossbarState, CycleInstruction, Execution, InitExecution};

    /// Build a crossbar for a uniform span and initialize the landing and
    /// target cells (the caller's init cycle).
    fn prepare(span: &PartitionSpan, width: usize, init_offsets: &[usize]) -> CrossbarState {
        let parts = span.starts.len();
        let boundaries: Vec<usize> = (1..parts).map(|p| p * width).collect();
        let mut xb = CrossbarState::create(1, parts * width, boundaries).unwrap();
        let targets = (0..parts)
            .flat_map(|p| init_offsets.iter().map(move |&o| (vec![0], p * width + o)))
            .collect();
        xb.apply_cycle(
            &CycleInstruction {
                config: crate::crossbar::TransistorConfig::all_isolated(parts - 1),
                executions: vec![Execution::Init(InitExecution { targets })],
            },
            None,
        )
        .unwrap();
        xb
    }

    #[test]
    fn broadcast_log_copy_cycle_counts_and_values() {
        for k in 1..=32usize {
            let span = PartitionSpan::uniform(k.max(1), 2, 0);
            let (sched, polarity) = broadcast_log(&span, GateKind::Copy).unwrap();
            let expected = if k <= 1 {
                0
            } else {
                (usize::BITS - (k - 1).leading_zeros()) as usize
            };
            assert_eq!(sched.len(), expected, "k={k}");
            for bit in [false, true] {
                let mut xb = prepare(&span, 2, &[0]);
                xb.write_cells(&[(0, 0, bit)]).unwrap();
                sched.run(&mut xb).unwrap();
                for p in 0..k {
                    assert_eq!(xb.read_cell(0, p * 2).unwrap(), bit, "k={k} p={p}");
                    assert!(matches!(polarity.0[p], Polarity::TrueValue));
                }
            }
        }
    }

    #[test]
    fn broadcast_log_not_polarity_matches_simulation() {
        for k in 2..=32usize {
            let span = PartitionSpan::uniform(k, 2, 0);
            let (sched, polarity) = broadcast_log(&span, GateKind::Not).unwrap();
            for bit in [false, true] {
                let mut xb = prepare(&span, 2, &[0]);
                xb.write_cells(&[(0, 0, bit)]).unwrap();
                sched.run(&mut xb).unwrap();
                for p in 0..k {
                    let want = match polarity.0[p] {
                        Polarity::TrueValue => bit,
                        Polarity::Complemented => !bit,
                    };
                    assert_eq!(xb.read_cell(0, p * 2).unwrap(), want, "k={k} p={p}");
                }
            }
        }
    }

    /// After cycle t, exactly min(2^t, k) partitions hold the bit.
    #[test]
    fn broadcast_log_doubles_coverage() {
        for k in [4usize, 8, 13, 32] {
            let span = PartitionSpan::uniform(k, 2, 0);
            let (sched, _) = broadcast_log(&span, GateKind::Copy).unwrap();
            let mut holding = vec![false; k];
            holding[0] = true;
            for (t, (_, instr)) in sched.steps.iter().enumerate() {
                for exec in &instr.executions {
                    if let Execution::Gate(g) = exec {
                        assert!(holding[g.inputs[0] / 2], "source must hold the bit");
                        holding[g.output / 2] = true;
                    }
                }
                let count = holding.iter().filter(|h| **h).count();
                assert_eq!(count, k.min(1 << (t + 1)), "k={k} t={t}");
            }
            assert!(holding.iter().all(|h| *h));
        }
    }

    #[test]
    fn broadcast_naive_counts_and_values() {
        for k in [2usize, 8, 16] {
            let span = PartitionSpan::uniform(k, 2, 0);
            let sched = broadcast_naive(&span, GateKind::Copy).unwrap();
            assert_eq!(sched.len(), k - 1);
            let mut xb = prepare(&span, 2, &[0]);
            xb.write_cells(&[(0, 0, true)]).unwrap();
            sched.run(&mut xb).unwrap();
            for p in 0..k {
                assert_eq!(xb.read_cell(0, p * 2).unwrap(), true);
            }
        }
    }

    #[test]
    fn shift_parallel_copy_moves_bits_in_two_cycles() {
        for k in [2usize, 5, 6, 9] {
            let span = PartitionSpan::uniform(k, 2, 0);
            let sched = shift_parallel(&span, GateKind::Copy, &[0], 1).unwrap();
            assert_eq!(sched.len(), if k == 2 { 1 } else { 2 }, "k={k}");
            let mut xb = prepare(&span, 2, &[1]);
            let bits: Vec<bool> = (0..k).map(|p| p % 3 == 0).collect();
            for (p, &b) in bits.iter().enumerate() {
                xb.write_cells(&[(0, p * 2, b)]).unwrap();
            }
            sched.run(&mut xb).unwrap();
            for p in 1..k {
                assert_eq!(
                    xb.read_cell(0, p * 2 + 1).unwrap(),
                    bits[p - 1],
                    "k={k} p={p}"
                );
            }
        }
    }

    /// Generalized shift: each partition holds three cells; the receiver
    /// gets Min3 of its neighbour's cells.
    #[test]
    fn shift_parallel_min3_matches_direct_evaluation() {
        let k = 5;
        let span = PartitionSpan::uniform(k, 4, 0);
        let sched = shift_parallel(&span, GateKind::Min3, &[0, 1, 2], 3).unwrap();
        assert_eq!(sched.len(), 2);
        let mut xb = prepare(&span, 4, &[3]);
        let mut cells = Vec::new();
        for p in 0..k {
            let triple = [(p + 1) % 2 == 0, p % 3 == 1, p % 2 == 1];
            for (o, &b) in triple.iter().enumerate() {
                xb.write_cells(&[(0, p * 4 + o, b)]).unwrap();
            }
            cells.push(triple);
        }
        sched.run(&mut xb).unwrap();
        for p in 1..k {
            let want = GateKind::Min3.eval(&cells[p - 1]).unwrap();
            assert_eq!(xb.read_cell(0, p * 4 + 3).unwrap(), want, "p={p}");
        }
    }

    #[test]
    fn shift_naive_matches_parallel_result() {
        for k in [2usize, 6, 9] {
            let span = PartitionSpan::uniform(k, 2, 0);
            let fast = shift_parallel(&span, GateKind::Copy, &[0], 1).unwrap();
            let slow = shift_naive(&span, GateKind::Copy, &[0], 1).unwrap();
            assert_eq!(slow.len(), k - 1);
            let bits: Vec<bool> = (0..k).map(|p| p % 2 == 1).collect();
            let run = |sched: &crate::schedule::Schedule| {
                let mut xb = prepare(&span, 2, &[1]);
                for (p, &b) in bits.iter().enumerate() {
                    xb.write_cells(&[(0, p * 2, b)]).unwrap();
                }
                sched.run(&mut xb).unwrap();
                (1..k)
                    .map(|p| xb.read_cell(0, p * 2 + 1).unwrap())
                    .collect::<Vec<bool>>()
            };
            assert_eq!(run(&fast), run(&slow), "k={k}");
        }
    }

    #[test]
    fn span_errors() {
        let span = PartitionSpan {
            starts: vec![0, 2, 4],
            n_boundaries: 2,
            first: 1,
            count: 3,
            cell_offset: 0,
        };
        assert!(matches!(
            broadcast_log(&span, GateKind::Copy),
            Err(RoutingError::SpanTooLarge { .. })
        ));
        let one = PartitionSpan::uniform(1, 2, 0);
        assert!(matches!(
            shift_parallel(&one, GateKind::Copy, &[0], 1),
            Err(RoutingError::SpanTooSmall)
        ));
        let two = PartitionSpan::uniform(2, 2, 0);
        assert!(matches!(
            shift_parallel(&two, GateKind::Copy, &[0], 0),
            Err(RoutingError::TargetCollision)
        ));
    }
}
