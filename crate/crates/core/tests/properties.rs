//! Property tests for the simulator invariants: determinism, commuting
//! executions within a cycle, conservation of untouched cells, trace round
//! trips and functional equivalence against integer arithmetic.

use proptest::prelude::*;

use pim_core::crossbar::Execution;
use pim_core::matvec::{run_fused_mac, run_matvec, MatVecConfig};
use pim_core::multiplier::{
    audited_schedule, run_multiply, MultiplierConfig, MultiplierLayout, Variant,
};
use pim_core::trace::{read_trace, write_trace};
use pim_core::{CrossbarState, Schedule};

fn final_cells(layout: &MultiplierLayout, sched: &Schedule, a: u128, b: u128) -> (Vec<bool>, u64) {
    let mut xb = CrossbarState::create(1, layout.cols, layout.boundaries.clone()).unwrap();
    xb.write_cells(&layout.operand_writes(a, b)).unwrap();
    sched.run(&mut xb).unwrap();
    let report = xb.cost_report();
    let cells: Vec<bool> = (0..layout.cols)
        .map(|c| xb.read_cell(0, c).unwrap_or(false))
        .collect();
    (cells, report.cycles)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Replaying the same schedule twice yields identical state and cost.
    #[test]
    fn determinism(a in 0u128..256, b in 0u128..256) {
        let cfg = MultiplierConfig::square(8, Variant::Standard);
        let (layout, sched) = audited_schedule(cfg).unwrap();
        let first = final_cells(&layout, &sched, a, b);
        let second = final_cells(&layout, &sched, a, b);
        prop_assert_eq!(first, second);
    }

    /// Executions within one cycle commute: reversing their order changes
    /// nothing.
    #[test]
    fn cycle_executions_commute(a in 0u128..256, b in 0u128..256) {
        let cfg = MultiplierConfig::square(8, Variant::Standard);
        let (layout, sched) = audited_schedule(cfg).unwrap();
        let mut reversed = sched.clone();
        for (_, instr) in reversed.steps.iter_mut() {
            instr.executions.reverse();
        }
        prop_assert_eq!(
            final_cells(&layout, &sched, a, b),
            final_cells(&layout, &reversed, a, b)
        );
    }

    /// Cells never named as an output or init target keep their value
    /// across a cycle, and the cycle counter advances by exactly one.
    #[test]
    fn untouched_cells_are_conserved(a in 0u128..256, b in 0u128..256, upto in 0usize..60) {
        let cfg = MultiplierConfig::square(8, Variant::Standard);
        let (layout, sched) = audited_schedule(cfg).unwrap();
        let mut xb = CrossbarState::create(1, layout.cols, layout.boundaries.clone()).unwrap();
        xb.write_cells(&layout.operand_writes(a, b)).unwrap();
        let upto = upto.min(sched.len() - 1);
        for (phase, instr) in sched.steps.iter().take(upto) {
            xb.apply_cycle(instr, Some(phase.name())).unwrap();
        }
        let before: Vec<Option<bool>> =
            (0..layout.cols).map(|c| xb.read_cell(0, c).ok()).collect();
        let cycles_before = xb.cost_report().cycles;
        let (phase, instr) = &sched.steps[upto];
        let mut written = std::collections::BTreeSet::new();
        for exec in &instr.executions {
            match exec {
                Execution::Gate(g) => {
                    written.insert(g.output);
                }
                Execution::Init(init) => {
                    for (_, col) in &init.targets {
                        written.insert(*col);
                    }
                }
            }
        }
        xb.apply_cycle(instr, Some(phase.name())).unwrap();
        prop_assert_eq!(xb.cost_report().cycles, cycles_before + 1);
        for c in 0..layout.cols {
            if !written.contains(&c) {
                prop_assert_eq!(xb.read_cell(0, c).ok(), before[c], "column {}", c);
            }
        }
    }

    /// Serializing a schedule to the trace format and replaying the parse
    /// yields the same machine behavior.
    #[test]
    fn trace_round_trip_replays_identically(a in 0u128..64, b in 0u128..64) {
        let cfg = MultiplierConfig::square(6, Variant::Standard);
        let (layout, sched) = audited_schedule(cfg).unwrap();
        let mut buf = Vec::new();
        write_trace(&sched, &mut buf).unwrap();
        let parsed = read_trace(buf.as_slice()).unwrap();
        prop_assert_eq!(
            final_cells(&layout, &sched, a, b).0,
            final_cells(&layout, &parsed, a, b).0
        );
    }

    /// Multiplication equals integer multiplication for random widths.
    #[test]
    fn multiply_matches_oracle(
        n in 2usize..10,
        a in any::<u64>(),
        b in any::<u64>(),
        area in any::<bool>(),
    ) {
        let mask = (1u128 << n) - 1;
        let (a, b) = (a as u128 & mask, b as u128 & mask);
        let variant = if area { Variant::Area } else { Variant::Standard };
        let (product, report, layout) =
            run_multiply(a, b, MultiplierConfig::square(n, variant)).unwrap();
        prop_assert_eq!(product, a * b);
        prop_assert_eq!(report.cycles, layout.predicted_cycles());
        prop_assert_eq!(report.memristors_per_row, layout.predicted_memristors());
    }

    /// Rectangular operand widths multiply correctly too.
    #[test]
    fn rectangular_widths(
        na in 2usize..7,
        nb in 2usize..7,
        a in any::<u32>(),
        b in any::<u32>(),
    ) {
        let (a, b) = (a as u128 & ((1 << na) - 1), b as u128 & ((1 << nb) - 1));
        let cfg = MultiplierConfig { n_a: na, n_b: nb, variant: Variant::Standard };
        let (product, _, _) = run_multiply(a, b, cfg).unwrap();
        prop_assert_eq!(product, a * b);
    }

    /// Fused MAC accumulator identity.
    #[test]
    fn fused_mac_identity(a in 0u128..64, b in 0u128..64, s_i in any::<u16>(), c_i in any::<u16>()) {
        let bits = 6;
        let mask2 = (1u128 << (2 * bits)) - 1;
        let (s_i, c_i) = (s_i as u128 & mask2, c_i as u128 & mask2);
        let (s_o, c_o) = run_fused_mac(a, b, s_i, c_i, bits).unwrap();
        prop_assert_eq!((s_o + c_o) & mask2, (a * b + s_i + c_i) & mask2);
    }

    /// Matrix-vector result equals the integer oracle.
    #[test]
    fn matvec_matches_oracle(seed in any::<u64>()) {
        let (m, n, bits) = (2usize, 3usize, 5usize);
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            (z ^ (z >> 31)) as u128 & ((1 << bits) - 1)
        };
        let a: Vec<Vec<u128>> = (0..m).map(|_| (0..n).map(|_| next()).collect()).collect();
        let x: Vec<u128> = (0..n).map(|_| next()).collect();
        let (y, _, _) = run_matvec(&a, &x, MatVecConfig { m, n, bits }).unwrap();
        let mask2 = (1u128 << (2 * bits)) - 1;
        let want: Vec<u128> = a
            .iter()
            .map(|row| row.iter().zip(&x).map(|(&p, &q)| p * q).sum::<u128>() & mask2)
            .collect();
        prop_assert_eq!(y, want);
    }
}
