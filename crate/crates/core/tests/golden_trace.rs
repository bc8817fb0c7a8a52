//! Golden-file regression for the trace wire format: the emitted trace of a
//! fixed configuration must stay byte-identical, and replaying the golden
//! file must reproduce the product and cost report.

use pim_core::multiplier::{audited_schedule, MultiplierConfig, Variant};
use pim_core::trace::{read_trace, write_trace};
use pim_core::CrossbarState;

const GOLDEN: &str = include_str!("data/mult4_golden.jsonl");

#[test]
fn trace_bytes_are_stable() {
    let cfg = MultiplierConfig::square(4, Variant::Standard);
    let (_, sched) = audited_schedule(cfg).unwrap();
    let mut buf = Vec::new();
    write_trace(&sched, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), GOLDEN);
}

#[test]
fn golden_trace_replays_to_the_same_product_and_cost() {
    let cfg = MultiplierConfig::square(4, Variant::Standard);
    let (layout, _) = audited_schedule(cfg).unwrap();
    let sched = read_trace(GOLDEN.as_bytes()).unwrap();
    let mut xb = CrossbarState::create(1, layout.cols, layout.boundaries.clone()).unwrap();
    xb.write_cells(&layout.operand_writes(11, 13)).unwrap();
    sched.run(&mut xb).unwrap();
    let report = xb.cost_report();
    assert_eq!(report.cycles, 67);
    assert_eq!(report.memristors_per_row, 49);
    assert_eq!(report.partitions, 3);
    let bits = xb
        .read_cells(
            &layout
                .out_cols()
                .iter()
                .map(|&c| (0, c))
                .collect::<Vec<_>>(),
        )
        .unwrap();
    let product = bits
        .iter()
        .enumerate()
        .filter(|(_, b)| **b)
        .fold(0u128, |acc, (j, _)| acc | 1 << j);
    assert_eq!(product, 143);
}
