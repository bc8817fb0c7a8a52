//! Gate-level adder schedules: the Min3/NOT full adder, the extended-profile
//! baseline full adder, the half-adder stage group and the serial ripple
//! adder.

use thiserror::Error;

use crate::crossbar::{
    Conduct, CycleInstruction, Execution, GateExecution, InitExecution, InitMode, TransistorConfig,
};
use crate::gates::{GateError, GateKind, GateProfile};
use crate::schedule::{Phase, Schedule};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdderError {
    #[error("cell layout columns must be pairwise distinct")]
    ColumnCollision,
    #[error(transparent)]
    Profile(#[from] GateError),
    #[error("width must be at least 1")]
    WidthTooSmall,
}

/// Column map for one standalone full adder inside a single partition.
#[derive(Debug, Clone, Copy)]
pub struct FullAdderCellLayout {
    pub a: usize,
    pub b: usize,
    pub cin: usize,
    /// Complement of the carry-in; input when already present, otherwise
    /// computed as the first cycle.
    pub cin_c: usize,
    /// First intermediate; always ends up holding the complement of Cout.
    pub t1: usize,
    pub cout: usize,
    pub t2: usize,
    pub s: usize,
}

impl FullAdderCellLayout {
    pub fn packed(base: usize) -> FullAdderCellLayout {
        FullAdderCellLayout {
            a: base,
            b: base + 1,
            cin: base + 2,
            cin_c: base + 3,
            t1: base + 4,
            cout: base + 5,
            t2: base + 6,
            s: base + 7,
        }
    }

    fn check(&self) -> Result<(), AdderError> {
        let mut cols = [
            self.a, self.b, self.cin, self.cin_c, self.t1, self.cout, self.t2, self.s,
        ];
        cols.sort_unstable();
        if cols.windows(2).any(|w| w[0] == w[1]) {
            return Err(AdderError::ColumnCollision);
        }
        Ok(())
    }
}

fn single_gate(
    kind: GateKind,
    inputs: Vec<usize>,
    output: usize,
    mode: InitMode,
) -> CycleInstruction {
    CycleInstruction {
        config: TransistorConfig(Vec::new()),
        executions: vec![Execution::Gate(GateExecution {
            kind,
            inputs,
            output,
            rows: vec![0],
            init_mode: mode,
        })],
    }
}

/// The Min3/NOT full adder: carry as the complement of Min3(A, B, Cin), sum
/// as Min3(Cout, Cin', Min3(A, B, Cin')). Five cycles, or four when the
/// carry-in complement is already resident. Initialization of the output
/// and intermediate cells is the caller's (excluded, as counted).
pub fn full_adder_multpim(
    layout: &FullAdderCellLayout,
    have_cin_complement: bool,
) -> Result<Schedule, AdderError> {
    layout.check()?;
    let mut sched = Schedule::new();
    let mut push = |k, i, o| sched.push(Phase::Adder, single_gate(k, i, o, InitMode::Standard));
    if !have_cin_complement {
        push(GateKind::Not, vec![layout.cin], layout.cin_c);
    }
    push(
        GateKind::Min3,
        vec![layout.a, layout.b, layout.cin],
        layout.t1,
    );
    push(GateKind::Not, vec![layout.t1], layout.cout);
    push(
        GateKind::Min3,
        vec![layout.a, layout.b, layout.cin_c],
        layout.t2,
    );
    push(
        GateKind::Min3,
        vec![layout.cout, layout.cin_c, layout.t2],
        layout.s,
    );
    Ok(sched)
}

/// Baseline six-cycle full adder under the extended profile, two
/// intermediates. XORs are built by OR followed by a no-init NAND into the
/// same cell; the carry is the usual Min3 complement.
pub fn full_adder_felix(
    layout: &FullAdderCellLayout,
    profile: GateProfile,
) -> Result<Schedule, AdderError> {
    layout.check()?;
    for kind in [
        GateKind::Or2,
        GateKind::Nand2,
        GateKind::Min3,
        GateKind::Not,
    ] {
        profile.check(kind)?;
    }
    let mut sched = Schedule::new();
    let mut push = |k, i: Vec<usize>, o, m| sched.push(Phase::Adder, single_gate(k, i, o, m));
    push(
        GateKind::Or2,
        vec![layout.a, layout.b],
        layout.t1,
        InitMode::Standard,
    );
    push(
        GateKind::Nand2,
        vec![layout.a, layout.b],
        layout.t1,
        InitMode::NoInit,
    );
    push(
        GateKind::Or2,
        vec![layout.t1, layout.cin],
        layout.s,
        InitMode::Standard,
    );
    push(
        GateKind::Nand2,
        vec![layout.t1, layout.cin],
        layout.s,
        InitMode::NoInit,
    );
    push(
        GateKind::Min3,
        vec![layout.a, layout.b, layout.cin],
        layout.t2,
        InitMode::Standard,
    );
    push(
        GateKind::Not,
        vec![layout.t2],
        layout.cout,
        InitMode::Standard,
    );
    Ok(sched)
}

/// Per-partition cell offsets for the half-adder stage group.
#[derive(Debug, Clone, Copy)]
pub struct HalfAdderOffsets {
    pub s: usize,
    pub c: usize,
    pub c_c: usize,
    pub z: usize,
    pub t1: usize,
    pub cout: usize,
    pub t2: usize,
    pub s_next: usize,
}

impl HalfAdderOffsets {
    pub fn packed() -> HalfAdderOffsets {
        HalfAdderOffsets {
            s: 0,
            c: 1,
            c_c: 2,
            z: 3,
            t1: 4,
            cout: 5,
            t2: 6,
            s_next: 7,
        }
    }
    pub const WIDTH: usize = 8;
}

/// One half-adder stage over `parts` uniform partitions: each partition
/// turns its resident (s, c, c') into a new carry in place while the new
/// sum moves to the next partition's `s_next` cell — three adder cycles
/// plus the two-phase shift. The zero cell supplies the absent addend.
pub fn half_adder(parts: usize, off: HalfAdderOffsets) -> Result<Schedule, AdderError> {
    if parts < 2 {
        return Err(AdderError::WidthTooSmall);
    }
    let width = HalfAdderOffsets::WIDTH;
    let col = |p: usize, o: usize| p * width + o;
    let nb = parts - 1;
    let mut sched = Schedule::new();
    let all_isolated = || TransistorConfig(vec![Conduct::Isolated; nb]);
    // t1 = Min3(s, z, c): complement of the new carry.
    for (t_off, third) in [(off.t1, off.c), (usize::MAX, 0), (off.t2, off.c_c)] {
        if t_off == usize::MAX {
            // Second cycle: cout = NOT(t1) in every partition.
            let executions = (0..parts)
                .map(|p| {
                    Execution::Gate(GateExecution {
                        kind: GateKind::Not,
                        inputs: vec![col(p, off.t1)],
                        output: col(p, off.cout),
                        rows: vec![0],
                        init_mode: InitMode::Standard,
                    })
                })
                .collect();
            sched.push(
                Phase::Adder,
                CycleInstruction {
                    config: all_isolated(),
                    executions,
                },
            );
            continue;
        }
        let executions = (0..parts)
            .map(|p| {
                Execution::Gate(GateExecution {
                    kind: GateKind::Min3,
                    inputs: vec![col(p, off.s), col(p, off.z), col(p, third)],
                    output: col(p, t_off),
                    rows: vec![0],
                    init_mode: InitMode::Standard,
                })
            })
            .collect();
        sched.push(
            Phase::Adder,
            CycleInstruction {
                config: all_isolated(),
                executions,
            },
        );
    }
    // Fused sum shift: Min3(cout, c', t2) lands in the next partition.
    for phase in [1usize, 0usize] {
        let mut config = vec![Conduct::Isolated; nb];
        let mut executions = Vec::new();
        #[allow(clippy::needless_range_loop)]
        for p in 0..parts - 1 {
            if (p + 1) % 2 != phase {
                continue;
            }
            config[p] = Conduct::Conducting;
            executions.push(Execution::Gate(GateExecution {
                kind: GateKind::Min3,
                inputs: vec![col(p, off.cout), col(p, off.c_c), col(p, off.t2)],
                output: col(p + 1, off.s_next),
                rows: vec![0],
                init_mode: InitMode::Standard,
            }));
        }
        if !executions.is_empty() {
            sched.push(
                Phase::Adder,
                CycleInstruction {
                    config: TransistorConfig(config),
                    executions,
                },
            );
        }
    }
    Ok(sched)
}

/// Cell map of the serial ripple adder: inputs, per-bit working triples and
/// the sum cells, all in one partition.
#[derive(Debug, Clone)]
pub struct RippleLayout {
    pub n: usize,
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub cin: usize,
    pub cin_c: usize,
    pub t1: Vec<usize>,
    pub co: Vec<usize>,
    pub t2: Vec<usize>,
    pub s: Vec<usize>,
    /// Top sum bit (the final carry-out).
    pub s_top: usize,
    pub cols: usize,
}

impl RippleLayout {
    pub fn new(n: usize) -> Result<RippleLayout, AdderError> {
        if n == 0 {
            return Err(AdderError::WidthTooSmall);
        }
        let mut next = 0usize;
        let mut take = |k: usize| {
            let start = next;
            next += k;
            (start..start + k).collect::<Vec<usize>>()
        };
        let x = take(n);
        let y = take(n);
        let cin = take(1)[0];
        let cin_c = take(1)[0];
        let t1 = take(n);
        let co = take(n - 1);
        let t2 = take(n);
        let s = take(n);
        let s_top = take(1)[0];
        Ok(RippleLayout {
            n,
            x,
            y,
            cin,
            cin_c,
            t1,
            co,
            t2,
            s,
            s_top,
            cols: next,
        })
    }

    pub fn operand_writes(&self, x: u128, y: u128, cin: bool) -> Vec<(usize, usize, bool)> {
        let mut w = Vec::new();
        for j in 0..self.n {
            w.push((0, self.x[j], x >> j & 1 == 1));
            w.push((0, self.y[j], y >> j & 1 == 1));
        }
        w.push((0, self.cin, cin));
        w.push((0, self.cin_c, !cin));
        w
    }

    /// Working cells beyond operands and sum outputs: the per-bit triples
    /// minus the shared top cell, plus the carry seed pair (3N + 1 cells).
    pub fn working_cells(&self) -> usize {
        self.t1.len() + self.co.len() + self.t2.len() + 2
    }
}

/// Serial N-bit ripple adder: per bit one batched init cycle and four
/// gates; the carry complement is re-used from the previous bit's t1, and
/// the top carry goes directly to the top sum cell. 5N cycles total.
pub fn ripple_adder(layout: &RippleLayout) -> Schedule {
    let n = layout.n;
    let mut sched = Schedule::new();
    for k in 0..n {
        let co_k = if k == n - 1 {
            layout.s_top
        } else {
            layout.co[k]
        };
        let mut targets = vec![
            (vec![0], layout.t1[k]),
            (vec![0], co_k),
            (vec![0], layout.t2[k]),
            (vec![0], layout.s[k]),
        ];
        targets.dedup();
        sched.push(
            Phase::Adder,
            CycleInstruction {
                config: TransistorConfig(Vec::new()),
                executions: vec![Execution::Init(InitExecution { targets })],
            },
        );
        let (c_prev, c_prev_c) = if k == 0 {
            (layout.cin, layout.cin_c)
        } else {
            (layout.co[k - 1], layout.t1[k - 1])
        };
        let mut push = |kind, inputs, output| {
            sched.push(
                Phase::Adder,
                single_gate(kind, inputs, output, InitMode::Standard),
            )
        };
        push(
            GateKind::Min3,
            vec![layout.x[k], layout.y[k], c_prev],
            layout.t1[k],
        );
        push(GateKind::Not, vec![layout.t1[k]], co_k);
        push(
            GateKind::Min3,
            vec![layout.x[k], layout.y[k], c_prev_c],
            layout.t2[k],
        );
        push(
            GateKind::Min3,
            vec![co_k, c_prev_c, layout.t2[k]],
            layout.s[k],
        );
    }
    sched
}

/// Convenience: run the ripple adder on fresh state.
pub fn run_ripple(
    x: u128,
    y: u128,
    cin: bool,
    n: usize,
) -> Result<(u128, crate::crossbar::CostReport), crate::multiplier::MultiplierError> {
    let layout = RippleLayout::new(n).expect("width checked by caller");
    let sched = ripple_adder(&layout);
    let mut xb = crate::crossbar::CrossbarState::create(1, layout.cols, vec![])?;
    xb.write_cells(&layout.operand_writes(x, y, cin))?;
    sched.run(&mut xb)?;
    let mut sum = 0u128;
    for (j, &col) in layout.s.iter().enumerate() {
        if xb.read_cell(0, col)? {
            sum |= 1 << j;
        }
    }
    if xb.read_cell(0, layout.s_top)? {
        sum |= 1 << n;
    }
    Ok((sum, xb.cost_report()))
}
