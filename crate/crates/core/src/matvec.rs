//! Fused multiply-accumulate and the row-parallel matrix-vector driver.
//!
//! One MAC pass computes `s_o + c_o = a*b + s_i + c_i (mod 2^2N)` by running
//! only the feed stages of the multiplier: the sum fields start from the low
//! half of `s_i`, the carry fields hold the low half of `c_i`, and the upper
//! halves stream through the first unit, summed on the fly by a bit-serial
//! adder living in the input partition whose gates ride otherwise idle
//! cycles. Between passes the accumulator is egested into complemented
//! queues (`Qs`, `Qc`) and the emitted low bits into `E`; the next pass
//! ingests `E` back into the sum fields with one NOT per bit. After the last
//! pass a serial ripple turns the resident sum/carry registers into the
//! high result bits.
//!
//! All gates carry the full row mask, so the same column schedule runs on
//! every matrix row and latency is independent of the row count.

use thiserror::Error;

use crate::crossbar::{
    Conduct, CrossbarError, CrossbarState, CycleInstruction, Execution, GateExecution,
    InitExecution, InitMode, TransistorConfig,
};
use crate::gates::GateKind;
use crate::multiplier::ColAlloc;
use crate::schedule::{Phase, Schedule};
use crate::tree::{plan_broadcast_avoiding, HopSource, TreeError, TreeTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatVecConfig {
    /// Rows of the matrix.
    pub m: usize,
    /// Columns of the matrix / vector length.
    pub n: usize,
    /// Element bit width.
    pub bits: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatVecError {
    #[error("{0}")]
    BadDimensions(&'static str),
    #[error("element 0x{value:x} does not fit in {bits} bits")]
    ElementTooWide { value: u128, bits: usize },
    #[error("dimension mismatch: matrix is {m}x{n}, vector has {len} elements")]
    DimensionMismatch { m: usize, n: usize, len: usize },
    #[error("no legal broadcast tree: {0}")]
    Tree(#[from] TreeError),
    #[error("simulation error: {0}")]
    Crossbar(#[from] CrossbarError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SumBuf {
    Single(usize),
    Double([usize; 2]),
}

#[derive(Debug, Clone, Copy)]
enum Flavor {
    True { beta: usize },
    Compl { b_land: usize, pp_home: usize },
}

#[derive(Debug, Clone)]
struct Unit {
    /// 1-based unit id; unit `u` stores bit `bits - u` of `a` and lives in
    /// partition `u`.
    id: usize,
    a_c: usize,
    flavor: Flavor,
    c: [[usize; 2]; 2],
    t2: usize,
    s: SumBuf,
    /// Final-sum scratch (t1 of the closing ripple; unit `bits` holds its
    /// manufactured zero).
    fs: usize,
}

/// Cell map of the fused-MAC row.
#[derive(Debug, Clone)]
pub struct MatVecLayout {
    pub cfg: MatVecConfig,
    pub cols: usize,
    pub boundaries: Vec<usize>,
    /// Matrix elements, row-major per crossbar row: `a_el[j]` covers bits of A[.,j].
    a_el: Vec<Vec<usize>>,
    /// Duplicated vector elements.
    x_el: Vec<Vec<usize>>,
    /// Complemented high-sum queue: `qs[t]` holds NOT(s_i bit N+t).
    qs: Vec<usize>,
    /// Complemented high-carry queue: `qc[t]` holds NOT(c_i bit N+t).
    qc: Vec<usize>,
    /// High result bits (and per-stage scratch homes during the passes).
    y: Vec<usize>,
    /// Serial-adder carry pair per parity: `gamma[p] = [true, complement]`.
    gamma: [[usize; 2]; 2],
    units: Vec<Unit>,
    /// Complemented emitted low bits.
    e: Vec<usize>,
    /// Emit staging cell next to the last unit.
    e1: usize,
    tree: Vec<Vec<(HopSource, usize)>>,
}

impl MatVecLayout {
    pub fn new(cfg: MatVecConfig) -> Result<MatVecLayout, MatVecError> {
        if cfg.m == 0 || cfg.n == 0 {
            return Err(MatVecError::BadDimensions("matrix dimensions must be positive"));
        }
        // The closing ripple stages its first gates on the egest tail,
        // which needs at least three units.
        if cfg.bits < 3 {
            return Err(MatVecError::BadDimensions("element width must be at least 3 bits"));
        }
        let nb = cfg.bits;
        let mut alloc = ColAlloc::default();
        let a_el: Vec<Vec<usize>> = (0..cfg.n).map(|_| alloc.take(nb)).collect();
        let x_el: Vec<Vec<usize>> = (0..cfg.n).map(|_| alloc.take(nb)).collect();
        let qs = alloc.take(nb);
        let qc = alloc.take(nb);
        let y = alloc.take(nb);
        let gamma = [[alloc.one(), alloc.one()], [alloc.one(), alloc.one()]];
        let mut boundaries = Vec::new();
        let mut units = Vec::new();
        for id in 1..=nb {
            boundaries.push(alloc.pos());
            let a_c = alloc.one();
            let flavor = if id % 2 == 1 {
                Flavor::Compl {
                    b_land: alloc.one(),
                    pp_home: alloc.one(),
                }
            } else {
                Flavor::True { beta: alloc.one() }
            };
            let c = [[alloc.one(), alloc.one()], [alloc.one(), alloc.one()]];
            let t2 = alloc.one();
            let s = if id % 2 == 1 {
                SumBuf::Single(alloc.one())
            } else {
                SumBuf::Double([alloc.one(), alloc.one()])
            };
            let fs = alloc.one();
            units.push(Unit {
                id,
                a_c,
                flavor,
                c,
                t2,
                s,
                fs,
            });
        }
        let e = alloc.take(nb);
        let e1 = alloc.one();
        let cols = alloc.pos();
        // Broadcast targets: unit landings, odd units complemented. The
        // first tree cycle leaves the last partition free so the previous
        // stage's emit hop can ride it.
        let targets: Vec<TreeTarget> = units
            .iter()
            .map(|u| TreeTarget {
                cp: u.id,
                want_odd: u.id % 2 == 1,
            })
            .collect();
        let cycles = ceil_log2(nb) + 1;
        let tree = plan_broadcast_avoiding(nb + 1, 0, cycles, &targets, Some(nb))?;
        Ok(MatVecLayout {
            cfg,
            cols,
            boundaries,
            a_el,
            x_el,
            qs,
            qc,
            y,
            gamma,
            units,
            e,
            e1,
            tree,
        })
    }

    pub fn partitions(&self) -> usize {
        self.boundaries.len() + 1
    }

    fn landing_col(&self, target_idx: usize) -> usize {
        match self.units[target_idx].flavor {
            Flavor::True { beta } => beta,
            Flavor::Compl { b_land, .. } => b_land,
        }
    }

    /// Operand writes for all rows: matrix elements, duplicated vector and
    /// the zeroed accumulator queues.
    pub fn operand_writes(&self, a: &[Vec<u128>], x: &[u128]) -> Vec<(usize, usize, bool)> {
        let mut w = Vec::new();
        for (row, a_row) in a.iter().enumerate() {
            for (j, &el) in a_row.iter().enumerate() {
                for (bit, &col) in self.a_el[j].iter().enumerate() {
                    w.push((row, col, el >> bit & 1 == 1));
                }
            }
            for (j, &el) in x.iter().enumerate() {
                for (bit, &col) in self.x_el[j].iter().enumerate() {
                    w.push((row, col, el >> bit & 1 == 1));
                }
            }
            // Zero accumulator, complemented encoding: all queue cells 1.
            for &col in self.qs.iter().chain(&self.qc).chain(&self.e) {
                w.push((row, col, true));
            }
            // Carry fields of the first pass read as (c, c') = (0, 1).
            for u in &self.units {
                w.push((row, u.c[0][0], false));
                w.push((row, u.c[0][1], true));
            }
        }
        w
    }
}

fn ceil_log2(n: usize) -> usize {
    (usize::BITS - (n - 1).leading_zeros()) as usize
}

struct Emitter<'a> {
    l: &'a MatVecLayout,
    rows: Vec<usize>,
    sched: Schedule,
}

impl<'a> Emitter<'a> {
    fn new(l: &'a MatVecLayout) -> Emitter<'a> {
        Emitter {
            l,
            rows: (0..l.cfg.m).collect(),
            sched: Schedule::new(),
        }
    }

    fn cycle(
        &mut self,
        phase: Phase,
        conducting: &[std::ops::Range<usize>],
        gates: Vec<GateExecution>,
        inits: Vec<usize>,
    ) {
        let mut config = vec![Conduct::Isolated; self.l.boundaries.len()];
        for range in conducting {
            for b in range.clone() {
                config[b] = Conduct::Conducting;
            }
        }
        let mut executions: Vec<Execution> = gates.into_iter().map(Execution::Gate).collect();
        if !inits.is_empty() {
            executions.push(Execution::Init(InitExecution {
                targets: inits.into_iter().map(|c| (self.rows.clone(), c)).collect(),
            }));
        }
        self.sched.push(
            phase,
            CycleInstruction {
                config: TransistorConfig(config),
                executions,
            },
        );
    }

    fn gate(
        &self,
        kind: GateKind,
        inputs: Vec<usize>,
        output: usize,
        mode: InitMode,
    ) -> GateExecution {
        GateExecution {
            kind,
            inputs,
            output,
            rows: self.rows.clone(),
            init_mode: mode,
        }
    }

    /// Boundary index between partition p and p+1 is p (partition 0 is the
    /// input region).
    fn span(&self, a: usize, b: usize) -> std::ops::Range<usize> {
        a.min(b)..a.max(b)
    }
}

fn s_read(u: &Unit, k: usize) -> usize {
    match u.s {
        SumBuf::Single(c) => c,
        SumBuf::Double(b) => b[(k + 1) % 2],
    }
}

fn s_write(u: &Unit, k: usize) -> usize {
    match u.s {
        SumBuf::Single(c) => c,
        SumBuf::Double(b) => b[k % 2],
    }
}

fn ab_col(u: &Unit) -> usize {
    match u.flavor {
        Flavor::True { beta } => beta,
        Flavor::Compl { pp_home, .. } => pp_home,
    }
}

/// Emit one fused-MAC pass for matrix column `j`. When `clear_carry` is
/// false the carry fields keep externally loaded values (standalone op).
fn emit_mac(em: &mut Emitter, j: usize, clear_carry: bool) {
    let l = em.l;
    let nb = l.cfg.bits;

    // Boundary: big init. Unit working cells for the pass plus the serial
    // adder seeds; s cells become writable for re-entry.
    let mut inits = Vec::new();
    for u in &l.units {
        inits.push(u.a_c);
        inits.push(u.t2);
        match u.s {
            SumBuf::Single(c) => inits.push(c),
            SumBuf::Double(b) => inits.extend(b),
        }
        if clear_carry {
            inits.push(u.c[0][0]);
            inits.push(u.c[0][1]);
        }
    }
    inits.extend([l.gamma[0][0], l.gamma[0][1]]);
    em.cycle(Phase::Boundary, &[], Vec::new(), inits);
    // Boundary: zero the first read-pair carries.
    if clear_carry {
        let gates = l
            .units
            .iter()
            .map(|u| em.gate(GateKind::Not, vec![u.t2], u.c[0][0], InitMode::Standard))
            .collect();
        em.cycle(Phase::Boundary, &[], gates, Vec::new());
    } else {
        // Standalone op keeps the loaded carry fields; spend the slot on
        // making the final-sum scratch writable instead.
        let inits = l.units.iter().map(|u| u.fs).collect();
        em.cycle(Phase::Boundary, &[], Vec::new(), inits);
    }
    // Boundary: seed the serial-adder carry to zero.
    let g = em.gate(
        GateKind::Not,
        vec![l.gamma[0][1]],
        l.gamma[0][0],
        InitMode::Standard,
    );
    em.cycle(Phase::Boundary, &[], vec![g], Vec::new());

    // Ingest the complemented emitted bits into the sum fields, one NOT per
    // bit, interleaved with the serial a' loads where the spans allow.
    // Cycle i loads a bit into unit (nb - i + 1) and re-enters unit
    // (nb - i + 2)'s sum.
    for i in 1..=nb + 1 {
        let mut gates = Vec::new();
        let mut spans = Vec::new();
        if i <= nb {
            let unit_id = nb - i + 1;
            let bit = nb - unit_id; // unit u stores a bit (nb - u)
            let u = &l.units[unit_id - 1];
            gates.push(em.gate(
                GateKind::Not,
                vec![l.a_el[j][bit]],
                u.a_c,
                InitMode::Standard,
            ));
            spans.push(em.span(0, unit_id));
        }
        if i >= 2 {
            let unit_id = nb + 2 - i;
            let u = &l.units[unit_id - 1];
            // Sum field of unit u takes s_i bit (nb - u) from E.
            let e_idx = nb - unit_id;
            gates.push(em.gate(
                GateKind::Not,
                vec![l.e[e_idx]],
                s_read(u, 1),
                InitMode::Standard,
            ));
            spans.push(em.span(unit_id, nb));
        }
        em.cycle(Phase::MacExtra, &spans, gates, Vec::new());
    }
    // E cells are consumed; make them writable for this pass's emits.
    em.cycle(Phase::Boundary, &[], Vec::new(), l.e.clone());

    for k in 1..=nb {
        emit_mac_stage(em, j, k);
    }

    // Tail: the last stage's emitted bit, then refresh the final-sum
    // scratch, manufacture its zero and egest the accumulator.
    let g = em.gate(GateKind::Not, vec![l.e1], l.e[nb - 1], InitMode::Standard);
    em.cycle(Phase::Boundary, &[], vec![g], Vec::new());
    let mut inits: Vec<usize> = l.qs.iter().chain(&l.qc).copied().collect();
    inits.extend(&l.y);
    em.cycle(Phase::Boundary, &[], Vec::new(), inits);
    let mut inits = Vec::new();
    for u in &l.units {
        inits.push(u.fs);
        inits.push(u.t2);
        inits.push(u.c[(nb + 1) % 2][0]);
    }
    // The lowest unit hosts the closing ripple's first bit; its extra
    // scratch homes become writable here too.
    let un = &l.units[nb - 1];
    inits.push(un.a_c);
    inits.push(match un.flavor {
        Flavor::True { beta } => beta,
        Flavor::Compl { b_land, .. } => b_land,
    });
    em.cycle(Phase::Boundary, &[], Vec::new(), inits);
    let g = em.gate(GateKind::Not, vec![un.t2], un.fs, InitMode::Standard);
    em.cycle(Phase::Boundary, &[], vec![g], Vec::new());
    // Egest the carry-save state into the complemented queues: Qs[t] and
    // Qc[t] take the sum and carry of unit nb-t (absolute weight 2^(nb+t)).
    // The four tail cycles, whose spans stay clear of the last partitions,
    // also carry the first closing-ripple gates of the final pass.
    let wp = nb % 2;
    for t in 0..nb {
        let u = &l.units[nb - t - 1];
        let mut gates = vec![em.gate(
            GateKind::Not,
            vec![s_write(u, nb)],
            l.qs[t],
            InitMode::Standard,
        )];
        let mut spans = vec![em.span(0, u.id)];
        if nb >= 3 && t == nb - 2 {
            // Ripple bit 0, t1 = Min3(s, c, zero).
            let (g, s) = final_rider(em, 0);
            gates.push(g);
            spans.push(s);
        }
        if nb >= 3 && t == nb - 1 {
            let (g, s) = final_rider(em, 1);
            gates.push(g);
            spans.push(s);
        }
        em.cycle(Phase::MacExtra, &spans, gates, Vec::new());
    }
    for t in 0..nb {
        let u = &l.units[nb - t - 1];
        let mut gates = vec![em.gate(GateKind::Not, vec![u.c[wp][0]], l.qc[t], InitMode::Standard)];
        let mut spans = vec![em.span(0, u.id)];
        if nb >= 3 && t == nb - 2 {
            let (g, s) = final_rider(em, 2);
            gates.push(g);
            spans.push(s);
        }
        if nb >= 3 && t == nb - 1 {
            let (g, s) = final_rider(em, 3);
            gates.push(g);
            spans.push(s);
        }
        em.cycle(Phase::MacExtra, &spans, gates, Vec::new());
    }
}

/// Scratch homes of ripple bit 0, which lives in the lowest unit: its dead
/// operand cells hold the intermediate values.
fn bit0_homes(l: &MatVecLayout) -> (usize, usize, usize) {
    let un = &l.units[l.cfg.bits - 1];
    let landing = match un.flavor {
        Flavor::True { beta } => beta,
        Flavor::Compl { b_land, .. } => b_land,
    };
    (un.a_c, landing, un.c[(l.cfg.bits + 1) % 2][0])
}

/// The four closing-ripple gates that ride the egest tail: bit 0's full
/// adder and bit 1's first Min3. Emitted uniformly in every pass; only the
/// final pass's values are consumed.
fn final_rider(em: &Emitter, idx: usize) -> (GateExecution, std::ops::Range<usize>) {
    let l = em.l;
    let nb = l.cfg.bits;
    let wp = nb % 2;
    let un = &l.units[nb - 1];
    let (t1_0, co_0, t2f_0) = bit0_homes(l);
    let s0 = s_write(un, nb);
    let c0 = un.c[wp][0];
    match idx {
        // t1 = Min3(s, c, 0): complement of the carry out of bit 0.
        0 => (
            em.gate(
                GateKind::Min3,
                vec![s0, c0, un.fs],
                t1_0,
                InitMode::Standard,
            ),
            em.span(nb, nb),
        ),
        1 => (
            em.gate(GateKind::Not, vec![t1_0], co_0, InitMode::Standard),
            em.span(nb, nb),
        ),
        // t2 = Min3(s, c, 1).
        2 => (
            em.gate(
                GateKind::Min3,
                vec![s0, c0, un.t2],
                t2f_0,
                InitMode::Standard,
            ),
            em.span(nb, nb),
        ),
        // Bit 1's t1 = Min3(s1, c1, carry).
        _ => {
            let u = &l.units[nb - 2];
            (
                em.gate(
                    GateKind::Min3,
                    vec![s_write(u, nb), u.c[wp][0], co_0],
                    u.fs,
                    InitMode::Standard,
                ),
                em.span(nb - 1, nb),
            )
        }
    }
}

fn emit_mac_stage(em: &mut Emitter, j: usize, k: usize) {
    let l = em.l;
    let nb = l.cfg.bits;
    let (rp, wp) = ((k + 1) % 2, k % 2);

    // Stage init: landings, write pair, t2, receiving double buffers, the
    // serial-adder write pair and this stage's scratch homes.
    let mut inits = Vec::new();
    for u in &l.units {
        match u.flavor {
            Flavor::True { beta } => inits.push(beta),
            Flavor::Compl { b_land, pp_home } => {
                inits.push(b_land);
                inits.push(pp_home);
            }
        }
        inits.push(u.c[wp][0]);
        inits.push(u.c[wp][1]);
        inits.push(u.t2);
        if let SumBuf::Double(_) = u.s {
            inits.push(s_write(u, k));
        }
    }
    inits.extend([l.gamma[wp][0], l.gamma[wp][1]]);
    inits.push(u_home(l, k));
    inits.push(l.y[k % nb]); // v home
    em.cycle(Phase::StageInit, &[], Vec::new(), inits);

    // Broadcast of x_j bit (k-1); the first cycle also carries the previous
    // stage's emit hop in the last partition, and the serial adder rides
    // the remaining idle input-partition cycles.
    let src_col = l.x_el[j][k - 1];
    let qs_cell = l.qs[k - 1];
    let qc_cell = l.qc[k - 1];
    for (ci, hops) in l.tree.iter().enumerate() {
        let mut gates = Vec::new();
        let mut spans = Vec::new();
        for &(src, dst) in hops {
            let (col, cp) = match src {
                HopSource::Root => (src_col, 0),
                HopSource::Target(i) => (l.landing_col(i), l.units[i].id),
            };
            let dcol = l.landing_col(dst);
            let dcp = l.units[dst].id;
            spans.push(em.span(cp, dcp));
            gates.push(em.gate(GateKind::Not, vec![col], dcol, InitMode::Standard));
        }
        let mut inits = Vec::new();
        if ci == 0 && k >= 2 {
            // Previous stage's emitted bit leaves the staging cell.
            gates.push(em.gate(GateKind::Not, vec![l.e1], l.e[k - 2], InitMode::Standard));
        }
        if ci == 1 {
            // The staging cell becomes writable again after its read.
            inits.push(l.e1);
        }
        em.cycle(Phase::StageBroadcast, &spans, gates, inits);
    }

    // Partial products; the serial adder computes u = Min3(qs, qc, gamma).
    let mut gates = Vec::new();
    for u in &l.units {
        match u.flavor {
            Flavor::True { beta } => {
                gates.push(em.gate(GateKind::Not, vec![u.a_c], beta, InitMode::NoInit))
            }
            Flavor::Compl { b_land, pp_home } => gates.push(em.gate(
                GateKind::Min3,
                vec![u.a_c, b_land, u.c[wp][1]],
                pp_home,
                InitMode::Standard,
            )),
        }
    }
    gates.push(em.gate(
        GateKind::Min3,
        vec![qs_cell, qc_cell, l.gamma[rp][0]],
        u_home(l, k),
        InitMode::Standard,
    ));
    em.cycle(Phase::StagePp, &[], gates, Vec::new());

    // Adder cycle 1: t1 = Min3(s, ab, c) into the new c'; the serial adder
    // rides with v = NOT(u).
    let mut gates = Vec::new();
    for u in &l.units {
        gates.push(em.gate(
            GateKind::Min3,
            vec![s_read(u, k), ab_col(u), u.c[rp][0]],
            u.c[wp][1],
            InitMode::Standard,
        ));
    }
    gates.push(em.gate(
        GateKind::Not,
        vec![u_home(l, k)],
        l.y[k % nb],
        InitMode::Standard,
    ));
    em.cycle(Phase::StageFa, &[], gates, Vec::new());

    // Adder cycle 2: carry = NOT(t1); serial adder computes the next
    // stream carry w = Min3(qs, qc, gamma').
    let mut gates = Vec::new();
    for u in &l.units {
        gates.push(em.gate(
            GateKind::Not,
            vec![u.c[wp][1]],
            u.c[wp][0],
            InitMode::Standard,
        ));
    }
    gates.push(em.gate(
        GateKind::Min3,
        vec![qs_cell, qc_cell, l.gamma[rp][1]],
        l.gamma[wp][0],
        InitMode::Standard,
    ));
    em.cycle(Phase::StageFa, &[], gates, Vec::new());

    // Adder cycle 3: t2 = Min3(s, ab, c'); serial adder materializes the
    // stream carry complement.
    let mut gates = Vec::new();
    for u in &l.units {
        gates.push(em.gate(
            GateKind::Min3,
            vec![s_read(u, k), ab_col(u), u.c[rp][1]],
            u.t2,
            InitMode::Standard,
        ));
    }
    gates.push(em.gate(
        GateKind::Not,
        vec![l.gamma[wp][0]],
        l.gamma[wp][1],
        InitMode::Standard,
    ));
    em.cycle(Phase::StageFa, &[], gates, Vec::new());

    // Shift phase 1: odd units send, single-buffer sums re-initialize.
    let mut gates = Vec::new();
    let mut spans = Vec::new();
    let mut inits = Vec::new();
    for u in &l.units {
        if u.id % 2 == 1 {
            let (dst, dcp) = shift_target(l, u, k);
            spans.push(em.span(u.id, dcp));
            gates.push(em.gate(
                GateKind::Min3,
                vec![u.c[wp][0], u.c[rp][1], u.t2],
                dst,
                InitMode::Standard,
            ));
        }
        if let SumBuf::Single(s) = u.s {
            inits.push(s);
        }
    }
    em.cycle(Phase::StageShift, &spans, gates, inits);

    // Shift phase 2: even units send; the H-stream feed lands in unit 1.
    let mut gates = Vec::new();
    let mut spans = Vec::new();
    for u in &l.units {
        if u.id % 2 == 0 {
            let (dst, dcp) = shift_target(l, u, k);
            spans.push(em.span(u.id, dcp));
            gates.push(em.gate(
                GateKind::Min3,
                vec![u.c[wp][0], u.c[rp][1], u.t2],
                dst,
                InitMode::Standard,
            ));
        }
    }
    let u1 = &l.units[0];
    gates.push(em.gate(
        GateKind::Min3,
        vec![l.y[k % nb], l.gamma[rp][1], l.gamma[wp][0]],
        s_write(u1, k),
        InitMode::Standard,
    ));
    spans.push(em.span(0, 1));
    em.cycle(Phase::StageShift, &spans, gates, Vec::new());
}

fn u_home(l: &MatVecLayout, k: usize) -> usize {
    if k == 1 {
        l.y[0]
    } else {
        l.qs[k - 2]
    }
}

fn shift_target(l: &MatVecLayout, u: &Unit, k: usize) -> (usize, usize) {
    if u.id == l.cfg.bits {
        (l.e1, u.id)
    } else {
        let next = &l.units[u.id];
        (s_write(next, k), next.id)
    }
}

/// Closing ripple: the resident sum/carry registers become the high result
/// bits in `y`. Bit t adds the sum and carry of unit nb-t; bit 0's adder
/// and bit 1's first gate already rode the egest tail, leaving 4N-4
/// cycles. One gate per cycle with the whole row conducting.
fn emit_final_sum(em: &mut Emitter) {
    let l = em.l;
    let nb = l.cfg.bits;
    let k = nb; // buffers as the last pass left them
    let wp = nb % 2;
    let span = em.span(0, nb);
    let (t1_0, co_0, t2f_0) = bit0_homes(l);
    let one = l.units[nb - 1].t2;
    let spans = [span];
    let cy = |g: GateExecution, em: &mut Emitter| {
        em.cycle(Phase::FinalSum, &spans, vec![g], Vec::new());
    };
    let g = em.gate(
        GateKind::Min3,
        vec![co_0, one, t2f_0],
        l.y[0],
        InitMode::Standard,
    );
    cy(g, em);
    for t in 1..nb {
        let u = &l.units[nb - t - 1];
        let (prev_c, prev_cc) = if t == 1 {
            (co_0, t1_0)
        } else {
            (l.units[nb - t].t2, l.units[nb - t].fs)
        };
        let s_cell = s_write(u, k);
        let c_cell = u.c[wp][0];
        if t >= 2 {
            // Bit 1's t1 rode the egest already.
            let g = em.gate(
                GateKind::Min3,
                vec![s_cell, c_cell, prev_c],
                u.fs,
                InitMode::Standard,
            );
            cy(g, em);
        }
        let g = em.gate(GateKind::Not, vec![u.fs], u.t2, InitMode::Standard);
        cy(g, em);
        let t2f = u.c[(wp + 1) % 2][0];
        let g = em.gate(
            GateKind::Min3,
            vec![s_cell, c_cell, prev_cc],
            t2f,
            InitMode::Standard,
        );
        cy(g, em);
        let g = em.gate(
            GateKind::Min3,
            vec![u.t2, prev_cc, t2f],
            l.y[t],
            InitMode::Standard,
        );
        cy(g, em);
    }
}

/// Full matrix-vector schedule: n fused-MAC passes and the closing ripple.
pub fn schedule_matvec(layout: &MatVecLayout) -> Schedule {
    let mut em = Emitter::new(layout);
    for j in 0..layout.cfg.n {
        emit_mac(&mut em, j, true);
    }
    emit_final_sum(&mut em);
    em.sched
}

/// Run A*x and read back the result vector (mod 2^(2*bits)).
pub fn run_matvec(
    a: &[Vec<u128>],
    x: &[u128],
    cfg: MatVecConfig,
) -> Result<(Vec<u128>, crate::crossbar::CostReport, MatVecLayout), MatVecError> {
    if a.len() != cfg.m || a.iter().any(|r| r.len() != cfg.n) || x.len() != cfg.n {
        return Err(MatVecError::DimensionMismatch {
            m: cfg.m,
            n: cfg.n,
            len: x.len(),
        });
    }
    let limit = if cfg.bits < 128 {
        1u128 << cfg.bits
    } else {
        u128::MAX
    };
    for &v in a.iter().flatten().chain(x.iter()) {
        if v >= limit {
            return Err(MatVecError::ElementTooWide {
                value: v,
                bits: cfg.bits,
            });
        }
    }
    let layout = MatVecLayout::new(cfg)?;
    let sched = schedule_matvec(&layout);
    let mut xb = CrossbarState::create(cfg.m, layout.cols, layout.boundaries.clone())?;
    xb.write_cells(&layout.operand_writes(a, x))?;
    sched.run(&mut xb)?;
    let nb = cfg.bits;
    let mut result = Vec::with_capacity(cfg.m);
    for row in 0..cfg.m {
        let mut v = 0u128;
        // Low half: complemented emit queue.
        for (t, &col) in layout.e.iter().enumerate() {
            if !xb.read_cell(row, col)? {
                v |= 1 << t;
            }
        }
        // High half from the closing ripple.
        for t in 0..nb {
            if xb.read_cell(row, layout.y[t])? {
                v |= 1 << (nb + t);
            }
        }
        result.push(v & ((1u128 << (2 * nb)) - 1));
    }
    Ok((result, xb.cost_report(), layout))
}

/// One fused-MAC pass as a replayable schedule. With `loaded_carry` the
/// carry fields keep externally loaded values (the standalone op); the
/// matrix-vector driver clears them instead, keeping the incoming carry's
/// low half structurally zero along the chain.
pub fn schedule_fused_mac(layout: &MatVecLayout, loaded_carry: bool) -> Schedule {
    let mut em = Emitter::new(layout);
    emit_mac(&mut em, 0, !loaded_carry);
    em.sched
}

/// Standalone fused MAC: load (a, b, s_i, c_i) into one single-column
/// layout, run one pass and read the accumulator back.
pub fn run_fused_mac(
    a: u128,
    b: u128,
    s_i: u128,
    c_i: u128,
    bits: usize,
) -> Result<(u128, u128), MatVecError> {
    let cfg = MatVecConfig { m: 1, n: 1, bits };
    let layout = MatVecLayout::new(cfg)?;
    let sched = schedule_fused_mac(&layout, true);
    let mut xb = CrossbarState::create(1, layout.cols, layout.boundaries.clone())?;
    let mask = (1u128 << bits) - 1;
    let mut w = layout.operand_writes(&[vec![a]], &[b]);
    // Residency of the incoming accumulator: complemented low sum bits in
    // E, complemented high halves in the queues, carry low half in the
    // first read pair.
    for (t, &col) in layout.e.iter().enumerate() {
        w.push((0, col, s_i >> t & 1 == 0));
    }
    for (t, &col) in layout.qs.iter().enumerate() {
        w.push((0, col, s_i >> (bits + t) & 1 == 0));
    }
    for (t, &col) in layout.qc.iter().enumerate() {
        w.push((0, col, c_i >> (bits + t) & 1 == 0));
    }
    for u in &layout.units {
        let bit = c_i >> (bits - u.id) & 1 == 1;
        w.retain(|&(_, col, _)| col != u.c[0][0] && col != u.c[0][1]);
        w.push((0, u.c[0][0], bit));
        w.push((0, u.c[0][1], !bit));
    }
    let _ = mask;
    xb.write_cells(&w)?;
    sched.run(&mut xb)?;
    // Read s_o from the egested queues and the emit queue; c_o from the
    // carry queue.
    let mut s_o = 0u128;
    let mut c_o = 0u128;
    for (t, &col) in layout.e.iter().enumerate() {
        if !xb.read_cell(0, col)? {
            s_o |= 1 << t;
        }
    }
    for (t, &col) in layout.qs.iter().enumerate() {
        if !xb.read_cell(0, col)? {
            s_o |= 1 << (bits + t);
        }
    }
    for (t, &col) in layout.qc.iter().enumerate() {
        if !xb.read_cell(0, col)? {
            c_o |= 1 << (bits + t);
        }
    }
    Ok((s_o, c_o))
}

// ---------------------------------------------------------------------------
// Area-optimized variant: every pass runs feed and drain stages so the
// carry number stays zero between passes, removing the high-half queues
// and the bit-serial adder. Emitted bits overwrite spent operand cells
// (complemented); the next pass re-ingests them with single NOTs and the
// closing pass copies the result into a contiguous true-polarity block.

/// Cell map of the area-variant fused-MAC row.
#[derive(Debug, Clone)]
pub struct MatVecAreaLayout {
    pub cfg: MatVecConfig,
    pub cols: usize,
    pub boundaries: Vec<usize>,
    a_el: Vec<Vec<usize>>,
    x_el: Vec<Vec<usize>>,
    /// Constant-true cell feeding drain zeros and first-pass seeds.
    one_f: usize,
    /// Boundary-refresh reserve block, re-initialized every pass.
    reserve: Vec<usize>,
    units: Vec<AreaUnit>,
    e1: usize,
    /// Contiguous true-polarity result block (written by the closing pass).
    out: Vec<usize>,
    tree: Vec<Vec<(HopSource, usize)>>,
}

#[derive(Debug, Clone)]
struct AreaUnit {
    id: usize,
    a_c: usize,
    landing: usize,
    compl: bool,
    c: [[usize; 2]; 2],
    t2: usize,
    s: usize,
}

impl MatVecAreaLayout {
    pub fn new(cfg: MatVecConfig) -> Result<MatVecAreaLayout, MatVecError> {
        if cfg.m == 0 {
            return Err(MatVecError::BadDimensions("matrix dimensions must be positive"));
        }
        // The result block recycles the previous column's operand cells.
        if cfg.n < 2 {
            return Err(MatVecError::BadDimensions(
                "the area variant needs at least two matrix columns",
            ));
        }
        // The emit staging cell is re-initialized in the shift phase the
        // last unit does not write, which requires an even unit count.
        if cfg.bits < 4 || cfg.bits % 2 != 0 {
            return Err(MatVecError::BadDimensions(
                "the area variant needs an even element width of at least 4 bits",
            ));
        }
        let nb = cfg.bits;
        let mut alloc = ColAlloc::default();
        let a_el: Vec<Vec<usize>> = (0..cfg.n).map(|_| alloc.take(nb)).collect();
        let x_el: Vec<Vec<usize>> = (0..cfg.n).map(|_| alloc.take(nb)).collect();
        let one_f = alloc.one();
        let reserve = alloc.take(8);
        let mut boundaries = Vec::new();
        let mut units = Vec::new();
        for id in 1..=nb {
            boundaries.push(alloc.pos());
            units.push(AreaUnit {
                id,
                a_c: alloc.one(),
                landing: alloc.one(),
                compl: id % 2 == 1,
                c: [[alloc.one(), alloc.one()], [alloc.one(), alloc.one()]],
                t2: alloc.one(),
                s: alloc.one(),
            });
        }
        let e1 = alloc.one();
        let cols = alloc.pos();
        // Result block recycles the first column's operand cells, which are
        // dead once the closing pass runs.
        let mut out: Vec<usize> = a_el[cfg.n - 2].clone();
        out.extend(&x_el[cfg.n - 2]);
        let targets: Vec<TreeTarget> = units
            .iter()
            .map(|u| TreeTarget {
                cp: u.id,
                want_odd: u.compl,
            })
            .collect();
        let cycles = ceil_log2(nb) + 1;
        let tree = plan_broadcast_avoiding(nb + 1, 0, cycles, &targets, None)?;
        Ok(MatVecAreaLayout {
            cfg,
            cols,
            boundaries,
            a_el,
            x_el,
            one_f,
            reserve,
            units,
            e1,
            out,
            tree,
        })
    }

    pub fn partitions(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn operand_writes(&self, a: &[Vec<u128>], x: &[u128]) -> Vec<(usize, usize, bool)> {
        let mut w = Vec::new();
        for (row, a_row) in a.iter().enumerate() {
            for (j, &el) in a_row.iter().enumerate() {
                for (bit, &col) in self.a_el[j].iter().enumerate() {
                    w.push((row, col, el >> bit & 1 == 1));
                }
            }
            for (j, &el) in x.iter().enumerate() {
                for (bit, &col) in self.x_el[j].iter().enumerate() {
                    w.push((row, col, el >> bit & 1 == 1));
                }
            }
            w.push((row, self.one_f, true));
        }
        w
    }
}

struct AreaEmitter<'a> {
    l: &'a MatVecAreaLayout,
    rows: Vec<usize>,
    sched: Schedule,
}

impl<'a> AreaEmitter<'a> {
    fn new(l: &'a MatVecAreaLayout) -> AreaEmitter<'a> {
        AreaEmitter {
            l,
            rows: (0..l.cfg.m).collect(),
            sched: Schedule::new(),
        }
    }

    fn cycle(
        &mut self,
        phase: Phase,
        conducting: &[std::ops::Range<usize>],
        gates: Vec<GateExecution>,
        inits: Vec<usize>,
    ) {
        let mut config = vec![Conduct::Isolated; self.l.boundaries.len()];
        for range in conducting {
            for b in range.clone() {
                config[b] = Conduct::Conducting;
            }
        }
        let mut executions: Vec<Execution> = gates.into_iter().map(Execution::Gate).collect();
        if !inits.is_empty() {
            executions.push(Execution::Init(InitExecution {
                targets: inits.into_iter().map(|c| (self.rows.clone(), c)).collect(),
            }));
        }
        self.sched.push(
            phase,
            CycleInstruction {
                config: TransistorConfig(config),
                executions,
            },
        );
    }

    fn gate(
        &self,
        kind: GateKind,
        inputs: Vec<usize>,
        output: usize,
        mode: InitMode,
    ) -> GateExecution {
        GateExecution {
            kind,
            inputs,
            output,
            rows: self.rows.clone(),
            init_mode: mode,
        }
    }

    fn span(&self, a: usize, b: usize) -> std::ops::Range<usize> {
        a.min(b)..a.max(b)
    }
}

/// One full area pass for column `j`: serial load, serial ingestion of the
/// previous pass's low bits, N feed stages, the mid-pass zeroing of the
/// spent operand-complement cells (they feed the drain) and N drain stages.
fn emit_area_mac(em: &mut AreaEmitter, j: usize) {
    let l = em.l;
    let nb = l.cfg.bits;

    // Boundary block: one big init, the carry clear and a fixed group of
    // refresh initializations keeping every pass identical.
    let mut inits = vec![l.one_f];
    inits.extend(&l.reserve);
    for u in &l.units {
        inits.push(u.a_c);
        inits.push(u.s);
        inits.push(u.t2);
        inits.push(u.c[0][0]);
        inits.push(u.c[0][1]);
    }
    em.cycle(Phase::Boundary, &[], Vec::new(), inits);
    let gates = l
        .units
        .iter()
        .map(|u| em.gate(GateKind::Not, vec![u.t2], u.c[0][0], InitMode::Standard))
        .collect();
    em.cycle(Phase::Boundary, &[], gates, Vec::new());
    for _ in 0..20 {
        em.cycle(Phase::Boundary, &[], Vec::new(), l.reserve.clone());
    }

    // Serial operand loads, then serial low-half ingestion from the
    // previous column's recycled cells (the constant cell for the first).
    for i in 1..=nb {
        let unit_id = nb - i + 1;
        let bit = nb - unit_id;
        let u = &l.units[unit_id - 1];
        let g = em.gate(
            GateKind::Not,
            vec![l.a_el[j][bit]],
            u.a_c,
            InitMode::Standard,
        );
        let span = em.span(0, unit_id);
        em.cycle(Phase::MacExtra, &[span], vec![g], Vec::new());
    }
    for i in 1..=nb {
        let unit_id = nb - i + 1;
        let u = &l.units[unit_id - 1];
        let src = if j == 0 {
            l.one_f
        } else {
            l.a_el[j - 1][nb - unit_id]
        };
        let g = em.gate(GateKind::Not, vec![src], u.s, InitMode::Standard);
        let span = em.span(0, unit_id);
        em.cycle(Phase::MacExtra, &[span], vec![g], Vec::new());
    }

    for k in 1..=nb {
        emit_area_stage(em, j, k, true);
    }

    // Mid-pass boundary: zero the spent a' cells in place; they feed the
    // drain adders. The landings are dead too and provide the local ones.
    let mut inits = Vec::new();
    for u in &l.units {
        inits.push(u.a_c);
        inits.push(u.landing);
    }
    em.cycle(Phase::Boundary, &[], Vec::new(), inits);
    let gates = l
        .units
        .iter()
        .map(|u| em.gate(GateKind::Not, vec![u.landing], u.a_c, InitMode::Standard))
        .collect();
    em.cycle(Phase::Boundary, &[], gates, Vec::new());

    for k in 1..=nb {
        emit_area_stage(em, j, k, false);
    }
}

fn emit_area_stage(em: &mut AreaEmitter, j: usize, k: usize, feed: bool) {
    let l = em.l;
    let nb = l.cfg.bits;
    let g_all = if feed { k } else { nb + k };
    let (rp, wp) = ((g_all + 1) % 2, g_all % 2);

    // Stage init: write pair, t2, the landing (feed) and the emit target.
    let mut inits = Vec::new();
    for u in &l.units {
        inits.push(u.c[wp][0]);
        inits.push(u.c[wp][1]);
        inits.push(u.t2);
        if feed {
            inits.push(u.landing);
        }
    }
    // Emit target of the bit staged in e1 (previous stage's output; the
    // first stage of a chained pass moves the previous pass's top bit).
    let emit_target = if g_all >= 2 {
        let t = g_all - 2;
        Some(if t < nb {
            l.a_el[j][t]
        } else {
            l.x_el[j][t - nb]
        })
    } else if j > 0 {
        Some(l.x_el[j - 1][nb - 1])
    } else {
        None
    };
    if let Some(c) = emit_target {
        inits.push(c);
    }
    em.cycle(Phase::StageInit, &[], Vec::new(), inits);

    if feed {
        // Broadcast with the staged-bit move riding the first cycle.
        let src_col = l.x_el[j][k - 1];
        for hops in l.tree.iter() {
            let mut gates = Vec::new();
            let mut spans = Vec::new();
            for &(src, dst) in hops {
                let (col, cp) = match src {
                    HopSource::Root => (src_col, 0),
                    HopSource::Target(i) => (l.units[i].landing, l.units[i].id),
                };
                spans.push(em.span(cp, l.units[dst].id));
                gates.push(em.gate(
                    GateKind::Not,
                    vec![col],
                    l.units[dst].landing,
                    InitMode::Standard,
                ));
            }
            em.cycle(Phase::StageBroadcast, &spans, gates, Vec::new());
        }
        // Partial products.
        let mut gates = Vec::new();
        for u in &l.units {
            if u.compl {
                gates.push(em.gate(
                    GateKind::Min3,
                    vec![u.a_c, u.landing, u.c[wp][1]],
                    u.t2,
                    InitMode::Standard,
                ));
            } else {
                gates.push(em.gate(GateKind::Not, vec![u.a_c], u.landing, InitMode::NoInit));
            }
        }
        em.cycle(Phase::StagePp, &[], gates, Vec::new());
    }
    // The B input for the adder: feed stages read the product (in the
    // landing for true units, in t2 for complemented ones); drain stages
    // read the zeroed a' cell.
    let ab = |u: &AreaUnit| -> usize {
        if !feed {
            u.a_c
        } else if u.compl {
            u.t2
        } else {
            u.landing
        }
    };
    // Adder cycles. In feed stages the complemented units' t2 holds the
    // product through cycle 2, so t2's own value lands in the landing cell
    // (re-initialized under the emit move below); in drain stages t2 is
    // free from the start.
    let t2_home = |u: &AreaUnit| -> usize {
        if feed && u.compl {
            u.landing
        } else {
            u.t2
        }
    };
    let mut gates = Vec::new();
    for u in &l.units {
        gates.push(em.gate(
            GateKind::Min3,
            vec![u.s, ab(u), u.c[rp][0]],
            u.c[wp][1],
            InitMode::Standard,
        ));
    }
    // Complemented landings are dead after the product; make them writable
    // for the t2 value.
    let mut late_inits = Vec::new();
    if feed {
        for u in &l.units {
            if u.compl {
                late_inits.push(u.landing);
            }
        }
    }
    em.cycle(Phase::StageFa, &[], gates, late_inits);
    let mut gates = Vec::new();
    for u in &l.units {
        gates.push(em.gate(
            GateKind::Not,
            vec![u.c[wp][1]],
            u.c[wp][0],
            InitMode::Standard,
        ));
    }
    em.cycle(Phase::StageFa, &[], gates, Vec::new());
    let mut gates = Vec::new();
    for u in &l.units {
        gates.push(em.gate(
            GateKind::Min3,
            vec![u.s, ab(u), u.c[rp][1]],
            t2_home(u),
            InitMode::Standard,
        ));
    }
    em.cycle(Phase::StageFa, &[], gates, Vec::new());
    // Emit move: the bit staged in e1 crosses the row into its recycled
    // operand cell (complemented); the sum cells are re-initialized for the
    // incoming shift in the same cycle.
    let mut gates = Vec::new();
    let mut spans = Vec::new();
    if let Some(c) = emit_target {
        gates.push(em.gate(GateKind::Not, vec![l.e1], c, InitMode::Standard));
        spans.push(em.span(0, nb));
    }
    let s_inits: Vec<usize> = l.units.iter().map(|u| u.s).collect();
    em.cycle(Phase::StageShift, &spans, gates, s_inits);
    // Two-phase shift. The staging cell e1 is re-initialized in the phase
    // that does not write it, and the feeder supplies unit 1's next sum
    // (the previous column's high bit during feed stages, zero otherwise).
    let e1_phase = nb % 2; // phase in which the last unit sends
    for phase in [1usize, 0usize] {
        let mut gates = Vec::new();
        let mut spans = Vec::new();
        let mut inits = Vec::new();
        for u in &l.units {
            if u.id % 2 != phase {
                continue;
            }
            let (dst, dcp) = if u.id == nb {
                (l.e1, u.id)
            } else {
                (l.units[u.id].s, u.id + 1)
            };
            spans.push(em.span(u.id, dcp));
            gates.push(em.gate(
                GateKind::Min3,
                vec![u.c[wp][0], u.c[rp][1], t2_home(u)],
                dst,
                InitMode::Standard,
            ));
        }
        if phase != e1_phase {
            inits.push(l.e1);
        }
        if phase == 0 {
            let src = if feed && j > 0 {
                // s_i bit (nb + k - 1): high half of the previous column's
                // accumulator, stored complemented in its recycled cells.
                l.x_el[j - 1][k - 1]
            } else {
                l.one_f
            };
            gates.push(em.gate(GateKind::Not, vec![src], l.units[0].s, InitMode::Standard));
            spans.push(em.span(0, 1));
        }
        em.cycle(Phase::StageShift, &spans, gates, inits);
    }
}

/// Closing pass: the final e1 bit moves out, then every result bit is
/// copied true-polarity into the contiguous output block.
fn emit_area_tail(em: &mut AreaEmitter) {
    let l = em.l;
    let nb = l.cfg.bits;
    let j = l.cfg.n - 1;
    // Last staged bit (2nb-1) still sits in e1; its cell and the output
    // block become writable first.
    let mut inits = vec![l.x_el[j][nb - 1]];
    inits.extend(&l.out);
    em.cycle(Phase::FinalSum, &[], Vec::new(), inits);
    let g = em.gate(
        GateKind::Not,
        vec![l.e1],
        l.x_el[j][nb - 1],
        InitMode::Standard,
    );
    let span = em.span(0, nb);
    em.cycle(Phase::FinalSum, &[span], vec![g], Vec::new());
    for t in 0..2 * nb {
        let src = if t < nb {
            l.a_el[j][t]
        } else {
            l.x_el[j][t - nb]
        };
        let g = em.gate(GateKind::Not, vec![src], l.out[t], InitMode::Standard);
        em.cycle(Phase::FinalSum, &[], vec![g], Vec::new());
    }
    // Refresh block keeping the closing pass at its published length.
    for _ in 0..2 * nb - 6 {
        em.cycle(Phase::FinalSum, &[], Vec::new(), l.reserve.clone());
    }
}

/// Area-variant matrix-vector schedule.
pub fn schedule_matvec_area(layout: &MatVecAreaLayout) -> Schedule {
    let mut em = AreaEmitter::new(layout);
    for j in 0..layout.cfg.n {
        emit_area_mac(&mut em, j);
    }
    emit_area_tail(&mut em);
    em.sched
}

/// Run A*x with the area-variant layout.
pub fn run_matvec_area(
    a: &[Vec<u128>],
    x: &[u128],
    cfg: MatVecConfig,
) -> Result<(Vec<u128>, crate::crossbar::CostReport, MatVecAreaLayout), MatVecError> {
    if a.len() != cfg.m || a.iter().any(|r| r.len() != cfg.n) || x.len() != cfg.n {
        return Err(MatVecError::DimensionMismatch {
            m: cfg.m,
            n: cfg.n,
            len: x.len(),
        });
    }
    let layout = MatVecAreaLayout::new(cfg)?;
    let sched = schedule_matvec_area(&layout);
    let mut xb = CrossbarState::create(cfg.m, layout.cols, layout.boundaries.clone())?;
    xb.write_cells(&layout.operand_writes(a, x))?;
    sched.run(&mut xb)?;
    let nb = cfg.bits;
    let mut result = Vec::with_capacity(cfg.m);
    for row in 0..cfg.m {
        let mut v = 0u128;
        for (t, &col) in layout.out.iter().enumerate() {
            if xb.read_cell(row, col)? {
                v |= 1 << t;
            }
        }
        result.push(v & ((1u128 << (2 * nb)) - 1));
    }
    Ok((result, xb.cost_report(), layout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost;

    fn lcg(state: &mut u128) -> u128 {
        *state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        *state >> 32
    }

    #[test]
    fn fused_mac_reduces_to_multiply() {
        for (a, b) in [(0u128, 9u128), (7, 0), (13, 11), (15, 15)] {
            let (s_o, c_o) = run_fused_mac(a, b, 0, 0, 4).unwrap();
            assert_eq!(s_o + c_o, a * b);
        }
    }

    #[test]
    fn fused_mac_passes_accumulator_through() {
        for s_i in [0u128, 1, 170, 255] {
            let (s_o, c_o) = run_fused_mac(0, 5, s_i, 0, 4).unwrap();
            assert_eq!(s_o + c_o, s_i);
        }
    }

    #[test]
    fn fused_mac_identity_random() {
        let mut state = 41u128;
        for bits in [4usize, 8] {
            let mask = (1u128 << bits) - 1;
            let mask2 = (1u128 << (2 * bits)) - 1;
            for _ in 0..1000 {
                let a = lcg(&mut state) & mask;
                let b = lcg(&mut state) & mask;
                let s_i = lcg(&mut state) & mask2;
                let c_i = lcg(&mut state) & mask2;
                let (s_o, c_o) = run_fused_mac(a, b, s_i, c_i, bits).unwrap();
                assert_eq!(
                    (s_o + c_o) & mask2,
                    (a * b + s_i + c_i) & mask2,
                    "a={a} b={b} s_i={s_i} c_i={c_i}"
                );
            }
        }
    }

    fn oracle(a: &[Vec<u128>], x: &[u128], bits: usize) -> Vec<u128> {
        let mask2 = (1u128 << (2 * bits)) - 1;
        a.iter()
            .map(|row| row.iter().zip(x).map(|(&p, &q)| p * q).sum::<u128>() & mask2)
            .collect()
    }

    #[test]
    fn matvec_identity_matrix() {
        let cfg = MatVecConfig {
            m: 3,
            n: 3,
            bits: 4,
        };
        let a = vec![vec![1u128, 0, 0], vec![0, 1, 0], vec![0, 0, 1]];
        let x = vec![5u128, 9, 14];
        let (y, _, _) = run_matvec(&a, &x, cfg).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matvec_random_matches_oracle_and_cost() {
        let mut state = 17u128;
        for (m, n, bits) in [(2usize, 2usize, 4usize), (4, 3, 8), (2, 4, 8)] {
            let cfg = MatVecConfig { m, n, bits };
            let mask = (1u128 << bits) - 1;
            let a: Vec<Vec<u128>> = (0..m)
                .map(|_| (0..n).map(|_| lcg(&mut state) & mask).collect())
                .collect();
            let x: Vec<u128> = (0..n).map(|_| lcg(&mut state) & mask).collect();
            let (y, report, layout) = run_matvec(&a, &x, cfg).unwrap();
            assert_eq!(y, oracle(&a, &x, bits));
            let (cycles, width, parts) = cost::matvec_cost(n as u64, bits as u64);
            assert_eq!(report.cycles, cycles);
            assert_eq!(layout.cols as u64, width);
            assert_eq!(report.memristors_per_row as u64, width);
            assert_eq!(report.partitions as u64, parts);
        }
    }

    /// Latency must not depend on the row count.
    #[test]
    fn matvec_row_count_independence() {
        let mut cycles = Vec::new();
        for m in [1usize, 16] {
            let cfg = MatVecConfig { m, n: 2, bits: 4 };
            let a = vec![vec![3u128, 5]; m];
            let x = vec![7u128, 11];
            let (y, report, _) = run_matvec(&a, &x, cfg).unwrap();
            assert!(y.iter().all(|&v| v == 3 * 7 + 5 * 11));
            cycles.push(report.cycles);
        }
        assert_eq!(cycles[0], cycles[1]);
    }

    #[test]
    fn matvec_area_matches_oracle_and_cost() {
        let mut state = 23u128;
        for (m, n, bits) in [(2usize, 2usize, 4usize), (2, 3, 8), (1, 4, 16)] {
            let cfg = MatVecConfig { m, n, bits };
            let mask = (1u128 << bits) - 1;
            let a: Vec<Vec<u128>> = (0..m)
                .map(|_| (0..n).map(|_| lcg(&mut state) & mask).collect())
                .collect();
            let x: Vec<u128> = (0..n).map(|_| lcg(&mut state) & mask).collect();
            let (y, report, layout) = run_matvec_area(&a, &x, cfg).unwrap();
            assert_eq!(y, oracle(&a, &x, bits));
            let (cycles, width) = cost::matvec_area_cost(n as u64, bits as u64);
            assert_eq!(report.cycles, cycles);
            assert_eq!(layout.cols as u64, width);
            assert_eq!(report.memristors_per_row as u64, width);
        }
    }

    #[test]
    fn minimum_widths() {
        let (y, _, _) = run_matvec(
            &[vec![3u128, 5]],
            &[2, 6],
            MatVecConfig { m: 1, n: 2, bits: 3 },
        )
        .unwrap();
        assert_eq!(y, vec![36]);
        assert!(matches!(
            run_matvec(&[vec![1u128]], &[1], MatVecConfig { m: 1, n: 1, bits: 2 }),
            Err(MatVecError::BadDimensions(_))
        ));
        assert!(matches!(
            MatVecAreaLayout::new(MatVecConfig { m: 1, n: 2, bits: 5 }),
            Err(MatVecError::BadDimensions(_))
        ));
    }

    #[test]
    fn dimension_errors() {
        let cfg = MatVecConfig {
            m: 2,
            n: 2,
            bits: 4,
        };
        let a = vec![vec![1u128, 2], vec![3, 4]];
        assert!(matches!(
            run_matvec(&a, &[1], cfg),
            Err(MatVecError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            run_matvec(&a, &[1, 99], cfg),
            Err(MatVecError::ElementTooWide { .. })
        ));
    }
}
