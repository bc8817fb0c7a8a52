//! Crossbar state and the single-cycle execution model.
//!
//! A [`CrossbarState`] holds a grid of binary memristor cells split into
//! partitions by transistors on the row wordlines. One [`CycleInstruction`]
//! models one clock cycle: a transistor configuration plus a set of gate and
//! initialization executions that run simultaneously. `apply_cycle` checks
//! all legality rules before mutating anything and accumulates cost metrics
//! (cycles, distinct touched columns, per-phase breakdown).
//!
//! Gate semantics are uniform: the output cell becomes `old AND f(inputs)`,
//! where `old` is 1 for a freshly initialized cell (standard mode) and the
//! pre-cycle value in no-init mode. This one rule covers MAGIC/FELIX style
//! gates as well as the no-init AND trick.
//!
//! Initialization executions may set any number of pairwise-distinct cells
//! in one cycle. Init targets are exempt from segment exclusivity (a SET
//! pulse on selected bitlines does not drive the wordline segments the way
//! gate currents do); they only must not race a same-cycle gate on the same
//! cell. Without this reading, the per-stage single init cycle that the
//! multiplier's cycle counts assume would be impossible.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gates::{GateError, GateKind};

/// Whether a partition-boundary transistor conducts this cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conduct {
    Conducting,
    Isolated,
}

/// Per-cycle transistor configuration, one entry per partition boundary
/// in ascending boundary order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransistorConfig(pub Vec<Conduct>);

impl TransistorConfig {
    pub fn all_isolated(n_boundaries: usize) -> Self {
        TransistorConfig(vec![Conduct::Isolated; n_boundaries])
    }

    pub fn all_conducting(n_boundaries: usize) -> Self {
        TransistorConfig(vec![Conduct::Conducting; n_boundaries])
    }
}

/// Output-initialization mode of a gate execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Output must have been initialized (set to 1) since it was last written.
    Standard,
    /// Output keeps its old value as an AND operand; it only must be defined.
    NoInit,
}

/// One stateful gate applied across a set of rows with one column pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateExecution {
    pub kind: GateKind,
    pub inputs: Vec<usize>,
    pub output: usize,
    pub rows: Vec<usize>,
    pub init_mode: InitMode,
}

/// Initialization of a set of cells (each entry: row set × column).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitExecution {
    pub targets: Vec<(Vec<usize>, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    Gate(GateExecution),
    Init(InitExecution),
}

/// One clock cycle: a transistor configuration plus simultaneous executions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleInstruction {
    pub config: TransistorConfig,
    pub executions: Vec<Execution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    /// Never written or initialized; reading it is an error.
    Undefined,
    /// Set to 1 by an init and not written since.
    Initialized,
    Written(bool),
}

impl Cell {
    fn value(self) -> Option<bool> {
        match self {
            Cell::Undefined => None,
            Cell::Initialized => Some(true),
            Cell::Written(v) => Some(v),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CrossbarError {
    #[error("invalid partition boundary {boundary} for {cols} columns")]
    InvalidBoundary { boundary: usize, cols: usize },
    #[error("partition boundaries must be strictly increasing")]
    UnsortedBoundaries,
    #[error("crossbar dimensions must be positive")]
    EmptyCrossbar,
    #[error("cell ({row}, {col}) out of range")]
    OutOfRange { row: usize, col: usize },
    #[error("reading undefined cell ({row}, {col})")]
    UndefinedRead { row: usize, col: usize },
    #[error("config has {got} boundary entries, crossbar has {expected}")]
    ConfigMismatch { got: usize, expected: usize },
    #[error("gate inputs/output must be pairwise distinct columns")]
    OverlappingColumns,
    #[error("gate execution has an empty row mask")]
    EmptyRowMask,
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error("rule (a): gate columns span more than one conducting segment")]
    RuleA,
    #[error("rule (b): two executions share conducting segment {segment} in row {row}")]
    RuleB { row: usize, segment: usize },
    #[error("rule (d): init target ({row}, {col}) duplicated or raced by a gate")]
    RuleD { row: usize, col: usize },
    #[error("rule (e): output ({row}, {col}) not initialized since last write")]
    RuleENotInitialized { row: usize, col: usize },
    #[error("rule (e): no-init output ({row}, {col}) is undefined")]
    RuleEUndefined { row: usize, col: usize },
}

/// Cost counters, snapshotted by [`CrossbarState::cost_report`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub cycles: u64,
    /// Distinct columns ever read, written or initialized.
    pub memristors_per_row: usize,
    pub partitions: usize,
    pub phase_breakdown: BTreeMap<String, u64>,
}

/// Grid of memristor cells with partition boundaries; the single source of
/// truth for all values during a run.
#[derive(Debug, Clone)]
pub struct CrossbarState {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    boundaries: Vec<usize>,
    touched: Vec<bool>,
    cycles: u64,
    phase_breakdown: BTreeMap<String, u64>,
}

impl CrossbarState {
    /// Create a crossbar with all cells undefined.
    ///
    /// A boundary at index `j` separates column `j-1` from column `j`;
    /// boundaries must be strictly increasing and inside `(0, cols)`.
    pub fn create(
        rows: usize,
        cols: usize,
        boundaries: Vec<usize>,
    ) -> Result<CrossbarState, CrossbarError> {
        if rows == 0 || cols == 0 {
            return Err(CrossbarError::EmptyCrossbar);
        }
        for w in boundaries.windows(2) {
            if w[0] >= w[1] {
                return Err(CrossbarError::UnsortedBoundaries);
            }
        }
        if let Some(&b) = boundaries.iter().find(|&&b| b == 0 || b >= cols) {
            return Err(CrossbarError::InvalidBoundary { boundary: b, cols });
        }
        Ok(CrossbarState {
            rows,
            cols,
            cells: vec![Cell::Undefined; rows * cols],
            boundaries,
            touched: vec![false; cols],
            cycles: 0,
            phase_breakdown: BTreeMap::new(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn partitions(&self) -> usize {
        self.boundaries.len() + 1
    }

    fn idx(&self, row: usize, col: usize) -> Result<usize, CrossbarError> {
        if row >= self.rows || col >= self.cols {
            Err(CrossbarError::OutOfRange { row, col })
        } else {
            Ok(row * self.cols + col)
        }
    }

    /// Partition index containing `col`.
    pub fn partition_of(&self, col: usize) -> usize {
        self.boundaries.partition_point(|&b| b <= col)
    }

    /// External operand writes. Not counted as algorithm cycles.
    pub fn write_cells(
        &mut self,
        assignments: &[(usize, usize, bool)],
    ) -> Result<(), CrossbarError> {
        for &(row, col, _) in assignments {
            self.idx(row, col)?;
        }
        for &(row, col, bit) in assignments {
            let i = row * self.cols + col;
            self.cells[i] = Cell::Written(bit);
            self.touched[col] = true;
        }
        Ok(())
    }

    /// Pure read of defined cells. No cycle cost.
    pub fn read_cells(&self, coords: &[(usize, usize)]) -> Result<Vec<bool>, CrossbarError> {
        coords
            .iter()
            .map(|&(row, col)| {
                let i = self.idx(row, col)?;
                self.cells[i]
                    .value()
                    .ok_or(CrossbarError::UndefinedRead { row, col })
            })
            .collect()
    }

    pub fn read_cell(&self, row: usize, col: usize) -> Result<bool, CrossbarError> {
        Ok(self.read_cells(&[(row, col)])?[0])
    }

    /// Segment id for every partition under `config` (conducting boundaries
    /// merge adjacent partitions).
    fn segment_ids(&self, config: &TransistorConfig) -> Vec<usize> {
        let mut ids = Vec::with_capacity(self.boundaries.len() + 1);
        let mut id = 0usize;
        ids.push(0);
        for (i, _) in self.boundaries.iter().enumerate() {
            if config.0[i] == Conduct::Isolated {
                id += 1;
            }
            ids.push(id);
        }
        ids
    }

    /// Execute one clock cycle. All legality rules are checked before any
    /// mutation; on error the state is unchanged.
    pub fn apply_cycle(
        &mut self,
        instr: &CycleInstruction,
        phase: Option<&str>,
    ) -> Result<(), CrossbarError> {
        if instr.config.0.len() != self.boundaries.len() {
            return Err(CrossbarError::ConfigMismatch {
                got: instr.config.0.len(),
                expected: self.boundaries.len(),
            });
        }
        let seg = self.segment_ids(&instr.config);

        // Validation pass. claimed[(row, segment)] per rule (b);
        // init_cells for rule (d) distinctness.
        let mut claimed: Vec<(usize, usize)> = Vec::new();
        let mut gate_cells: Vec<(usize, usize)> = Vec::new(); // (row, col) read or written
        let mut init_cells: Vec<(usize, usize)> = Vec::new();
        for exec in &instr.executions {
            match exec {
                Execution::Gate(g) => {
                    if g.rows.is_empty() {
                        return Err(CrossbarError::EmptyRowMask);
                    }
                    if g.inputs.len() != g.kind.arity() {
                        return Err(GateError::ArityMismatch {
                            kind: g.kind,
                            expected: g.kind.arity(),
                            got: g.inputs.len(),
                        }
                        .into());
                    }
                    let mut cols = g.inputs.clone();
                    cols.push(g.output);
                    for &c in &cols {
                        if c >= self.cols {
                            return Err(CrossbarError::OutOfRange { row: 0, col: c });
                        }
                    }
                    let mut sorted = cols.clone();
                    sorted.sort_unstable();
                    if sorted.windows(2).any(|w| w[0] == w[1]) {
                        return Err(CrossbarError::OverlappingColumns);
                    }
                    // Rule (a): one conducting segment.
                    let s0 = seg[self.partition_of(cols[0])];
                    if cols.iter().any(|&c| seg[self.partition_of(c)] != s0) {
                        return Err(CrossbarError::RuleA);
                    }
                    for &row in &g.rows {
                        self.idx(row, 0)?;
                        // Rule (b): exclusive segment per row.
                        if claimed.contains(&(row, s0)) {
                            return Err(CrossbarError::RuleB { row, segment: s0 });
                        }
                        claimed.push((row, s0));
                        for &c in &cols {
                            gate_cells.push((row, c));
                        }
                        // Rule (e) + defined inputs.
                        for &c in &g.inputs {
                            let cell = self.cells[row * self.cols + c];
                            if cell.value().is_none() {
                                return Err(CrossbarError::UndefinedRead { row, col: c });
                            }
                        }
                        let out = self.cells[row * self.cols + g.output];
                        match g.init_mode {
                            InitMode::Standard => {
                                if out != Cell::Initialized {
                                    return Err(CrossbarError::RuleENotInitialized {
                                        row,
                                        col: g.output,
                                    });
                                }
                            }
                            InitMode::NoInit => {
                                if out.value().is_none() {
                                    return Err(CrossbarError::RuleEUndefined {
                                        row,
                                        col: g.output,
                                    });
                                }
                            }
                        }
                    }
                }
                Execution::Init(init) => {
                    for (rows, col) in &init.targets {
                        if rows.is_empty() {
                            return Err(CrossbarError::EmptyRowMask);
                        }
                        for &row in rows {
                            self.idx(row, *col)?;
                            if init_cells.contains(&(row, *col)) {
                                return Err(CrossbarError::RuleD { row, col: *col });
                            }
                            init_cells.push((row, *col));
                        }
                    }
                }
            }
        }
        // Rule (d): init targets must not race same-cycle gate cells.
        for &(row, col) in &init_cells {
            if gate_cells.contains(&(row, col)) {
                return Err(CrossbarError::RuleD { row, col });
            }
        }

        // Mutation pass. All gate reads use pre-cycle values; rule (b) and
        // rule (d) guarantee the writes are pairwise disjoint, so the
        // executions commute.
        let mut writes: Vec<(usize, Cell)> = Vec::new();
        for exec in &instr.executions {
            match exec {
                Execution::Gate(g) => {
                    for &row in &g.rows {
                        let in_vals: Vec<bool> = g
                            .inputs
                            .iter()
                            .map(|&c| self.cells[row * self.cols + c].value().unwrap())
                            .collect();
                        let f = g.kind.eval(&in_vals)?;
                        let old = match g.init_mode {
                            InitMode::Standard => true,
                            InitMode::NoInit => {
                                self.cells[row * self.cols + g.output].value().unwrap()
                            }
                        };
                        writes.push((row * self.cols + g.output, Cell::Written(old && f)));
                        for &c in &g.inputs {
                            self.touched[c] = true;
                        }
                        self.touched[g.output] = true;
                    }
                }
                Execution::Init(init) => {
                    for (rows, col) in &init.targets {
                        for &row in rows {
                            writes.push((row * self.cols + col, Cell::Initialized));
                            self.touched[*col] = true;
                        }
                    }
                }
            }
        }
        for (i, v) in writes {
            self.cells[i] = v;
        }
        self.cycles += 1;
        if let Some(p) = phase {
            *self.phase_breakdown.entry(p.to_string()).or_insert(0) += 1;
        }
        Ok(())
    }

    pub fn cost_report(&self) -> CostReport {
        CostReport {
            cycles: self.cycles,
            memristors_per_row: self.touched.iter().filter(|t| **t).count(),
            partitions: self.partitions(),
            phase_breakdown: self.phase_breakdown.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn not(inputs: usize, output: usize, rows: Vec<usize>, init_mode: InitMode) -> Execution {
        Execution::Gate(GateExecution {
            kind: GateKind::Not,
            inputs: vec![inputs],
            output,
            rows,
            init_mode,
        })
    }

    fn init(targets: Vec<(Vec<usize>, usize)>) -> Execution {
        Execution::Init(InitExecution { targets })
    }

    #[test]
    fn create_validates_boundaries() {
        let xb = CrossbarState::create(1, 8, vec![4]).unwrap();
        assert_eq!(xb.partitions(), 2);
        assert_eq!(
            CrossbarState::create(4, 16, vec![]).unwrap().partitions(),
            1
        );
        assert!(matches!(
            CrossbarState::create(1, 8, vec![0]),
            Err(CrossbarError::InvalidBoundary { .. })
        ));
        assert!(matches!(
            CrossbarState::create(1, 8, vec![3, 3]),
            Err(CrossbarError::UnsortedBoundaries)
        ));
    }

    #[test]
    fn write_then_read() {
        let mut xb = CrossbarState::create(4, 4, vec![]).unwrap();
        xb.write_cells(&[(0, 0, true)]).unwrap();
        assert_eq!(xb.read_cell(0, 0), Ok(true));
        xb.write_cells(&[(0, 0, false)]).unwrap();
        assert_eq!(xb.read_cell(0, 0), Ok(false));
        assert!(matches!(
            xb.write_cells(&[(5, 0, true)]),
            Err(CrossbarError::OutOfRange { .. })
        ));
        assert!(matches!(
            xb.read_cell(1, 1),
            Err(CrossbarError::UndefinedRead { .. })
        ));
    }

    #[test]
    fn parallel_not_gates_in_isolated_partitions() {
        // Three NOTs in three isolated partitions, one instruction, one cycle.
        let mut xb = CrossbarState::create(1, 6, vec![2, 4]).unwrap();
        xb.write_cells(&[(0, 0, true), (0, 2, false), (0, 4, true)])
            .unwrap();
        xb.apply_cycle(
            &CycleInstruction {
                config: TransistorConfig::all_isolated(2),
                executions: vec![init(vec![(vec![0], 1), (vec![0], 3), (vec![0], 5)])],
            },
            None,
        )
        .unwrap();
        xb.apply_cycle(
            &CycleInstruction {
                config: TransistorConfig::all_isolated(2),
                executions: vec![
                    not(0, 1, vec![0], InitMode::Standard),
                    not(2, 3, vec![0], InitMode::Standard),
                    not(4, 5, vec![0], InitMode::Standard),
                ],
            },
            None,
        )
        .unwrap();
        assert_eq!(
            xb.read_cells(&[(0, 1), (0, 3), (0, 5)]).unwrap(),
            vec![false, true, false]
        );
        assert_eq!(xb.cost_report().cycles, 2);
    }

    #[test]
    fn rule_b_rejects_shared_segment() {
        let mut xb = CrossbarState::create(1, 4, vec![]).unwrap();
        xb.write_cells(&[(0, 0, true), (0, 1, false)]).unwrap();
        xb.apply_cycle(
            &CycleInstruction {
                config: TransistorConfig::all_isolated(0),
                executions: vec![init(vec![(vec![0], 2), (vec![0], 3)])],
            },
            None,
        )
        .unwrap();
        let before = xb.read_cells(&[(0, 0), (0, 1)]).unwrap();
        let err = xb.apply_cycle(
            &CycleInstruction {
                config: TransistorConfig::all_isolated(0),
                executions: vec![
                    not(0, 2, vec![0], InitMode::Standard),
                    not(1, 3, vec![0], InitMode::Standard),
                ],
            },
            None,
        );
        assert!(matches!(err, Err(CrossbarError::RuleB { .. })));
        // No state change on error.
        assert_eq!(xb.read_cells(&[(0, 0), (0, 1)]).unwrap(), before);
        assert_eq!(xb.cost_report().cycles, 1);
    }

    #[test]
    fn rule_a_rejects_cross_segment_gate() {
        let mut xb = CrossbarState::create(1, 4, vec![2]).unwrap();
        xb.write_cells(&[(0, 0, true)]).unwrap();
        xb.apply_cycle(
            &CycleInstruction {
                config: TransistorConfig::all_isolated(1),
                executions: vec![init(vec![(vec![0], 3)])],
            },
            None,
        )
        .unwrap();
        let err = xb.apply_cycle(
            &CycleInstruction {
                config: TransistorConfig::all_isolated(1),
                executions: vec![not(0, 3, vec![0], InitMode::Standard)],
            },
            None,
        );
        assert!(matches!(err, Err(CrossbarError::RuleA)));
        // Same gate with the boundary conducting is legal.
        xb.apply_cycle(
            &CycleInstruction {
                config: TransistorConfig::all_conducting(1),
                executions: vec![not(0, 3, vec![0], InitMode::Standard)],
            },
            None,
        )
        .unwrap();
        assert_eq!(xb.read_cell(0, 3), Ok(false));
    }

    #[test]
    fn no_init_and_trick() {
        // Output holds x's AND companion: new = old AND NOT(in).
        let mut xb = CrossbarState::create(1, 2, vec![]).unwrap();
        xb.write_cells(&[(0, 0, false), (0, 1, true)]).unwrap();
        xb.apply_cycle(
            &CycleInstruction {
                config: TransistorConfig::all_isolated(0),
                executions: vec![not(0, 1, vec![0], InitMode::NoInit)],
            },
            None,
        )
        .unwrap();
        assert_eq!(xb.read_cell(0, 1), Ok(true)); // 1 AND NOT(0)

        let mut xb = CrossbarState::create(1, 2, vec![]).unwrap();
        xb.write_cells(&[(0, 0, true), (0, 1, true)]).unwrap();
        xb.apply_cycle(
            &CycleInstruction {
                config: TransistorConfig::all_isolated(0),
                executions: vec![not(0, 1, vec![0], InitMode::NoInit)],
            },
            None,
        )
        .unwrap();
        assert_eq!(xb.read_cell(0, 1), Ok(false)); // 1 AND NOT(1)
    }

    #[test]
    fn standard_mode_requires_fresh_init() {
        let mut xb = CrossbarState::create(1, 2, vec![]).unwrap();
        xb.write_cells(&[(0, 0, false), (0, 1, true)]).unwrap();
        let err = xb.apply_cycle(
            &CycleInstruction {
                config: TransistorConfig::all_isolated(0),
                executions: vec![not(0, 1, vec![0], InitMode::Standard)],
            },
            None,
        );
        assert!(matches!(
            err,
            Err(CrossbarError::RuleENotInitialized { .. })
        ));
    }

    #[test]
    fn cost_counting() {
        let mut xb = CrossbarState::create(1, 8, vec![4]).unwrap();
        let fresh = xb.cost_report();
        assert_eq!(fresh.cycles, 0);
        assert_eq!(fresh.memristors_per_row, 0);
        xb.write_cells(&[(0, 0, true), (0, 1, true)]).unwrap();
        xb.apply_cycle(
            &CycleInstruction {
                config: TransistorConfig::all_isolated(1),
                executions: vec![init(vec![(vec![0], 2)])],
            },
            Some("setup"),
        )
        .unwrap();
        xb.apply_cycle(
            &CycleInstruction {
                config: TransistorConfig::all_isolated(1),
                executions: vec![Execution::Gate(GateExecution {
                    kind: GateKind::Min3,
                    inputs: vec![0, 1, 3],
                    output: 2,
                    rows: vec![0],
                    init_mode: InitMode::Standard,
                })],
            },
            Some("gate"),
        )
        .err()
        .expect("col 3 undefined");
        xb.write_cells(&[(0, 3, false)]).unwrap();
        xb.apply_cycle(
            &CycleInstruction {
                config: TransistorConfig::all_isolated(1),
                executions: vec![Execution::Gate(GateExecution {
                    kind: GateKind::Min3,
                    inputs: vec![0, 1, 3],
                    output: 2,
                    rows: vec![0],
                    init_mode: InitMode::Standard,
                })],
            },
            Some("gate"),
        )
        .unwrap();
        let report = xb.cost_report();
        assert_eq!(report.cycles, 2);
        assert_eq!(report.memristors_per_row, 4);
        assert_eq!(report.partitions, 2);
        assert_eq!(report.phase_breakdown["setup"], 1);
        assert_eq!(report.phase_breakdown["gate"], 1);
    }

    #[test]
    fn single_gate_cost_example() {
        // One no-init gate with two inputs and one output in one cycle:
        // one cycle, three distinct memristors.
        let mut xb = CrossbarState::create(1, 4, vec![]).unwrap();
        xb.write_cells(&[(0, 0, true), (0, 1, false), (0, 2, true)])
            .unwrap();
        xb.apply_cycle(
            &CycleInstruction {
                config: TransistorConfig(vec![]),
                executions: vec![Execution::Gate(GateExecution {
                    kind: GateKind::Nor2,
                    inputs: vec![0, 1],
                    output: 2,
                    rows: vec![0],
                    init_mode: InitMode::NoInit,
                })],
            },
            None,
        )
        .unwrap();
        let report = xb.cost_report();
        assert_eq!(report.cycles, 1);
        assert_eq!(report.memristors_per_row, 3);
    }

    #[test]
    fn state_is_send() {
        fn assert_send<T: Send>() {}
        assert_send::<CrossbarState>();
        assert_send::<crate::schedule::Schedule>();
    }
}
