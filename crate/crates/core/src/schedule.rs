//! Replayable schedules: ordered cycle instructions with phase tags.

use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarError, CrossbarState, CycleInstruction, Execution};
use crate::gates::{GateKind, GateProfile};

/// Phase tag attached to each instruction for cost breakdowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    LoadA,
    StageInit,
    StageBroadcast,
    StagePp,
    StageFa,
    StageShift,
    LastStage,
    Boundary,
    Routing,
    Adder,
    MacExtra,
    FinalSum,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::LoadA => "load_a",
            Phase::StageInit => "stage_init",
            Phase::StageBroadcast => "stage_broadcast",
            Phase::StagePp => "stage_pp",
            Phase::StageFa => "stage_fa",
            Phase::StageShift => "stage_shift",
            Phase::LastStage => "last_stage",
            Phase::Boundary => "boundary",
            Phase::Routing => "routing",
            Phase::Adder => "adder",
            Phase::MacExtra => "mac_extra",
            Phase::FinalSum => "final_sum",
        }
    }
}

/// An ordered sequence of cycle instructions realizing an algorithm.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Schedule {
    pub steps: Vec<(Phase, CycleInstruction)>,
}

impl Schedule {
    pub fn new() -> Schedule {
        Schedule { steps: Vec::new() }
    }

    pub fn push(&mut self, phase: Phase, instr: CycleInstruction) {
        self.steps.push((phase, instr));
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn extend(&mut self, other: Schedule) {
        self.steps.extend(other.steps);
    }

    /// Number of cycles carrying a given phase tag.
    pub fn phase_len(&self, phase: Phase) -> usize {
        self.steps.iter().filter(|(p, _)| *p == phase).count()
    }

    /// Replay every instruction on `state` in order.
    pub fn run(&self, state: &mut CrossbarState) -> Result<(), CrossbarError> {
        for (phase, instr) in &self.steps {
            state.apply_cycle(instr, Some(phase.name()))?;
        }
        Ok(())
    }

    /// All gate kinds emitted anywhere in the schedule.
    pub fn gate_kinds(&self) -> Vec<GateKind> {
        let mut kinds = Vec::new();
        for (_, instr) in &self.steps {
            for exec in &instr.executions {
                if let Execution::Gate(g) = exec {
                    if !kinds.contains(&g.kind) {
                        kinds.push(g.kind);
                    }
                }
            }
        }
        kinds
    }

    /// Check every emitted gate against a profile.
    pub fn check_profile(&self, profile: GateProfile) -> Result<(), crate::gates::GateError> {
        for kind in self.gate_kinds() {
            profile.check(kind)?;
        }
        Ok(())
    }
}
