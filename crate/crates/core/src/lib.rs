//! Cycle-accurate stateful-logic simulation on partitioned memristive
//! crossbar rows, plus schedulers for carry-save multiplication and fused
//! multiply-accumulate matrix-vector products.
//!
//! The simulator executes one [`crossbar::CycleInstruction`] per clock
//! cycle, enforcing the partition-parallelism legality rules before any
//! mutation, and reports exact cycle and memristor counts. The schedulers
//! emit replayable [`schedule::Schedule`]s whose measured costs match the
//! closed forms in [`cost`].

pub mod adders;
pub mod cost;
pub mod crossbar;
pub mod gates;
pub mod matvec;
pub mod multiplier;
pub mod routing;
pub mod schedule;
pub mod trace;
pub mod tree;

pub use crossbar::{CostReport, CrossbarState, CycleInstruction};
pub use gates::{GateKind, GateProfile};
pub use schedule::{Phase, Schedule};
