//! Stateful-logic gate kinds, their truth functions, and gate profiles.
//!
//! All gates here are single-output: the crossbar executes them as
//! `new = old AND f(inputs)` where `old` is 1 for a freshly initialized
//! output cell (see [`crate::crossbar`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A stateful gate kind with a fixed arity and truth function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Not,
    Nor2,
    Or2,
    Nand2,
    /// Three-input minority: 1 iff at most one input is 1.
    Min3,
    /// Simulation-only sugar for illustrating routing techniques.
    /// Production multiplier schedules never emit it.
    Copy,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GateError {
    #[error("gate {kind:?} expects {expected} inputs, got {got}")]
    ArityMismatch {
        kind: GateKind,
        expected: usize,
        got: usize,
    },
    #[error("unknown gate profile `{0}`")]
    UnknownProfile(String),
    #[error("gate {0:?} is not allowed under profile {1:?}")]
    ProfileViolation(GateKind, GateProfile),
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Not | GateKind::Copy => 1,
            GateKind::Nor2 | GateKind::Or2 | GateKind::Nand2 => 2,
            GateKind::Min3 => 3,
        }
    }

    /// Evaluate the gate's truth function. Pure.
    pub fn eval(self, inputs: &[bool]) -> Result<bool, GateError> {
        if inputs.len() != self.arity() {
            return Err(GateError::ArityMismatch {
                kind: self,
                expected: self.arity(),
                got: inputs.len(),
            });
        }
        Ok(match self {
            GateKind::Not => !inputs[0],
            GateKind::Copy => inputs[0],
            GateKind::Nor2 => !(inputs[0] | inputs[1]),
            GateKind::Or2 => inputs[0] | inputs[1],
            GateKind::Nand2 => !(inputs[0] & inputs[1]),
            GateKind::Min3 => {
                let ones = inputs.iter().filter(|b| **b).count();
                ones <= 1
            }
        })
    }
}

/// Which gate set a scheduler is allowed to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateProfile {
    /// NOT and Min3 only (the multiplier's profile).
    NotMin3,
    /// NOT, NOR, OR, NAND and Min3.
    Extended,
}

impl GateProfile {
    pub fn parse(name: &str) -> Result<GateProfile, GateError> {
        match name {
            "not_min3" => Ok(GateProfile::NotMin3),
            "extended" => Ok(GateProfile::Extended),
            other => Err(GateError::UnknownProfile(other.to_string())),
        }
    }

    pub fn gates(self) -> &'static [GateKind] {
        match self {
            GateProfile::NotMin3 => &[GateKind::Not, GateKind::Min3],
            GateProfile::Extended => &[
                GateKind::Not,
                GateKind::Nor2,
                GateKind::Or2,
                GateKind::Nand2,
                GateKind::Min3,
            ],
        }
    }

    pub fn allows(self, kind: GateKind) -> bool {
        self.gates().contains(&kind)
    }

    pub fn check(self, kind: GateKind) -> Result<(), GateError> {
        if self.allows(kind) {
            Ok(())
        } else {
            Err(GateError::ProfileViolation(kind, self))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maj3(a: bool, b: bool, c: bool) -> bool {
        (a as u8 + b as u8 + c as u8) >= 2
    }

    #[test]
    fn min3_examples() {
        assert_eq!(GateKind::Min3.eval(&[false, false, false]), Ok(true));
        assert_eq!(GateKind::Min3.eval(&[true, true, false]), Ok(false));
        assert_eq!(GateKind::Min3.eval(&[true, false, false]), Ok(true));
        assert_eq!(GateKind::Not.eval(&[true]), Ok(false));
    }

    #[test]
    fn min3_is_not_of_majority_on_all_rows() {
        for bits in 0u8..8 {
            let a = bits & 1 != 0;
            let b = bits & 2 != 0;
            let c = bits & 4 != 0;
            assert_eq!(
                GateKind::Min3.eval(&[a, b, c]).unwrap(),
                !maj3(a, b, c),
                "row {bits:03b}"
            );
        }
    }

    #[test]
    fn min3_with_constant_one_is_nor() {
        for bits in 0u8..4 {
            let a = bits & 1 != 0;
            let b = bits & 2 != 0;
            assert_eq!(
                GateKind::Min3.eval(&[a, b, true]).unwrap(),
                GateKind::Nor2.eval(&[a, b]).unwrap(),
            );
        }
    }

    #[test]
    fn arity_mismatch_is_error() {
        assert!(matches!(
            GateKind::Min3.eval(&[true, false]),
            Err(GateError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn profiles() {
        assert_eq!(
            GateProfile::parse("not_min3").unwrap().gates(),
            &[GateKind::Not, GateKind::Min3]
        );
        assert_eq!(GateProfile::parse("extended").unwrap().gates().len(), 5);
        assert!(GateProfile::parse("magic").is_err());
        assert!(GateProfile::NotMin3.check(GateKind::Nand2).is_err());
        assert!(GateProfile::Extended.check(GateKind::Nand2).is_ok());
        assert!(!GateProfile::Extended.allows(GateKind::Copy));
    }
}
