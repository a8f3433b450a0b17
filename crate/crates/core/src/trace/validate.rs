use serde::Serialize;

use super::{Trace, VALID_ACCESS_SIZES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// `seq_id` is not strictly greater than the previous record's.
    Ordering,
    AddressOnNonMemory,
    MissingAddress,
    /// Access size outside {1,2,4,8,16,32,64}.
    SizeDomain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub seq_id: u64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Lists every record-level invariant violation in `trace`.
pub fn validate(trace: &Trace) -> ValidationReport {
    let mut violations = Vec::new();
    let mut prev: Option<u64> = None;
    for r in trace {
        let mut push = |kind| {
            violations.push(Violation {
                seq_id: r.seq_id,
                kind,
            })
        };
        if prev.is_some_and(|p| r.seq_id <= p) {
            push(ViolationKind::Ordering);
        }
        match (r.opcode.is_memory(), r.mem) {
            (false, Some(_)) => push(ViolationKind::AddressOnNonMemory),
            (true, None) => push(ViolationKind::MissingAddress),
            (true, Some(m)) if !VALID_ACCESS_SIZES.contains(&m.size) => {
                push(ViolationKind::SizeDomain)
            }
            _ => {}
        }
        prev = Some(prev.map_or(r.seq_id, |p| p.max(r.seq_id)));
    }
    ValidationReport { violations }
}
