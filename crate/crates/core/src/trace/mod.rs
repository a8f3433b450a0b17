//! Dynamic instruction traces: the record model, the line-oriented text
//! format, validation, and deterministic synthetic generators.

mod format;
mod synth;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

pub use format::{parse_trace, write_trace, TraceReader};
pub use synth::{generate_synthetic, DepShape, PatternKind, PatternSpec};
pub use validate::{validate, ValidationReport, Violation, ViolationKind};

/// Element size assumed when a trace does not declare one.
pub const DEFAULT_ELEMENT_SIZE: u32 = 8;

/// Access sizes a memory record may carry.
pub const VALID_ACCESS_SIZES: [u32; 7] = [1, 2, 4, 8, 16, 32, 64];

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: address on non-memory opcode {opcode}")]
    AddressOnNonMemory { line: u64, opcode: OpcodeClass },
    #[error("line {line}: memory opcode {opcode} without an address")]
    MissingAddress { line: u64, opcode: OpcodeClass },
    #[error("line {line}: access size {size} is not one of 1,2,4,8,16,32,64")]
    InvalidSize { line: u64, size: u32 },
    #[error("line {line}: seq_id {got} does not follow {prev}")]
    NonMonotoneSeq { line: u64, prev: u64, got: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse opcode classes. DLP is reported per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OpcodeClass {
    Load,
    Store,
    Iadd,
    Imul,
    Fadd,
    Fmul,
    Fdiv,
    Branch,
    Other,
}

impl OpcodeClass {
    pub const ALL: [OpcodeClass; 9] = [
        OpcodeClass::Load,
        OpcodeClass::Store,
        OpcodeClass::Iadd,
        OpcodeClass::Imul,
        OpcodeClass::Fadd,
        OpcodeClass::Fmul,
        OpcodeClass::Fdiv,
        OpcodeClass::Branch,
        OpcodeClass::Other,
    ];

    pub fn is_memory(self) -> bool {
        matches!(self, OpcodeClass::Load | OpcodeClass::Store)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OpcodeClass::Load => "LOAD",
            OpcodeClass::Store => "STORE",
            OpcodeClass::Iadd => "IADD",
            OpcodeClass::Imul => "IMUL",
            OpcodeClass::Fadd => "FADD",
            OpcodeClass::Fmul => "FMUL",
            OpcodeClass::Fdiv => "FDIV",
            OpcodeClass::Branch => "BRANCH",
            OpcodeClass::Other => "OTHER",
        }
    }
}

impl fmt::Display for OpcodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpcodeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpcodeClass::ALL
            .iter()
            .copied()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| format!("unknown opcode `{s}`"))
    }
}

/// Abstract register identifier, written `r<N>` in trace files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegId(pub u32);

impl fmt::Display for RegId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl FromStr for RegId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('r')
            .and_then(|n| n.parse().ok())
            .map(RegId)
            .ok_or_else(|| format!("bad register `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemAccess {
    pub addr: u64,
    pub size: u32,
}

/// One dynamic instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub seq_id: u64,
    pub opcode: OpcodeClass,
    pub bb_id: u64,
    pub dest: Option<RegId>,
    pub sources: SmallVec<[RegId; 2]>,
    pub mem: Option<MemAccess>,
}

impl InstructionRecord {
    /// A register-only instruction.
    pub fn compute(seq_id: u64, opcode: OpcodeClass, bb_id: u64) -> Self {
        InstructionRecord {
            seq_id,
            opcode,
            bb_id,
            dest: None,
            sources: SmallVec::new(),
            mem: None,
        }
    }

    pub fn memory(seq_id: u64, opcode: OpcodeClass, bb_id: u64, addr: u64, size: u32) -> Self {
        InstructionRecord {
            mem: Some(MemAccess { addr, size }),
            ..InstructionRecord::compute(seq_id, opcode, bb_id)
        }
    }

    pub fn with_dest(mut self, reg: u32) -> Self {
        self.dest = Some(RegId(reg));
        self
    }

    pub fn with_sources(mut self, regs: &[u32]) -> Self {
        self.sources = regs.iter().copied().map(RegId).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceSource {
    Parsed,
    Synthetic(String),
}

impl fmt::Display for TraceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceSource::Parsed => f.write_str("parsed"),
            TraceSource::Synthetic(p) => write!(f, "synthetic:{p}"),
        }
    }
}

impl FromStr for TraceSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "parsed" => Ok(TraceSource::Parsed),
            _ => s
                .strip_prefix("synthetic:")
                .map(|p| TraceSource::Synthetic(p.to_string()))
                .ok_or_else(|| format!("unknown trace source `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub name: String,
    pub element_size: Option<u32>,
    pub source: TraceSource,
}

impl Default for TraceMeta {
    fn default() -> Self {
        TraceMeta {
            name: "trace".to_string(),
            element_size: None,
            source: TraceSource::Parsed,
        }
    }
}

/// An immutable, seq-ordered instruction trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    meta: TraceMeta,
    records: Vec<InstructionRecord>,
}

impl Trace {
    /// Wraps records without checking invariants; see [`validate`].
    pub fn new(meta: TraceMeta, records: Vec<InstructionRecord>) -> Self {
        Trace { meta, records }
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn element_size(&self) -> u32 {
        self.meta.element_size.unwrap_or(DEFAULT_ELEMENT_SIZE)
    }

    pub fn records(&self) -> &[InstructionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, InstructionRecord> {
        self.records.iter()
    }

    /// Memory accesses in trace order.
    pub fn accesses(&self) -> impl Iterator<Item = MemAccess> + '_ {
        self.records.iter().filter_map(|r| r.mem)
    }

    pub fn addresses(&self) -> impl Iterator<Item = u64> + '_ {
        self.accesses().map(|m| m.addr)
    }

    pub fn memory_access_count(&self) -> usize {
        self.records.iter().filter(|r| r.mem.is_some()).count()
    }

    pub fn into_records(self) -> Vec<InstructionRecord> {
        self.records
    }
}

impl<'a> IntoIterator for &'a Trace {
    type Item = &'a InstructionRecord;
    type IntoIter = std::slice::Iter<'a, InstructionRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}
