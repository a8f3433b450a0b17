//! Microarchitecture-independent workload metrics and their aggregation into
//! a [`WorkloadSignature`].

mod cache;
mod dag;
mod entropy;
mod spatial;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::trace::{OpcodeClass, Trace};

pub use cache::{
    count_misses, simulate_hierarchy, simulate_lru, stack_distances, HierarchyMisses, LruCache,
    LruStats, ReuseHistogram,
};
pub use dag::{
    bb_parallelism, build_dependence_dag, build_dependence_dag_with, dlp_per_opcode, dlp_weighted,
    DagOptions, DependenceDag, LevelOccupancy,
};
pub use entropy::{entropy_curve, memory_entropy, EntropyCurve, EntropyPoint};
pub use spatial::{
    spatial_locality_pair, spatial_locality_total, uniform_weights, SpatialLocalityCurve,
    SpatialPair,
};

pub const SIGNATURE_SCHEMA_VERSION: u32 = 1;

/// Note attached to signatures of traces without loads or stores.
pub const NO_MEMORY_STREAM: &str = "no memory stream";

#[derive(Debug, thiserror::Error)]
pub enum CharError {
    #[error("empty address stream")]
    EmptyAddressStream,
    #[error("empty trace")]
    EmptyTrace,
    #[error("{0}")]
    InvalidArgument(String),
}

impl CharError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CharError::InvalidArgument(msg.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationConfig {
    /// Address bit reductions for the entropy curve, ascending.
    pub reductions: Vec<u32>,
    /// Line sizes forming consecutive doublings; `n` sizes give `n - 1` pairs.
    pub line_sizes: Vec<u64>,
    /// Fully associative LRU capacity for the spatial-locality pairs.
    pub capacity: u64,
    pub l2_capacity: u64,
    /// Line size of the miss-rate hierarchy and of store-to-load tracking.
    pub line_size: u64,
    /// Pair weights for the total spatial locality; uniform when absent.
    pub weights: Option<Vec<f64>>,
}

impl Default for CharacterizationConfig {
    fn default() -> Self {
        CharacterizationConfig {
            reductions: vec![0, 3, 6, 9],
            line_sizes: vec![8, 16, 32, 64, 128],
            capacity: 32 * 1024,
            l2_capacity: 256 * 1024,
            line_size: 64,
            weights: None,
        }
    }
}

impl CharacterizationConfig {
    /// First line of every doubling pair.
    pub fn from_lines(&self) -> Result<Vec<u64>, CharError> {
        if self.line_sizes.len() < 2 {
            return Err(CharError::invalid(
                "line_pairs needs at least two line sizes",
            ));
        }
        if self.line_sizes.windows(2).any(|w| w[1] != 2 * w[0]) {
            return Err(CharError::invalid(
                "line_pairs must be consecutive doublings, e.g. 8,16,32",
            ));
        }
        Ok(self.line_sizes[..self.line_sizes.len() - 1].to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissRates {
    pub m1: f64,
    pub m2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub instructions: u64,
    pub memory_accesses: u64,
    pub basic_blocks: u64,
}

/// Reuse-distance summary at the hierarchy line size. Cold accesses are
/// excluded from the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseSummary {
    pub line_size: u64,
    pub distinct_lines: u64,
    pub cold_accesses: u64,
    pub mean_distance: Option<f64>,
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSignature {
    pub schema_version: u32,
    pub name: String,
    pub totals: Totals,
    pub instruction_mix: BTreeMap<OpcodeClass, f64>,
    pub entropy: Option<EntropyCurve>,
    pub spatial: Option<SpatialLocalityCurve>,
    pub dlp_per_opcode: BTreeMap<OpcodeClass, f64>,
    pub dlp_weighted: f64,
    pub bb_parallelism: f64,
    pub critical_path_len: u64,
    pub measured_miss_rates: Option<MissRates>,
    pub reuse: Option<ReuseSummary>,
    pub notes: Vec<String>,
}

impl WorkloadSignature {
    pub fn has_memory_stream(&self) -> bool {
        self.entropy.is_some() && self.spatial.is_some() && self.measured_miss_rates.is_some()
    }
}

pub fn instruction_mix(trace: &Trace) -> BTreeMap<OpcodeClass, f64> {
    let mut counts = [0u64; 9];
    for r in trace {
        counts[r.opcode.index()] += 1;
    }
    let n = trace.len().max(1) as f64;
    OpcodeClass::ALL
        .iter()
        .map(|&c| (c, counts[c.index()] as f64 / n))
        .collect()
}

struct MemoryMetrics {
    entropy: EntropyCurve,
    spatial: SpatialLocalityCurve,
    hierarchy: HierarchyMisses,
    reuse: ReuseSummary,
}

fn memory_metrics(trace: &Trace, cfg: &CharacterizationConfig) -> Result<MemoryMetrics, CharError> {
    let from_lines = cfg.from_lines()?;
    let ((entropy, spatial), (hierarchy, lru)) = rayon::join(
        || {
            rayon::join(
                || entropy_curve(trace, &cfg.reductions),
                || spatial_locality_total(trace, &from_lines, cfg.capacity, cfg.weights.as_deref()),
            )
        },
        || {
            rayon::join(
                || simulate_hierarchy(trace, cfg.line_size, cfg.capacity, cfg.l2_capacity),
                || simulate_lru(trace, cfg.line_size, cfg.capacity),
            )
        },
    );
    let lru = lru?;
    Ok(MemoryMetrics {
        entropy: entropy?,
        spatial: spatial?,
        hierarchy: hierarchy?,
        reuse: ReuseSummary {
            line_size: lru.line_size,
            distinct_lines: lru.distinct_lines,
            cold_accesses: lru.reuse.cold,
            mean_distance: lru.reuse.mean_distance(),
            histogram: lru.reuse.buckets,
        },
    })
}

/// Computes every metric of `trace`. Traces without memory accesses get
/// `None` memory metrics and a [`NO_MEMORY_STREAM`] note.
pub fn signature(
    trace: &Trace,
    cfg: &CharacterizationConfig,
) -> Result<WorkloadSignature, CharError> {
    if trace.is_empty() {
        return Err(CharError::EmptyTrace);
    }
    cfg.from_lines()?;
    let has_memory = trace.memory_access_count() > 0;
    let dag_opts = DagOptions {
        store_granularity: cfg.line_size,
        ..DagOptions::default()
    };

    let (memory, dag) = rayon::join(
        || has_memory.then(|| memory_metrics(trace, cfg)).transpose(),
        || build_dependence_dag_with(trace, dag_opts),
    );
    let memory = memory?;

    let dlp = dlp_per_opcode(&dag, trace);
    let dlp_w = dlp_weighted(&dlp, trace)?;
    let mut notes = Vec::new();
    if !has_memory {
        notes.push(NO_MEMORY_STREAM.to_string());
    }

    let (entropy, spatial, measured_miss_rates, reuse) = match memory {
        Some(m) => {
            let (m1, m2) = m.hierarchy.rates();
            (
                Some(m.entropy),
                Some(m.spatial),
                Some(MissRates { m1, m2 }),
                Some(m.reuse),
            )
        }
        None => (None, None, None, None),
    };

    Ok(WorkloadSignature {
        schema_version: SIGNATURE_SCHEMA_VERSION,
        name: trace.name().to_string(),
        totals: Totals {
            instructions: trace.len() as u64,
            memory_accesses: trace.memory_access_count() as u64,
            basic_blocks: dag.block_count,
        },
        instruction_mix: instruction_mix(trace),
        entropy,
        spatial,
        dlp_per_opcode: dlp,
        dlp_weighted: dlp_w,
        bb_parallelism: dag.bb_parallelism()?,
        critical_path_len: dag.critical_path_len,
        measured_miss_rates,
        reuse,
        notes,
    })
}
