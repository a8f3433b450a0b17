//! Deterministic synthetic trace generators.
//!
//! Every generator is a pure function of its [`PatternSpec`]: the same spec,
//! seed included, always yields the same trace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::{
    InstructionRecord, MemAccess, OpcodeClass, RegId, Trace, TraceMeta, TraceSource,
    VALID_ACCESS_SIZES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// `base, base+e, base+2e, ...`
    Sequential,
    /// `base + i*stride`
    Strided { stride_bytes: u64 },
    /// Uniform element-aligned draws over `[base, base+range)`.
    Random { range_bytes: u64, seed: u64 },
    /// Walks one random cyclic permutation of `nodes` nodes spaced `node_bytes` apart.
    PointerChase {
        nodes: u64,
        node_bytes: u64,
        seed: u64,
    },
    /// Two-array three-point Jacobi sweep; each sweep updates B from A, then A from B.
    Stencil1d { array_bytes: u64, sweeps: u32 },
    /// Read-modify-write of a row-major square matrix along its (wrapped)
    /// diagonals. Diagonals are visited in a strided order, so neighbouring
    /// elements of a row are touched far apart in time.
    Diagonal { matrix_dim: u64, element_bytes: u32 },
}

impl PatternKind {
    pub fn label(&self) -> &'static str {
        match self {
            PatternKind::Sequential => "sequential",
            PatternKind::Strided { .. } => "strided",
            PatternKind::Random { .. } => "random",
            PatternKind::PointerChase { .. } => "pointer_chase",
            PatternKind::Stencil1d { .. } => "stencil1d",
            PatternKind::Diagonal { .. } => "diagonal",
        }
    }
}

/// Register dependence shape of the emitted instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepShape {
    /// No register sources.
    Independent,
    /// Every instruction consumes the value produced by the previous producer.
    Chain,
    /// Block-level k-ary tree: each instruction of block `b` reads the register
    /// written in block `(b-1)/k`. Instructions within one block are independent.
    Fanout(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub kind: PatternKind,
    /// Memory accesses to emit. Stencil and diagonal kernels are truncated to this count.
    pub n_accesses: u64,
    /// Fraction of emitted instructions that are non-memory. `1.0` yields a
    /// compute-only trace of `n_accesses` instructions.
    pub compute_mix: f64,
    pub dep_shape: DepShape,
    pub element_size: u32,
    pub base: u64,
    /// Instructions per basic block.
    pub block_len: u32,
    /// Sequential and strided addresses wrap modulo this many bytes.
    pub footprint_bytes: Option<u64>,
    /// Opcodes used round-robin for interleaved compute instructions.
    pub compute_ops: Vec<OpcodeClass>,
    pub name: Option<String>,
}

#[derive(Debug, thiserror::Error)]
#[error("invalid pattern: {0}")]
pub struct InvalidPattern(pub String);

impl PatternSpec {
    pub fn new(kind: PatternKind, n_accesses: u64) -> Self {
        PatternSpec {
            kind,
            n_accesses,
            compute_mix: 0.0,
            dep_shape: DepShape::Independent,
            element_size: super::DEFAULT_ELEMENT_SIZE,
            base: 0,
            block_len: 16,
            footprint_bytes: None,
            compute_ops: vec![
                OpcodeClass::Iadd,
                OpcodeClass::Fadd,
                OpcodeClass::Imul,
                OpcodeClass::Fmul,
            ],
            name: None,
        }
    }

    pub fn sequential(n_accesses: u64) -> Self {
        Self::new(PatternKind::Sequential, n_accesses)
    }

    pub fn strided(stride_bytes: u64, n_accesses: u64) -> Self {
        Self::new(PatternKind::Strided { stride_bytes }, n_accesses)
    }

    pub fn random(range_bytes: u64, seed: u64, n_accesses: u64) -> Self {
        Self::new(PatternKind::Random { range_bytes, seed }, n_accesses)
    }

    pub fn pointer_chase(nodes: u64, node_bytes: u64, seed: u64, n_accesses: u64) -> Self {
        Self::new(
            PatternKind::PointerChase {
                nodes,
                node_bytes,
                seed,
            },
            n_accesses,
        )
    }

    /// A full stencil run; `n_accesses` is set to the kernel's natural length.
    pub fn stencil1d(array_bytes: u64, sweeps: u32) -> Self {
        let mut spec = Self::new(
            PatternKind::Stencil1d {
                array_bytes,
                sweeps,
            },
            0,
        );
        spec.n_accesses = spec.natural_accesses().unwrap_or(0);
        spec
    }

    /// A full diagonal sweep; `n_accesses` is set to `2 * dim^2`.
    pub fn diagonal(matrix_dim: u64, element_bytes: u32) -> Self {
        let mut spec = Self::new(
            PatternKind::Diagonal {
                matrix_dim,
                element_bytes,
            },
            0,
        );
        spec.element_size = element_bytes;
        spec.n_accesses = spec.natural_accesses().unwrap_or(0);
        spec
    }

    pub fn with_compute_mix(mut self, mix: f64) -> Self {
        self.compute_mix = mix;
        self
    }

    pub fn with_dep_shape(mut self, shape: DepShape) -> Self {
        self.dep_shape = shape;
        self
    }

    pub fn with_element_size(mut self, e: u32) -> Self {
        self.element_size = e;
        self
    }

    pub fn with_base(mut self, base: u64) -> Self {
        self.base = base;
        self
    }

    pub fn with_block_len(mut self, len: u32) -> Self {
        self.block_len = len;
        self
    }

    pub fn with_footprint(mut self, bytes: u64) -> Self {
        self.footprint_bytes = Some(bytes);
        self
    }

    pub fn with_compute_ops(mut self, ops: Vec<OpcodeClass>) -> Self {
        self.compute_ops = ops;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// Memory accesses in one complete run of a structured kernel.
    pub fn natural_accesses(&self) -> Option<u64> {
        match self.kind {
            PatternKind::Stencil1d {
                array_bytes,
                sweeps,
            } => {
                let n = array_bytes / u64::from(self.element_size.max(1));
                Some(u64::from(sweeps) * stencil_accesses_per_sweep(n))
            }
            PatternKind::Diagonal { matrix_dim, .. } => Some(2 * matrix_dim * matrix_dim),
            _ => None,
        }
    }

    fn access_size(&self) -> u32 {
        match self.kind {
            PatternKind::Diagonal { element_bytes, .. } => element_bytes,
            _ => self.element_size,
        }
    }

    pub fn check(&self) -> Result<(), InvalidPattern> {
        let fail = |msg: &str| Err(InvalidPattern(msg.to_string()));
        if self.n_accesses == 0 {
            return fail("n_accesses must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.compute_mix) {
            return fail("compute_mix must lie in [0, 1]");
        }
        if !VALID_ACCESS_SIZES.contains(&self.access_size()) {
            return fail("element size must be one of 1,2,4,8,16,32,64");
        }
        if self.block_len == 0 {
            return fail("block_len must be at least 1");
        }
        if self.compute_mix > 0.0 && self.compute_ops.is_empty() {
            return fail("compute_ops must not be empty when compute_mix > 0");
        }
        if self.compute_ops.iter().any(|op| op.is_memory()) {
            return fail("compute_ops must not contain LOAD or STORE");
        }
        if let DepShape::Fanout(0) = self.dep_shape {
            return fail("fanout degree must be at least 1");
        }
        if self.footprint_bytes == Some(0) {
            return fail("footprint must be positive");
        }
        let e = u64::from(self.element_size);
        match self.kind {
            PatternKind::Sequential => {}
            PatternKind::Strided { stride_bytes: 0 } => return fail("stride must be positive"),
            PatternKind::Strided { .. } => {}
            PatternKind::Random { range_bytes, .. } if range_bytes < e => {
                return fail("random range must hold at least one element")
            }
            PatternKind::Random { .. } => {}
            PatternKind::PointerChase {
                nodes, node_bytes, ..
            } if nodes == 0 || node_bytes == 0 => {
                return fail("pointer chase needs at least one node of positive size")
            }
            PatternKind::PointerChase { .. } => {}
            PatternKind::Stencil1d {
                array_bytes,
                sweeps,
            } => {
                if array_bytes / e < 3 {
                    return fail("stencil array must hold at least 3 elements");
                }
                if sweeps == 0 {
                    return fail("stencil needs at least one sweep");
                }
            }
            PatternKind::Diagonal { matrix_dim: 0, .. } => {
                return fail("matrix dimension must be positive")
            }
            PatternKind::Diagonal { .. } => {}
        }
        Ok(())
    }
}

fn stencil_accesses_per_sweep(elements: u64) -> u64 {
    // Two half-sweeps, each loading three neighbours and storing one value
    // for every interior point.
    2 * 4 * elements.saturating_sub(2)
}

/// Address stream of a pattern; each item is (is_store, address).
fn address_stream(spec: &PatternSpec) -> Box<dyn Iterator<Item = (bool, u64)>> {
    let base = spec.base;
    let e = u64::from(spec.element_size);
    let wrap = spec.footprint_bytes;
    let offset = move |raw: u64| wrap.map_or(raw, |w| raw % w);
    match spec.kind.clone() {
        PatternKind::Sequential => Box::new((0..).map(move |i: u64| (false, base + offset(i * e)))),
        PatternKind::Strided { stride_bytes } => {
            Box::new((0..).map(move |i: u64| (false, base + offset(i * stride_bytes))))
        }
        PatternKind::Random { range_bytes, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let slots = range_bytes / e;
            Box::new(std::iter::repeat_with(move || {
                (false, base + rng.random_range(0..slots) * e)
            }))
        }
        PatternKind::PointerChase {
            nodes,
            node_bytes,
            seed,
        } => {
            let next = cyclic_permutation(nodes, seed);
            let mut cur = 0u64;
            Box::new(std::iter::repeat_with(move || {
                let addr = base + cur * node_bytes;
                cur = next[cur as usize];
                (false, addr)
            }))
        }
        PatternKind::Stencil1d {
            array_bytes,
            sweeps,
        } => {
            let n = array_bytes / e;
            let a = base;
            let b = base + n * e;
            let half = move |src: u64, dst: u64| {
                (1..n - 1).flat_map(move |i| {
                    [
                        (false, src + (i - 1) * e),
                        (false, src + i * e),
                        (false, src + (i + 1) * e),
                        (true, dst + i * e),
                    ]
                })
            };
            Box::new((0..sweeps).flat_map(move |_| half(a, b).chain(half(b, a))))
        }
        PatternKind::Diagonal {
            matrix_dim,
            element_bytes,
        } => {
            let n = matrix_dim;
            let e = u64::from(element_bytes);
            let step = diagonal_step(n);
            Box::new((0..n).flat_map(move |t| {
                let d = (t * step) % n;
                (0..n).flat_map(move |i| {
                    let addr = base + (i * n + (i + d) % n) * e;
                    [(false, addr), (true, addr)]
                })
            }))
        }
    }
}

/// Smallest step >= n/2 + 1 coprime with n, so `t*step mod n` visits every diagonal.
fn diagonal_step(n: u64) -> u64 {
    if n <= 2 {
        return 1;
    }
    let mut step = n / 2 + 1;
    while gcd(step, n) != 1 {
        step += 1;
    }
    step
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Sattolo's algorithm: a uniformly random permutation with a single cycle.
fn cyclic_permutation(n: u64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next: Vec<u64> = (0..n).collect();
    for i in (1..n as usize).rev() {
        let j = rng.random_range(0..i);
        next.swap(i, j);
    }
    next
}

struct Emitter<'a> {
    spec: &'a PatternSpec,
    records: Vec<InstructionRecord>,
    compute_emitted: u64,
}

impl Emitter<'_> {
    fn block_of(&self, seq: u64) -> u64 {
        seq / u64::from(self.spec.block_len)
    }

    fn block_reg(block: u64) -> RegId {
        RegId((block % u64::from(u32::MAX)) as u32 + 1)
    }

    fn push(&mut self, opcode: OpcodeClass, mem: Option<MemAccess>) {
        let seq = self.records.len() as u64;
        let block = self.block_of(seq);
        let writes = opcode != OpcodeClass::Store;
        let (dest, sources): (Option<RegId>, SmallVec<[RegId; 2]>) = match self.spec.dep_shape {
            DepShape::Independent => (
                writes.then_some(RegId((seq % 32) as u32 + 1)),
                SmallVec::new(),
            ),
            DepShape::Chain => {
                let sources = if seq == 0 {
                    SmallVec::new()
                } else {
                    smallvec::smallvec![RegId(1)]
                };
                (writes.then_some(RegId(1)), sources)
            }
            DepShape::Fanout(k) => {
                let sources = if block == 0 {
                    SmallVec::new()
                } else {
                    smallvec::smallvec![Self::block_reg((block - 1) / u64::from(k))]
                };
                (writes.then(|| Self::block_reg(block)), sources)
            }
        };
        self.records.push(InstructionRecord {
            seq_id: seq,
            opcode,
            bb_id: block,
            dest,
            sources,
            mem,
        });
    }

    fn push_compute(&mut self) {
        let ops = &self.spec.compute_ops;
        let op = ops[(self.compute_emitted % ops.len() as u64) as usize];
        self.compute_emitted += 1;
        self.push(op, None);
    }
}

/// Generates the trace described by `spec`.
pub fn generate_synthetic(spec: &PatternSpec) -> Result<Trace, InvalidPattern> {
    spec.check()?;
    let n = spec.n_accesses;
    let label = spec.kind.label();
    let meta = TraceMeta {
        name: spec.name.clone().unwrap_or_else(|| label.to_string()),
        element_size: Some(spec.access_size()),
        source: TraceSource::Synthetic(label.to_string()),
    };

    let mut em = Emitter {
        spec,
        records: Vec::new(),
        compute_emitted: 0,
    };

    if spec.compute_mix >= 1.0 {
        em.records.reserve(n as usize);
        for _ in 0..n {
            em.push_compute();
        }
        return Ok(Trace::new(meta, em.records));
    }

    // Compute instructions are spread evenly: after access i the running
    // compute count is floor((i+1) * mix / (1 - mix)).
    let ratio = spec.compute_mix / (1.0 - spec.compute_mix);
    let expected = n + (n as f64 * ratio) as u64;
    em.records.reserve(expected as usize);
    let size = spec.access_size();
    for (i, (is_store, addr)) in address_stream(spec).take(n as usize).enumerate() {
        let opcode = if is_store {
            OpcodeClass::Store
        } else {
            OpcodeClass::Load
        };
        em.push(opcode, Some(MemAccess { addr, size }));
        let target = ((i as u64 + 1) as f64 * ratio) as u64;
        while em.compute_emitted < target {
            em.push_compute();
        }
    }
    Ok(Trace::new(meta, em.records))
}
