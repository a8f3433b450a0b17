//! Dependence DAG, data-level parallelism and basic-block-level parallelism.
//!
//! An instruction depends on the latest prior writer of each of its source
//! registers and, for loads, on the latest prior store to the same line.
//! `depth(i) = 1 + max(depth(producers))`, 0 without producers. DLP of an
//! opcode class is its instruction count over the number of distinct depth
//! levels it occupies in the whole-program DAG.

use std::collections::{BTreeMap, VecDeque};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::CharError;
use crate::trace::{OpcodeClass, RegId, Trace};

#[derive(Debug, Clone, Copy)]
pub struct DagOptions {
    /// Granularity, in bytes, at which store-to-load dependences are tracked.
    pub store_granularity: u64,
    /// Upper bound on tracked store lines; the least recently stored are dropped.
    pub max_tracked_lines: usize,
}

impl Default for DagOptions {
    fn default() -> Self {
        DagOptions {
            store_granularity: 64,
            max_tracked_lines: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Producer {
    depth: u32,
    block: u32,
}

/// Most recent store per line, bounded by evicting the oldest stores.
struct StoreTable {
    latest: FxHashMap<u64, (Producer, u64)>,
    order: VecDeque<(u64, u64)>,
    stamp: u64,
    cap: usize,
}

impl StoreTable {
    fn new(cap: usize) -> Self {
        StoreTable {
            latest: FxHashMap::default(),
            order: VecDeque::new(),
            stamp: 0,
            cap: cap.max(1),
        }
    }

    fn get(&self, line: u64) -> Option<Producer> {
        self.latest.get(&line).map(|&(p, _)| p)
    }

    fn insert(&mut self, line: u64, p: Producer) {
        self.stamp += 1;
        self.latest.insert(line, (p, self.stamp));
        self.order.push_back((line, self.stamp));
        while self.latest.len() > self.cap {
            let (l, s) = self.order.pop_front().expect("order covers every entry");
            if self.latest.get(&l).is_some_and(|&(_, cur)| cur == s) {
                self.latest.remove(&l);
            }
        }
        if self.order.len() > 2 * self.cap + 1024 {
            let latest = &self.latest;
            self.order
                .retain(|(l, s)| latest.get(l).is_some_and(|&(_, cur)| cur == *s));
        }
    }
}

/// Growable bitset of occupied depth levels.
#[derive(Debug, Clone, Default)]
struct LevelSet {
    words: Vec<u64>,
}

impl LevelSet {
    fn insert(&mut self, level: u32) {
        let (w, b) = ((level / 64) as usize, level % 64);
        if self.words.len() <= w {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1 << b;
    }

    fn len(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelOccupancy {
    pub instructions: u64,
    pub levels: u64,
}

#[derive(Debug, Clone)]
pub struct DependenceDag {
    pub depths: Vec<u32>,
    pub critical_path_len: u64,
    pub occupancy: BTreeMap<OpcodeClass, LevelOccupancy>,
    /// Dynamic basic blocks: maximal runs of consecutive records sharing a `bb_id`.
    pub block_count: u64,
    /// Longest chain of the block-level DAG, counted in blocks.
    pub block_critical_path: u64,
}

impl DependenceDag {
    pub fn bb_parallelism(&self) -> Result<f64, CharError> {
        if self.block_count == 0 {
            return Err(CharError::EmptyTrace);
        }
        Ok(self.block_count as f64 / self.block_critical_path as f64)
    }
}

pub fn build_dependence_dag(trace: &Trace) -> DependenceDag {
    build_dependence_dag_with(trace, DagOptions::default())
}

pub fn build_dependence_dag_with(trace: &Trace, opts: DagOptions) -> DependenceDag {
    let shift = opts.store_granularity.max(1).ilog2();
    let mut writers: FxHashMap<RegId, Producer> = FxHashMap::default();
    let mut stores = StoreTable::new(opts.max_tracked_lines);
    let mut depths = Vec::with_capacity(trace.len());
    let mut levels: [LevelSet; 9] = Default::default();
    let mut counts = [0u64; 9];
    let mut block_depths: Vec<u32> = Vec::new();
    let mut prev_bb = None;
    let mut max_depth = 0u32;

    for r in trace {
        if prev_bb != Some(r.bb_id) {
            block_depths.push(0);
            prev_bb = Some(r.bb_id);
        }
        let block = (block_depths.len() - 1) as u32;

        let mem_producer = match (r.opcode, r.mem) {
            (OpcodeClass::Load, Some(m)) => stores.get(m.addr >> shift),
            _ => None,
        };
        let producers = r
            .sources
            .iter()
            .filter_map(|s| writers.get(s).copied())
            .chain(mem_producer);

        let mut depth = 0u32;
        let mut block_depth = block_depths[block as usize];
        for p in producers {
            depth = depth.max(p.depth + 1);
            if p.block != block {
                block_depth = block_depth.max(block_depths[p.block as usize] + 1);
            }
        }
        block_depths[block as usize] = block_depth;

        let me = Producer { depth, block };
        if let Some(d) = r.dest {
            writers.insert(d, me);
        }
        if let (OpcodeClass::Store, Some(m)) = (r.opcode, r.mem) {
            stores.insert(m.addr >> shift, me);
        }

        let c = r.opcode.index();
        counts[c] += 1;
        levels[c].insert(depth);
        max_depth = max_depth.max(depth);
        depths.push(depth);
    }

    let occupancy = OpcodeClass::ALL
        .iter()
        .filter(|c| counts[c.index()] > 0)
        .map(|&c| {
            (
                c,
                LevelOccupancy {
                    instructions: counts[c.index()],
                    levels: levels[c.index()].len(),
                },
            )
        })
        .collect();

    let critical_path_len = if depths.is_empty() {
        0
    } else {
        u64::from(max_depth) + 1
    };
    let block_critical_path = block_depths.iter().max().map_or(0, |&d| u64::from(d) + 1);

    DependenceDag {
        depths,
        critical_path_len,
        occupancy,
        block_count: block_depths.len() as u64,
        block_critical_path,
    }
}

/// `DLP_c = N_c / L_c` for every class present in `trace`.
pub fn dlp_per_opcode(dag: &DependenceDag, trace: &Trace) -> BTreeMap<OpcodeClass, f64> {
    let mut counts = [0u64; 9];
    for r in trace {
        counts[r.opcode.index()] += 1;
    }
    dag.occupancy
        .iter()
        .filter(|(c, _)| counts[c.index()] > 0)
        .map(|(&c, occ)| (c, counts[c.index()] as f64 / occ.levels as f64))
        .collect()
}

/// Instruction-share weighted mean of the per-class DLP.
pub fn dlp_weighted(
    per_opcode: &BTreeMap<OpcodeClass, f64>,
    trace: &Trace,
) -> Result<f64, CharError> {
    if trace.is_empty() {
        return Err(CharError::EmptyTrace);
    }
    let mut counts = [0u64; 9];
    for r in trace {
        counts[r.opcode.index()] += 1;
    }
    let total = trace.len() as f64;
    Ok(per_opcode
        .iter()
        .map(|(c, dlp)| counts[c.index()] as f64 / total * dlp)
        .sum())
}

/// Dynamic blocks over the critical path length of the block-level DAG.
pub fn bb_parallelism(trace: &Trace) -> Result<f64, CharError> {
    build_dependence_dag(trace).bb_parallelism()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{generate_synthetic, DepShape, InstructionRecord, PatternSpec, TraceMeta};

    fn trace(records: Vec<InstructionRecord>) -> Trace {
        Trace::new(TraceMeta::default(), records)
    }

    fn compute_only(n: u64, shape: DepShape, op: OpcodeClass, block_len: u32) -> Trace {
        generate_synthetic(
            &PatternSpec::sequential(n)
                .with_compute_mix(1.0)
                .with_compute_ops(vec![op])
                .with_dep_shape(shape)
                .with_block_len(block_len),
        )
        .unwrap()
    }

    #[test]
    fn independent_iadds() {
        let t = compute_only(10, DepShape::Independent, OpcodeClass::Iadd, 16);
        let dag = build_dependence_dag(&t);
        assert!(dag.depths.iter().all(|&d| d == 0));
        assert_eq!(dag.critical_path_len, 1);
    }

    #[test]
    fn chained_iadds() {
        let t = compute_only(10, DepShape::Chain, OpcodeClass::Iadd, 16);
        let dag = build_dependence_dag(&t);
        assert_eq!(dag.depths, (0..10).collect::<Vec<u32>>());
        assert_eq!(dag.critical_path_len, 10);
    }

    #[test]
    fn store_to_load_edge() {
        let t = trace(vec![
            InstructionRecord::compute(0, OpcodeClass::Iadd, 0).with_dest(1),
            InstructionRecord::memory(1, OpcodeClass::Store, 0, 0x100, 8).with_sources(&[1]),
            InstructionRecord::memory(2, OpcodeClass::Load, 0, 0x100, 8).with_dest(2),
        ]);
        let dag = build_dependence_dag(&t);
        assert_eq!(dag.depths, vec![0, 1, 2]);
    }

    #[test]
    fn store_table_is_bounded() {
        let recs = vec![
            InstructionRecord::memory(0, OpcodeClass::Store, 0, 0, 8),
            InstructionRecord::memory(1, OpcodeClass::Store, 0, 64, 8),
            InstructionRecord::memory(2, OpcodeClass::Store, 0, 128, 8),
            InstructionRecord::memory(3, OpcodeClass::Load, 0, 0, 8),
            InstructionRecord::memory(4, OpcodeClass::Load, 0, 128, 8),
        ];
        let t = trace(recs);
        let opts = DagOptions {
            store_granularity: 64,
            max_tracked_lines: 2,
        };
        let dag = build_dependence_dag_with(&t, opts);
        // line 0 was evicted, line 2 is still tracked
        assert_eq!(dag.depths[3], 0);
        assert_eq!(dag.depths[4], 1);
    }

    #[test]
    fn dlp_examples() {
        let t = compute_only(8, DepShape::Independent, OpcodeClass::Fadd, 16);
        let dag = build_dependence_dag(&t);
        let dlp = dlp_per_opcode(&dag, &t);
        assert_eq!(dlp[&OpcodeClass::Fadd], 8.0);

        let t = compute_only(8, DepShape::Chain, OpcodeClass::Fadd, 16);
        let dlp = dlp_per_opcode(&build_dependence_dag(&t), &t);
        assert_eq!(dlp[&OpcodeClass::Fadd], 1.0);
        assert_eq!(dlp.len(), 1);
    }

    #[test]
    fn four_chained_pairs() {
        // Brute-force census on the explicit 8-node DAG: pair k is (2k -> 2k+1),
        // so depths are [0,1,0,1,0,1,0,1]: two levels holding four nodes each.
        let mut recs = Vec::new();
        for k in 0..4u32 {
            let s = u64::from(2 * k);
            recs.push(InstructionRecord::compute(s, OpcodeClass::Iadd, 0).with_dest(10 + k));
            recs.push(
                InstructionRecord::compute(s + 1, OpcodeClass::Iadd, 0)
                    .with_dest(20 + k)
                    .with_sources(&[10 + k]),
            );
        }
        let t = trace(recs);
        let dag = build_dependence_dag(&t);
        let levels: std::collections::BTreeSet<u32> = dag.depths.iter().copied().collect();
        let expected = 8.0 / levels.len() as f64;
        assert_eq!(expected, 4.0);
        let dlp = dlp_per_opcode(&dag, &t);
        assert_eq!(dlp[&OpcodeClass::Iadd], expected);
        assert_eq!(dlp_weighted(&dlp, &t).unwrap(), 4.0);
    }

    #[test]
    fn weighted_mix() {
        let per: BTreeMap<_, _> = [(OpcodeClass::Iadd, 4.0), (OpcodeClass::Fmul, 2.0)].into();
        let recs = (0..10)
            .map(|i| {
                let op = if i % 2 == 0 {
                    OpcodeClass::Iadd
                } else {
                    OpcodeClass::Fmul
                };
                InstructionRecord::compute(i, op, 0)
            })
            .collect();
        assert_eq!(dlp_weighted(&per, &trace(recs)).unwrap(), 3.0);
        assert!(dlp_weighted(&per, &trace(vec![])).is_err());
    }

    #[test]
    fn block_parallelism_shapes() {
        let t = compute_only(64, DepShape::Independent, OpcodeClass::Iadd, 8);
        assert_eq!(bb_parallelism(&t).unwrap(), 8.0);
        let t = compute_only(64, DepShape::Chain, OpcodeClass::Iadd, 8);
        assert_eq!(bb_parallelism(&t).unwrap(), 1.0);
    }

    #[test]
    fn binary_tree_of_seven_blocks() {
        let t = compute_only(7 * 4, DepShape::Fanout(2), OpcodeClass::Iadd, 4);
        // Brute-force longest path on the explicit tree: parent(b) = (b-1)/2.
        let parent = |b: usize| (b - 1) / 2;
        let mut len = [1usize; 7];
        for b in 1..7 {
            len[b] = len[parent(b)] + 1;
        }
        let longest = *len.iter().max().unwrap();
        assert_eq!(longest, 3);
        assert_eq!(bb_parallelism(&t).unwrap(), 7.0 / longest as f64);
    }

    #[test]
    fn single_instruction_blocks_match_instruction_bound() {
        let t = compute_only(31, DepShape::Fanout(3), OpcodeClass::Fmul, 1);
        let dag = build_dependence_dag(&t);
        assert_eq!(
            dag.bb_parallelism().unwrap(),
            31.0 / dag.critical_path_len as f64
        );
    }

    #[test]
    fn empty_trace() {
        let dag = build_dependence_dag(&trace(vec![]));
        assert_eq!(dag.critical_path_len, 0);
        assert!(dag.bb_parallelism().is_err());
    }
}
