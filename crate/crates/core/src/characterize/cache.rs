//! Fully associative LRU cache models over line-granular addresses.
//!
//! Two engines share one contract. [`simulate_lru`] computes exact stack
//! (reuse) distances with a Fenwick tree over access timestamps, which gives
//! the miss count for the requested capacity and a reuse histogram in one pass.
//! [`LruCache`] is a bounded O(1) cache used where only hit/miss matters.
//! An access is attributed to the line holding its first byte.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::CharError;
use crate::trace::Trace;

pub(crate) fn check_geometry(line_size: u64, capacity: u64) -> Result<(), CharError> {
    if !line_size.is_power_of_two() {
        return Err(CharError::invalid(format!(
            "line size {line_size} is not a power of two"
        )));
    }
    if !capacity.is_power_of_two() {
        return Err(CharError::invalid(format!(
            "capacity {capacity} is not a power of two"
        )));
    }
    if capacity < line_size {
        return Err(CharError::invalid(format!(
            "capacity {capacity} is smaller than line size {line_size}"
        )));
    }
    Ok(())
}

/// Reuse distances bucketed by powers of two: bucket 0 holds distance 0,
/// bucket `k >= 1` holds distances in `[2^(k-1), 2^k)`. Cold accesses are
/// counted separately and excluded from the mean.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReuseHistogram {
    pub buckets: Vec<u64>,
    pub cold: u64,
    pub distance_sum: u64,
}

impl ReuseHistogram {
    pub fn bucket_of(distance: u64) -> usize {
        if distance == 0 {
            0
        } else {
            64 - distance.leading_zeros() as usize
        }
    }

    fn record(&mut self, distance: u64) {
        let b = Self::bucket_of(distance);
        if self.buckets.len() <= b {
            self.buckets.resize(b + 1, 0);
        }
        self.buckets[b] += 1;
        self.distance_sum += distance;
    }

    /// Accesses with a finite reuse distance.
    pub fn reuses(&self) -> u64 {
        self.buckets.iter().sum()
    }

    pub fn mean_distance(&self) -> Option<f64> {
        let n = self.reuses();
        (n > 0).then(|| self.distance_sum as f64 / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LruStats {
    pub line_size: u64,
    pub capacity: u64,
    pub accesses: u64,
    /// Cold plus capacity misses.
    pub misses: u64,
    pub distinct_lines: u64,
    pub reuse: ReuseHistogram,
}

/// Fenwick tree of 0/1 marks, one slot per access timestamp.
struct Fenwick {
    tree: Vec<u32>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick {
            tree: vec![0; n + 1],
        }
    }

    fn add(&mut self, pos: usize, delta: i32) {
        let mut i = pos + 1;
        while i < self.tree.len() {
            self.tree[i] = self.tree[i].wrapping_add_signed(delta);
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of marks in `[0, pos)`.
    fn prefix(&self, pos: usize) -> u64 {
        let mut i = pos;
        let mut s = 0u64;
        while i > 0 {
            s += u64::from(self.tree[i]);
            i &= i - 1;
        }
        s
    }
}

/// Exact stack distances for a stream of line addresses.
pub fn stack_distances<I>(lines: I, n_hint: usize) -> impl Iterator<Item = Option<u64>>
where
    I: IntoIterator<Item = u64>,
{
    let mut marks = Fenwick::new(n_hint.max(1));
    let mut last: FxHashMap<u64, usize> = FxHashMap::default();
    lines.into_iter().enumerate().map(move |(t, line)| {
        if t + 1 >= marks.tree.len() {
            // Grow geometrically; rebuild from the live timestamps.
            let mut grown = Fenwick::new(marks.tree.len() * 2);
            for &ts in last.values() {
                grown.add(ts, 1);
            }
            marks = grown;
        }
        let distance = last.insert(line, t).map(|prev| {
            let d = marks.prefix(t) - marks.prefix(prev + 1);
            marks.add(prev, -1);
            d
        });
        marks.add(t, 1);
        distance
    })
}

/// Replays the trace's memory accesses through a fully associative LRU cache.
pub fn simulate_lru(trace: &Trace, line_size: u64, capacity: u64) -> Result<LruStats, CharError> {
    check_geometry(line_size, capacity)?;
    let shift = line_size.trailing_zeros();
    let capacity_lines = capacity / line_size;
    let n = trace.memory_access_count();

    let mut stats = LruStats {
        line_size,
        capacity,
        accesses: 0,
        misses: 0,
        distinct_lines: 0,
        reuse: ReuseHistogram::default(),
    };
    for distance in stack_distances(trace.addresses().map(|a| a >> shift), n) {
        stats.accesses += 1;
        match distance {
            None => {
                stats.misses += 1;
                stats.distinct_lines += 1;
                stats.reuse.cold += 1;
            }
            Some(d) => {
                if d >= capacity_lines {
                    stats.misses += 1;
                }
                stats.reuse.record(d);
            }
        }
    }
    Ok(stats)
}

const NIL: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Slot {
    line: u64,
    prev: u32,
    next: u32,
}

/// Bounded fully associative LRU cache of line addresses.
pub struct LruCache {
    capacity: usize,
    index: FxHashMap<u64, u32>,
    slots: Vec<Slot>,
    head: u32,
    tail: u32,
}

impl LruCache {
    pub fn new(capacity_lines: usize) -> Self {
        assert!(capacity_lines > 0, "cache needs at least one line");
        LruCache {
            capacity: capacity_lines,
            index: FxHashMap::with_capacity_and_hasher(capacity_lines, Default::default()),
            slots: Vec::with_capacity(capacity_lines),
            head: NIL,
            tail: NIL,
        }
    }

    fn unlink(&mut self, i: u32) {
        let Slot { prev, next, .. } = self.slots[i as usize];
        match prev {
            NIL => self.head = next,
            p => self.slots[p as usize].next = next,
        }
        match next {
            NIL => self.tail = prev,
            n => self.slots[n as usize].prev = prev,
        }
    }

    fn push_front(&mut self, i: u32) {
        self.slots[i as usize].prev = NIL;
        self.slots[i as usize].next = self.head;
        if self.head != NIL {
            self.slots[self.head as usize].prev = i;
        }
        self.head = i;
        if self.tail == NIL {
            self.tail = i;
        }
    }

    /// Touches `line`; returns `true` on a hit.
    pub fn access(&mut self, line: u64) -> bool {
        if let Some(&i) = self.index.get(&line) {
            if self.head != i {
                self.unlink(i);
                self.push_front(i);
            }
            return true;
        }
        let slot = if self.slots.len() < self.capacity {
            self.slots.push(Slot {
                line,
                prev: NIL,
                next: NIL,
            });
            (self.slots.len() - 1) as u32
        } else {
            let victim = self.tail;
            self.unlink(victim);
            self.index.remove(&self.slots[victim as usize].line);
            self.slots[victim as usize].line = line;
            victim
        };
        self.index.insert(line, slot);
        self.push_front(slot);
        false
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

/// Miss count of a fully associative LRU cache; agrees with [`simulate_lru`].
pub fn count_misses(trace: &Trace, line_size: u64, capacity: u64) -> Result<u64, CharError> {
    check_geometry(line_size, capacity)?;
    let shift = line_size.trailing_zeros();
    let mut cache = LruCache::new((capacity / line_size) as usize);
    Ok(trace
        .addresses()
        .filter(|&a| !cache.access(a >> shift))
        .count() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchyMisses {
    pub accesses: u64,
    pub l1_misses: u64,
    pub l2_misses: u64,
}

impl HierarchyMisses {
    /// `(m1, m2)`: L1 misses per access and L2 misses per L1 miss.
    pub fn rates(&self) -> (f64, f64) {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        (
            ratio(self.l1_misses, self.accesses),
            ratio(self.l2_misses, self.l1_misses),
        )
    }
}

/// Two-level hierarchy: the L2 sees only the L1 miss stream.
pub fn simulate_hierarchy(
    trace: &Trace,
    line_size: u64,
    l1_capacity: u64,
    l2_capacity: u64,
) -> Result<HierarchyMisses, CharError> {
    check_geometry(line_size, l1_capacity)?;
    check_geometry(line_size, l2_capacity)?;
    let shift = line_size.trailing_zeros();
    let mut l1 = LruCache::new((l1_capacity / line_size) as usize);
    let mut l2 = LruCache::new((l2_capacity / line_size) as usize);
    let mut out = HierarchyMisses {
        accesses: 0,
        l1_misses: 0,
        l2_misses: 0,
    };
    for addr in trace.addresses() {
        let line = addr >> shift;
        out.accesses += 1;
        if !l1.access(line) {
            out.l1_misses += 1;
            if !l2.access(line) {
                out.l2_misses += 1;
            }
        }
    }
    Ok(out)
}
