//! Shannon entropy of the memory address stream.
//!
//! `H = -sum p(a) log2 p(a)` over the values `addr >> bit_reduction`. Dropping
//! low-order bits emulates coarser line granularity. Addresses are sorted once;
//! shifting preserves order, so every granularity is a single run-length scan.

use serde::{Deserialize, Serialize};

use super::CharError;
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub bit_reduction: u32,
    pub entropy_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyCurve {
    pub points: Vec<EntropyPoint>,
}

impl EntropyCurve {
    pub fn at(&self, bit_reduction: u32) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.bit_reduction == bit_reduction)
            .map(|p| p.entropy_bits)
    }

    /// Entropy at the finest granularity in the curve.
    pub fn finest(&self) -> Option<f64> {
        self.points.first().map(|p| p.entropy_bits)
    }
}

fn check_reduction(bit_reduction: u32) -> Result<(), CharError> {
    if bit_reduction > 63 {
        return Err(CharError::invalid(format!(
            "bit reduction {bit_reduction} outside [0, 63]"
        )));
    }
    Ok(())
}

pub(crate) fn sorted_addresses(trace: &Trace) -> Result<Vec<u64>, CharError> {
    let mut addrs: Vec<u64> = trace.addresses().collect();
    if addrs.is_empty() {
        return Err(CharError::EmptyAddressStream);
    }
    addrs.sort_unstable();
    Ok(addrs)
}

pub(crate) fn entropy_of_sorted(sorted: &[u64], bit_reduction: u32) -> f64 {
    let n = sorted.len() as f64;
    let mut h = 0.0;
    let mut run = 0u64;
    let mut current = None;
    let mut close = |count: u64| {
        if count > 0 {
            let p = count as f64 / n;
            h -= p * p.log2();
        }
    };
    for &a in sorted {
        let sym = a >> bit_reduction;
        if current == Some(sym) {
            run += 1;
        } else {
            close(run);
            current = Some(sym);
            run = 1;
        }
    }
    close(run);
    // -0.0 for single-symbol streams
    h.max(0.0)
}

pub fn memory_entropy(trace: &Trace, bit_reduction: u32) -> Result<f64, CharError> {
    check_reduction(bit_reduction)?;
    Ok(entropy_of_sorted(&sorted_addresses(trace)?, bit_reduction))
}

/// One point per reduction; `reductions` must be ascending.
pub fn entropy_curve(trace: &Trace, reductions: &[u32]) -> Result<EntropyCurve, CharError> {
    if reductions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CharError::invalid(
            "bit reductions must be strictly ascending",
        ));
    }
    for &r in reductions {
        check_reduction(r)?;
    }
    let sorted = sorted_addresses(trace)?;
    Ok(EntropyCurve {
        points: reductions
            .iter()
            .map(|&r| EntropyPoint {
                bit_reduction: r,
                entropy_bits: entropy_of_sorted(&sorted, r),
            })
            .collect(),
    })
}
