//! Spatial locality from line-size doubling.
//!
//! For a pair `(L, 2L)` under a fixed fully associative LRU capacity, the
//! score is the share of misses at `L` that doubling the line removes,
//! rescaled so that exact halving (unit-stride streaming) scores 1:
//! `clamp(2 * (M(L) - M(2L)) / M(L), 0, 1)`, and 1 when `M(L) = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{check_geometry, count_misses};
use super::CharError;
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialPair {
    pub from_line: u64,
    pub to_line: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialLocalityCurve {
    pub pairs: Vec<SpatialPair>,
    pub weights: Vec<f64>,
    pub total: f64,
    pub cache_capacity: u64,
}

pub(crate) fn pair_score(misses_fine: u64, misses_coarse: u64) -> f64 {
    if misses_fine == 0 {
        return 1.0;
    }
    let removed = misses_fine as f64 - misses_coarse as f64;
    (2.0 * removed / misses_fine as f64).clamp(0.0, 1.0)
}

fn check_pair(from_line: u64, capacity: u64) -> Result<(), CharError> {
    check_geometry(from_line, capacity)?;
    if 2 * from_line > capacity {
        return Err(CharError::invalid(format!(
            "doubled line {} exceeds capacity {capacity}",
            2 * from_line
        )));
    }
    Ok(())
}

pub fn spatial_locality_pair(
    trace: &Trace,
    from_line: u64,
    capacity: u64,
) -> Result<f64, CharError> {
    check_pair(from_line, capacity)?;
    if trace.memory_access_count() == 0 {
        return Err(CharError::EmptyAddressStream);
    }
    let fine = count_misses(trace, from_line, capacity)?;
    let coarse = count_misses(trace, 2 * from_line, capacity)?;
    Ok(pair_score(fine, coarse))
}

/// Uniform weights over `n` pairs.
pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Per-pair scores and their weighted total. `weights` defaults to uniform.
pub fn spatial_locality_total(
    trace: &Trace,
    from_lines: &[u64],
    capacity: u64,
    weights: Option<&[f64]>,
) -> Result<SpatialLocalityCurve, CharError> {
    if from_lines.is_empty() {
        return Err(CharError::invalid(
            "at least one line-size pair is required",
        ));
    }
    let weights = match weights {
        Some(w) => w.to_vec(),
        None => uniform_weights(from_lines.len()),
    };
    if weights.len() != from_lines.len() {
        return Err(CharError::invalid(format!(
            "{} weights for {} line-size pairs",
            weights.len(),
            from_lines.len()
        )));
    }
    if weights.iter().any(|&w| w.is_nan() || w < 0.0)
        || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(CharError::invalid(
            "weights must be non-negative and sum to 1",
        ));
    }
    for &l in from_lines {
        check_pair(l, capacity)?;
    }
    if trace.memory_access_count() == 0 {
        return Err(CharError::EmptyAddressStream);
    }

    // Each distinct line size is simulated once.
    let mut sizes: Vec<u64> = from_lines.iter().flat_map(|&l| [l, 2 * l]).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let misses: Vec<u64> = sizes
        .par_iter()
        .map(|&l| count_misses(trace, l, capacity))
        .collect::<Result<_, _>>()?;
    let misses_at = |l: u64| misses[sizes.binary_search(&l).expect("simulated size")];

    let pairs: Vec<SpatialPair> = from_lines
        .iter()
        .map(|&l| SpatialPair {
            from_line: l,
            to_line: 2 * l,
            score: pair_score(misses_at(l), misses_at(2 * l)),
        })
        .collect();
    let total = pairs.iter().zip(&weights).map(|(p, w)| w * p.score).sum();
    Ok(SpatialLocalityCurve {
        pairs,
        weights,
        total,
        cache_capacity: capacity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{generate_synthetic, PatternSpec};

    const CAP: u64 = 32 * 1024;

    fn gen(spec: PatternSpec) -> Trace {
        generate_synthetic(&spec).unwrap()
    }

    #[test]
    fn sequential_scores_one() {
        // 1 MB footprint, 32x the capacity
        let t = gen(PatternSpec::sequential(1 << 17));
        for l in [8, 16, 32, 64] {
            assert_eq!(spatial_locality_pair(&t, l, CAP).unwrap(), 1.0);
        }
        let c = spatial_locality_total(&t, &[8, 16, 32], CAP, None).unwrap();
        assert_eq!(c.total, 1.0);
        assert_eq!(c.pairs.len(), 3);
        assert_eq!(c.pairs[2].to_line, 64);
    }

    #[test]
    fn scattered_scores_near_zero() {
        let t = gen(PatternSpec::random(1 << 32, 9, 20_000));
        let c = spatial_locality_total(&t, &[8, 16, 32, 64], CAP, None).unwrap();
        assert!(c.total < 0.01, "total {}", c.total);
    }

    #[test]
    fn strided_pairs() {
        let l = 32;
        let wide = gen(PatternSpec::strided(2 * l, 1 << 15));
        assert_eq!(spatial_locality_pair(&wide, l, CAP).unwrap(), 0.0);
        let narrow = gen(PatternSpec::strided(l / 2, 1 << 16));
        assert_eq!(spatial_locality_pair(&narrow, l, CAP).unwrap(), 1.0);
    }

    #[test]
    fn all_hits_is_perfect_locality() {
        assert_eq!(pair_score(0, 0), 1.0);
        assert_eq!(pair_score(10, 12), 0.0);
        assert_eq!(pair_score(10, 5), 1.0);
        assert_eq!(pair_score(10, 8), 0.4);
    }

    #[test]
    fn weighted_total() {
        let t = gen(PatternSpec::sequential(1 << 15));
        let c = spatial_locality_total(&t, &[8, 16], CAP, Some(&[0.25, 0.75])).unwrap();
        assert_eq!(c.weights, vec![0.25, 0.75]);
        let expected = 0.25 * c.pairs[0].score + 0.75 * c.pairs[1].score;
        assert_eq!(c.total, expected);
    }

    #[test]
    fn argument_errors() {
        let t = gen(PatternSpec::sequential(16));
        assert!(spatial_locality_total(&t, &[8, 16], CAP, Some(&[1.0])).is_err());
        assert!(spatial_locality_total(&t, &[8], CAP, Some(&[0.5])).is_err());
        assert!(spatial_locality_pair(&t, 64, 64).is_err());
        let compute = gen(PatternSpec::sequential(16).with_compute_mix(1.0));
        assert!(matches!(
            spatial_locality_pair(&compute, 8, CAP),
            Err(CharError::EmptyAddressStream)
        ));
    }
}
