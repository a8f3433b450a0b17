//! Offload recommendations: a workload signature is run through the analytic
//! model and checked against metric thresholds.
//!
//! A kernel is offloaded when the model predicts a speedup of at least
//! `speedup_min` and at least two of three metric checks pass: high memory
//! entropy, low spatial locality, enough parallelism. The threshold defaults
//! are heuristics, not measured values.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::characterize::{WorkloadSignature, NO_MEMORY_STREAM};
use crate::model::{compare, EnergyParams, ModelError, SystemConfig, WorkloadProfile};

pub const HEURISTIC_NOTE: &str = "thresholds are heuristic defaults";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffloadThresholds {
    /// Bits, compared against the finest-granularity entropy point.
    pub entropy_min: f64,
    pub spatial_max: f64,
    /// Compared against `max(dlp_weighted, bb_parallelism)`.
    pub parallelism_min: f64,
    /// Minimum normalized delay (host / host+NMC).
    pub speedup_min: f64,
}

impl Default for OffloadThresholds {
    fn default() -> Self {
        OffloadThresholds {
            entropy_min: 10.0,
            spatial_max: 0.4,
            parallelism_min: 4.0,
            speedup_min: 1.1,
        }
    }
}

impl OffloadThresholds {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.spatial_max) {
            return Err(format!("spatial_max {} outside [0, 1]", self.spatial_max));
        }
        for (name, v) in [
            ("entropy_min", self.entropy_min),
            ("parallelism_min", self.parallelism_min),
            ("speedup_min", self.speedup_min),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Offload,
    KeepOnHost,
    Borderline,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Offload => "offload",
            Verdict::KeepOnHost => "keep_on_host",
            Verdict::Borderline => "borderline",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricFlags {
    pub high_entropy: bool,
    pub low_spatial_locality: bool,
    pub parallel: bool,
}

impl MetricFlags {
    pub fn passed(&self) -> usize {
        [self.high_entropy, self.low_spatial_locality, self.parallel]
            .iter()
            .filter(|&&f| f)
            .count()
    }

    pub fn quorum(&self) -> bool {
        self.passed() >= 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffloadRecommendation {
    pub kernel: String,
    pub verdict: Verdict,
    pub metric_flags: MetricFlags,
    pub predicted_speedup: f64,
    pub predicted_energy_ratio: f64,
    pub notes: Vec<String>,
}

/// Whole-kernel offload profile from measured counts and miss rates.
pub fn profile_from_signature(sig: &WorkloadSignature) -> WorkloadProfile {
    let rates = sig
        .measured_miss_rates
        .unwrap_or(crate::characterize::MissRates { m1: 0.0, m2: 0.0 });
    WorkloadProfile {
        n_instr: sig.totals.instructions as f64,
        n_mem: sig.totals.memory_accesses as f64,
        m1: rates.m1,
        m2: rates.m2,
        offload_fraction: 1.0,
        parallel_fraction: 1.0,
    }
}

pub fn metric_flags(sig: &WorkloadSignature, th: &OffloadThresholds) -> MetricFlags {
    let entropy = sig.entropy.as_ref().and_then(|c| c.finest());
    let spatial = sig.spatial.as_ref().map(|c| c.total);
    MetricFlags {
        high_entropy: entropy.is_some_and(|h| h >= th.entropy_min),
        low_spatial_locality: spatial.is_some_and(|s| s <= th.spatial_max),
        parallel: sig.dlp_weighted.max(sig.bb_parallelism) >= th.parallelism_min,
    }
}

pub fn score_kernel(
    sig: &WorkloadSignature,
    s: &SystemConfig,
    ep: &EnergyParams,
    th: &OffloadThresholds,
) -> Result<OffloadRecommendation, ModelError> {
    score_kernel_with_profile(sig, &profile_from_signature(sig), s, ep, th)
}

/// As [`score_kernel`], with an explicit model profile.
pub fn score_kernel_with_profile(
    sig: &WorkloadSignature,
    profile: &WorkloadProfile,
    s: &SystemConfig,
    ep: &EnergyParams,
    th: &OffloadThresholds,
) -> Result<OffloadRecommendation, ModelError> {
    let cmp = compare(profile, s, ep)?;
    let flags = metric_flags(sig, th);
    let speedup = cmp.normalized_delay;
    let mut notes = Vec::new();

    let verdict = if !sig.has_memory_stream() {
        notes.push(NO_MEMORY_STREAM.to_string());
        Verdict::KeepOnHost
    } else if speedup >= th.speedup_min && flags.quorum() {
        Verdict::Offload
    } else if speedup >= 1.0 {
        Verdict::Borderline
    } else {
        Verdict::KeepOnHost
    };

    Ok(OffloadRecommendation {
        kernel: sig.name.clone(),
        verdict,
        metric_flags: flags,
        predicted_speedup: speedup,
        predicted_energy_ratio: cmp.normalized_energy,
        notes,
    })
}

/// Ranking order used by [`rank_kernels`].
pub fn rank_cmp(a: &OffloadRecommendation, b: &OffloadRecommendation) -> Ordering {
    b.predicted_speedup
        .total_cmp(&a.predicted_speedup)
        .then_with(|| {
            b.predicted_energy_ratio
                .total_cmp(&a.predicted_energy_ratio)
        })
        .then_with(|| a.kernel.cmp(&b.kernel))
}

/// Descending speedup, then descending energy ratio, then ascending name.
pub fn rank_kernels(mut recs: Vec<OffloadRecommendation>) -> Vec<OffloadRecommendation> {
    recs.sort_by(rank_cmp);
    recs
}
