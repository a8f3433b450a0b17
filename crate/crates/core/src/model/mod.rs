//! First-order delay and energy model of a multi-core host versus a host with
//! near-memory compute units in the logic layer of a 3D-stacked DRAM.
//!
//! Quantities are SI: seconds, bytes, bytes/s, Hz. Energy coefficients are
//! kept in picojoules (per bit or per instruction) and watts, the units they
//! are usually quoted in.

mod delay;
mod energy;
mod sweep;

use serde::{Deserialize, Serialize};

pub use delay::{host_delay, nmc_delay};
pub use energy::{apply_energy, energy};
pub use sweep::{sweep, write_sweep_csv, GridAxis, SweepRow, SweepSpec, SWEEP_CSV_HEADER};

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * KIB;
pub const GIB: u64 = 1024 * MIB;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("invalid system configuration: {0}")]
    InvalidSystem(String),
    #[error("invalid energy parameters: {0}")]
    InvalidEnergy(String),
    #[error("invalid workload profile: {0}")]
    InvalidProfile(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_cores: u32,
    /// Hz
    pub f_host: f64,
    pub f_nmc: f64,
    /// bytes
    pub s_l1: u64,
    pub s_l2: u64,
    pub s_dram: u64,
    /// bytes/s, per core for L1 and shared for L2
    pub bw_l1: f64,
    pub bw_l2: f64,
    /// hit latencies in host cycles
    pub lat_l1: f64,
    pub lat_l2: f64,
    pub line_size: u64,
    pub n_vaults: u32,
    pub bw_per_vault: f64,
    pub n_links: u32,
    pub bw_per_link: f64,
    pub ipc_host: f64,
    pub ipc_nmc: f64,
    /// NMC cores; `None` places one core per vault. Always capped at `n_vaults`.
    pub n_nmc_cores: Option<u32>,
    /// Seconds charged once per offload.
    pub t_launch: f64,
    /// Fraction of the shorter of the host and NMC phases hidden by overlap.
    pub overlap: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_cores: 4,
            f_host: 3.0e9,
            f_nmc: 1.2e9,
            s_l1: 32 * KIB,
            s_l2: 256 * KIB,
            s_dram: 4 * GIB,
            bw_l1: 137.0e9,
            bw_l2: 137.0e9,
            lat_l1: 1.0,
            lat_l2: 2.0,
            line_size: 64,
            n_vaults: 16,
            bw_per_vault: 10.0e9,
            n_links: 4,
            bw_per_link: 16.0e9,
            ipc_host: 1.0,
            ipc_nmc: 1.0,
            n_nmc_cores: None,
            t_launch: 5.0e-6,
            overlap: 0.0,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), String> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be positive and finite, got {v}"))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), String> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be non-negative and finite, got {v}"))
    }
}

fn unit_interval(name: &str, v: f64) -> Result<(), String> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(format!("{name} must lie in [0, 1], got {v}"))
    }
}

impl SystemConfig {
    pub fn nmc_cores(&self) -> u32 {
        self.n_nmc_cores.unwrap_or(self.n_vaults).min(self.n_vaults)
    }

    pub fn external_bandwidth(&self) -> f64 {
        f64::from(self.n_links) * self.bw_per_link
    }

    pub fn internal_bandwidth(&self) -> f64 {
        f64::from(self.n_vaults) * self.bw_per_vault
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let check = || -> Result<(), String> {
            for (name, n) in [
                ("n_cores", self.n_cores),
                ("n_vaults", self.n_vaults),
                ("n_links", self.n_links),
                ("n_nmc_cores", self.n_nmc_cores.unwrap_or(1)),
            ] {
                if n == 0 {
                    return Err(format!("{name} must be at least 1"));
                }
            }
            for (name, v) in [
                ("f_host", self.f_host),
                ("f_nmc", self.f_nmc),
                ("bw_l1", self.bw_l1),
                ("bw_l2", self.bw_l2),
                ("bw_per_vault", self.bw_per_vault),
                ("bw_per_link", self.bw_per_link),
                ("ipc_host", self.ipc_host),
                ("ipc_nmc", self.ipc_nmc),
                ("line_size", self.line_size as f64),
            ] {
                positive(name, v)?;
            }
            for (name, v) in [
                ("lat_l1", self.lat_l1),
                ("lat_l2", self.lat_l2),
                ("t_launch", self.t_launch),
            ] {
                non_negative(name, v)?;
            }
            unit_interval("overlap", self.overlap)
        };
        check().map_err(ModelError::InvalidSystem)
    }
}

/// Energy coefficients: `e_*` in pJ/bit except `e_op_*` in pJ/instruction,
/// `p_*` in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub e_dram_layer: f64,
    pub e_logic_layer: f64,
    pub p_static_nmc: f64,
    pub e_l1_access: f64,
    pub e_l2_access: f64,
    pub e_offchip_link: f64,
    pub p_static_core: f64,
    pub p_static_cache_per_mb: f64,
    pub e_op_host: f64,
    pub e_op_nmc: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            e_dram_layer: 3.7,
            e_logic_layer: 1.5,
            p_static_nmc: 0.96,
            e_l1_access: 0.15,
            e_l2_access: 0.35,
            e_offchip_link: 6.0,
            p_static_core: 0.5,
            p_static_cache_per_mb: 0.25,
            e_op_host: 50.0,
            e_op_nmc: 20.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("e_dram_layer", self.e_dram_layer),
            ("e_logic_layer", self.e_logic_layer),
            ("p_static_nmc", self.p_static_nmc),
            ("e_l1_access", self.e_l1_access),
            ("e_l2_access", self.e_l2_access),
            ("e_offchip_link", self.e_offchip_link),
            ("p_static_core", self.p_static_core),
            ("p_static_cache_per_mb", self.p_static_cache_per_mb),
            ("e_op_host", self.e_op_host),
            ("e_op_nmc", self.e_op_nmc),
        ];
        fields
            .iter()
            .try_for_each(|&(n, v)| non_negative(n, v))
            .map_err(ModelError::InvalidEnergy)
    }
}

/// Abstract workload counts. Counts are reals so that fractional splits
/// between host and NMC stay exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub n_instr: f64,
    pub n_mem: f64,
    pub m1: f64,
    pub m2: f64,
    pub offload_fraction: f64,
    pub parallel_fraction: f64,
}

impl Default for WorkloadProfile {
    fn default() -> Self {
        WorkloadProfile {
            n_instr: 1.0e9,
            n_mem: 5.0e8,
            m1: 0.0,
            m2: 0.0,
            offload_fraction: 1.0,
            parallel_fraction: 1.0,
        }
    }
}

impl WorkloadProfile {
    pub fn validate(&self) -> Result<(), ModelError> {
        let check = || -> Result<(), String> {
            non_negative("n_instr", self.n_instr)?;
            non_negative("n_mem", self.n_mem)?;
            if self.n_mem > self.n_instr {
                return Err(format!(
                    "n_mem ({}) exceeds n_instr ({})",
                    self.n_mem, self.n_instr
                ));
            }
            unit_interval("m1", self.m1)?;
            unit_interval("m2", self.m2)?;
            unit_interval("offload_fraction", self.offload_fraction)?;
            unit_interval("parallel_fraction", self.parallel_fraction)
        };
        check().map_err(ModelError::InvalidProfile)
    }

    /// The part left on the host after offloading.
    pub fn residual(&self) -> WorkloadProfile {
        let keep = 1.0 - self.offload_fraction;
        WorkloadProfile {
            n_instr: self.n_instr * keep,
            n_mem: self.n_mem * keep,
            offload_fraction: 0.0,
            ..self.clone()
        }
    }
}

/// Bytes moved at each level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Traffic {
    pub l1: f64,
    pub l2: f64,
    pub offchip: f64,
    pub vault: f64,
}

/// Seconds attributed to each component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeBreakdown {
    pub host_compute: f64,
    pub nmc_compute: f64,
    pub launch: f64,
    pub l1: f64,
    pub l2: f64,
    pub offchip: f64,
    pub vault: f64,
    /// Credit for overlapping host and NMC phases, subtracted from the total.
    pub overlap: f64,
}

/// Joules attributed to each component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub l1: f64,
    pub l2: f64,
    pub offchip_link: f64,
    pub dram_layer: f64,
    pub logic_layer: f64,
    pub host_ops: f64,
    pub nmc_ops: f64,
    pub static_host: f64,
    pub static_nmc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub t_nonmem: f64,
    pub t_mem: f64,
    pub t_total: f64,
    pub e_dynamic: f64,
    pub e_static: f64,
    pub e_total: f64,
    pub traffic: Traffic,
    pub time: TimeBreakdown,
    pub energy: EnergyBreakdown,
    pub host_instructions: f64,
    pub nmc_instructions: f64,
    /// Whether near-memory units took part (their static power is charged).
    pub offloaded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub host: ModelResult,
    pub nmc: ModelResult,
    /// host / (host+NMC); above 1 favours the NMC system.
    pub normalized_delay: f64,
    pub normalized_energy: f64,
}

fn ratio(host: f64, nmc: f64) -> f64 {
    if host == nmc {
        1.0
    } else {
        host / nmc
    }
}

/// Evaluates both systems and normalizes the host against host+NMC.
pub fn compare(
    p: &WorkloadProfile,
    s: &SystemConfig,
    ep: &EnergyParams,
) -> Result<ComparisonResult, ModelError> {
    let host = host_delay(p, s)?;
    let nmc = nmc_delay(p, s)?;
    let (host, nmc) = energy(p, s, ep, &host, &nmc)?;
    Ok(ComparisonResult {
        normalized_delay: ratio(host.t_total, nmc.t_total),
        normalized_energy: ratio(host.e_total, nmc.e_total),
        host,
        nmc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn memory_dominated(m1: f64, m2: f64) -> WorkloadProfile {
        WorkloadProfile {
            m1,
            m2,
            ..WorkloadProfile::default()
        }
    }

    #[test]
    fn reference_platform_defaults() {
        let s = SystemConfig::default();
        assert_eq!(s.n_cores, 4);
        assert_eq!(s.f_host, 3.0e9);
        assert_eq!(s.f_nmc, 1.2e9);
        assert_eq!(s.s_l1, 32 * 1024);
        assert_eq!(s.s_l2, 256 * 1024);
        assert_eq!(s.s_dram, 4 << 30);
        assert_eq!(s.bw_l1, 137.0e9);
        assert_eq!(s.bw_l2, 137.0e9);
        assert_eq!((s.lat_l1, s.lat_l2), (1.0, 2.0));
        let ep = EnergyParams::default();
        assert_eq!(
            (ep.e_dram_layer, ep.e_logic_layer, ep.p_static_nmc),
            (3.7, 1.5, 0.96)
        );
    }

    #[test]
    fn no_offload_is_identity() {
        for (m1, m2) in [(0.0, 0.0), (0.3, 0.7), (1.0, 1.0)] {
            let p = WorkloadProfile {
                offload_fraction: 0.0,
                ..memory_dominated(m1, m2)
            };
            let c = compare(&p, &SystemConfig::default(), &EnergyParams::default()).unwrap();
            assert_eq!(c.normalized_delay, 1.0);
            assert_eq!(c.normalized_energy, 1.0);
            assert_eq!(c.host, c.nmc);
        }
    }

    #[test]
    fn high_miss_rates_favour_nmc() {
        let c = compare(
            &memory_dominated(0.9, 0.9),
            &SystemConfig::default(),
            &EnergyParams::default(),
        )
        .unwrap();
        assert!(c.normalized_delay > 1.0, "{}", c.normalized_delay);
    }

    #[test]
    fn low_miss_rates_favour_host() {
        let c = compare(
            &memory_dominated(0.01, 0.01),
            &SystemConfig::default(),
            &EnergyParams::default(),
        )
        .unwrap();
        assert!(c.normalized_delay < 1.0, "{}", c.normalized_delay);
    }

    #[test]
    fn invariants_hold() {
        let c = compare(
            &memory_dominated(0.4, 0.6),
            &SystemConfig::default(),
            &EnergyParams::default(),
        )
        .unwrap();
        for r in [&c.host, &c.nmc] {
            assert_eq!(r.t_total, r.t_nonmem + r.t_mem);
            assert_eq!(r.e_total, r.e_dynamic + r.e_static);
            assert!(r.traffic.l2 <= r.traffic.l1 && r.traffic.offchip <= r.traffic.l2);
        }
        assert!(c.normalized_delay > 0.0 && c.normalized_energy > 0.0);
    }

    #[test]
    fn validation() {
        let s = SystemConfig {
            bw_per_link: 0.0,
            ..SystemConfig::default()
        };
        assert!(matches!(
            host_delay(&WorkloadProfile::default(), &s),
            Err(ModelError::InvalidSystem(_))
        ));
        let p = WorkloadProfile {
            n_mem: 2.0,
            n_instr: 1.0,
            ..WorkloadProfile::default()
        };
        assert!(p.validate().is_err());
        let p = WorkloadProfile {
            m1: 1.5,
            ..WorkloadProfile::default()
        };
        assert!(p.validate().is_err());
        let ep = EnergyParams {
            e_l1_access: -1.0,
            ..EnergyParams::default()
        };
        assert!(ep.validate().is_err());
    }
}
