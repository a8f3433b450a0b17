use super::{ModelError, ModelResult, SystemConfig, TimeBreakdown, Traffic, WorkloadProfile};

/// Amdahl speedup of `cores` workers on a `parallel` fraction of the work.
fn amdahl(parallel: f64, cores: u32) -> f64 {
    1.0 / ((1.0 - parallel) + parallel / f64::from(cores))
}

/// Multi-core host with private L1s, a shared L2 and off-chip links.
///
/// Every cache level takes the larger of its latency-bound and
/// bandwidth-bound time for the accesses it serves. Latency-bound time is
/// spread over the active cores, as is L1 bandwidth; L2 bandwidth is shared.
/// Off-chip time is the bytes that miss both levels over the aggregate link
/// bandwidth.
pub fn host_delay(p: &WorkloadProfile, s: &SystemConfig) -> Result<ModelResult, ModelError> {
    s.validate()?;
    p.validate()?;

    let speedup = amdahl(p.parallel_fraction, s.n_cores);
    let line = s.line_size as f64;

    let host_compute = (p.n_instr - p.n_mem) / (s.f_host * s.ipc_host * speedup);

    let l1_hits = p.n_mem * (1.0 - p.m1);
    let l2_hits = p.n_mem * p.m1 * (1.0 - p.m2);
    let traffic = Traffic {
        l1: p.n_mem * line,
        l2: p.n_mem * p.m1 * line,
        offchip: p.n_mem * p.m1 * p.m2 * line,
        vault: 0.0,
    };

    let l1 = f64::max(
        l1_hits * s.lat_l1 / (s.f_host * speedup),
        l1_hits * line / (s.bw_l1 * speedup),
    );
    let l2 = f64::max(
        l2_hits * s.lat_l2 / (s.f_host * speedup),
        l2_hits * line / s.bw_l2,
    );
    let offchip = traffic.offchip / s.external_bandwidth();

    let t_nonmem = host_compute;
    let t_mem = l1 + l2 + offchip;
    Ok(ModelResult {
        t_nonmem,
        t_mem,
        t_total: t_nonmem + t_mem,
        traffic,
        time: TimeBreakdown {
            host_compute,
            l1,
            l2,
            offchip,
            ..TimeBreakdown::default()
        },
        host_instructions: p.n_instr,
        ..ModelResult::default()
    })
}

/// Host plus near-memory cores.
///
/// The offloaded share runs on up to `n_vaults` NMC cores and reaches DRAM
/// through the vaults without caches; the rest runs on the host via
/// [`host_delay`]. Phases serialize unless `overlap` is set, and each offload
/// pays `t_launch` once.
pub fn nmc_delay(p: &WorkloadProfile, s: &SystemConfig) -> Result<ModelResult, ModelError> {
    if p.offload_fraction == 0.0 {
        return host_delay(p, s);
    }
    let residual = host_delay(&p.residual(), s)?;

    let off_instr = p.n_instr * p.offload_fraction;
    let off_mem = p.n_mem * p.offload_fraction;
    let speedup = amdahl(p.parallel_fraction, s.nmc_cores());

    let nmc_compute = (off_instr - off_mem) / (s.f_nmc * s.ipc_nmc * speedup);
    let vault_bytes = off_mem * s.line_size as f64;
    let vault = vault_bytes / s.internal_bandwidth();
    let launch = if off_instr > 0.0 { s.t_launch } else { 0.0 };

    let nmc_phase = nmc_compute + vault + launch;
    let overlap = s.overlap * residual.t_total.min(nmc_phase);

    let t_nonmem = residual.t_nonmem + nmc_compute + launch;
    let t_mem = residual.t_mem + vault;
    Ok(ModelResult {
        t_nonmem,
        t_mem,
        t_total: t_nonmem + t_mem - overlap,
        traffic: Traffic {
            vault: vault_bytes,
            ..residual.traffic
        },
        time: TimeBreakdown {
            nmc_compute,
            launch,
            vault,
            overlap,
            ..residual.time
        },
        host_instructions: residual.host_instructions,
        nmc_instructions: off_instr,
        offloaded: off_instr > 0.0,
        ..ModelResult::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pure_memory(n: f64) -> WorkloadProfile {
        WorkloadProfile {
            n_instr: n,
            n_mem: n,
            m1: 1.0,
            m2: 1.0,
            ..WorkloadProfile::default()
        }
    }

    #[test]
    fn no_memory_accesses() {
        let p = WorkloadProfile {
            n_mem: 0.0,
            ..WorkloadProfile::default()
        };
        let r = host_delay(&p, &SystemConfig::default()).unwrap();
        assert_eq!(r.t_mem, 0.0);
        assert_eq!(r.t_total, r.t_nonmem);
        // 1e9 instructions over 4 cores at 3 GHz
        assert!((r.t_nonmem - 1.0e9 / 12.0e9).abs() < 1e-15);
    }

    #[test]
    fn offchip_term_all_misses() {
        let p = pure_memory(1.0e9);
        let r = host_delay(&p, &SystemConfig::default()).unwrap();
        // independent recomputation: 1e9 accesses * 64 B over 4 links * 16 GB/s
        let offchip_bytes = 1.0e9 * 64.0;
        assert_eq!(r.traffic.offchip, offchip_bytes);
        assert_eq!(r.traffic.offchip, 64.0e9);
        assert_eq!(r.time.offchip, offchip_bytes / (4.0 * 16.0e9));
        assert_eq!(r.time.offchip, 1.0);
        // no hits at either level, so the off-chip term is the whole memory time
        assert_eq!(r.t_mem, 1.0);
    }

    #[test]
    fn more_links_halve_offchip_time() {
        let p = WorkloadProfile {
            m1: 0.5,
            m2: 0.5,
            ..WorkloadProfile::default()
        };
        let s = SystemConfig::default();
        let base = host_delay(&p, &s).unwrap();
        let doubled = host_delay(
            &p,
            &SystemConfig {
                n_links: 2 * s.n_links,
                ..s.clone()
            },
        )
        .unwrap();
        assert_eq!(doubled.time.offchip * 2.0, base.time.offchip);
        assert_eq!(doubled.time.l1, base.time.l1);
        assert_eq!(doubled.time.l2, base.time.l2);
    }

    #[test]
    fn cache_terms_take_the_slower_bound() {
        let s = SystemConfig::default();
        let p = WorkloadProfile {
            n_instr: 1.0e6,
            n_mem: 1.0e6,
            m1: 0.5,
            m2: 0.0,
            ..WorkloadProfile::default()
        };
        let r = host_delay(&p, &s).unwrap();
        let hits: f64 = 0.5e6;
        let l1_lat = hits * 1.0 / (3.0e9 * 4.0);
        let l1_bw = hits * 64.0 / (137.0e9 * 4.0);
        assert_eq!(r.time.l1, l1_lat.max(l1_bw));
        let l2_lat = hits * 2.0 / (3.0e9 * 4.0);
        let l2_bw = hits * 64.0 / 137.0e9;
        assert_eq!(r.time.l2, l2_lat.max(l2_bw));
    }

    #[test]
    fn degenerate_offload() {
        let p = WorkloadProfile {
            offload_fraction: 0.0,
            m1: 0.2,
            m2: 0.3,
            ..WorkloadProfile::default()
        };
        let s = SystemConfig::default();
        assert_eq!(nmc_delay(&p, &s).unwrap(), host_delay(&p, &s).unwrap());
    }

    #[test]
    fn full_offload_pure_memory() {
        let p = pure_memory(1.0e8);
        let r = nmc_delay(&p, &SystemConfig::default()).unwrap();
        let bytes = 1.0e8 * 64.0;
        assert_eq!(r.t_mem, bytes / (16.0 * 10.0e9));
        assert_eq!(r.traffic.vault, bytes);
        assert_eq!(r.traffic.offchip, 0.0);
        assert_eq!(r.t_nonmem, 5.0e-6);
    }

    #[test]
    fn equal_bandwidths_give_equal_memory_time() {
        let s = SystemConfig {
            n_vaults: 8,
            bw_per_vault: 8.0e9,
            ..SystemConfig::default()
        };
        assert_eq!(s.internal_bandwidth(), s.external_bandwidth());
        let p = pure_memory(3.0e7);
        let host = host_delay(&p, &s).unwrap();
        let nmc = nmc_delay(&p, &s).unwrap();
        assert!((host.t_mem - nmc.t_mem).abs() <= 1e-9 * host.t_mem);
    }

    #[test]
    fn vault_scaling() {
        let p = pure_memory(1.0e8);
        let base = nmc_delay(
            &p,
            &SystemConfig {
                n_vaults: 1,
                ..SystemConfig::default()
            },
        )
        .unwrap()
        .t_mem;
        for v in 1..=32u32 {
            let s = SystemConfig {
                n_vaults: v,
                ..SystemConfig::default()
            };
            let t = nmc_delay(&p, &s).unwrap().t_mem;
            assert!((t * f64::from(v) - base).abs() <= 1e-12 * base);
        }
    }

    #[test]
    fn nmc_cores_capped_by_vaults() {
        let s = SystemConfig {
            n_nmc_cores: Some(64),
            ..SystemConfig::default()
        };
        assert_eq!(s.nmc_cores(), 16);
        let s = SystemConfig {
            n_nmc_cores: Some(4),
            ..SystemConfig::default()
        };
        assert_eq!(s.nmc_cores(), 4);
    }

    #[test]
    fn overlap_hides_shorter_phase() {
        let p = WorkloadProfile {
            offload_fraction: 0.5,
            m1: 0.5,
            m2: 0.5,
            ..WorkloadProfile::default()
        };
        let serial = nmc_delay(&p, &SystemConfig::default()).unwrap();
        let overlapped = nmc_delay(
            &p,
            &SystemConfig {
                overlap: 1.0,
                ..SystemConfig::default()
            },
        )
        .unwrap();
        assert_eq!(serial.time.overlap, 0.0);
        assert_eq!(serial.t_total, serial.t_nonmem + serial.t_mem);
        assert!(overlapped.t_total < serial.t_total);
        assert_eq!(
            overlapped.t_total,
            overlapped.t_nonmem + overlapped.t_mem - overlapped.time.overlap
        );
    }

    #[test]
    fn amdahl_bounds() {
        assert_eq!(amdahl(1.0, 4), 4.0);
        assert_eq!(amdahl(0.0, 4), 1.0);
        assert!((amdahl(0.5, 4) - 1.6).abs() < 1e-12);
    }
}
