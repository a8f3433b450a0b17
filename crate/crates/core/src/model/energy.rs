use super::{
    EnergyBreakdown, EnergyParams, ModelError, ModelResult, SystemConfig, WorkloadProfile, MIB,
};

const PICO: f64 = 1.0e-12;
const BITS_PER_BYTE: f64 = 8.0;

/// Host static power: per-core leakage plus cache leakage per MiB of L1 and L2.
pub fn host_static_power(s: &SystemConfig, ep: &EnergyParams) -> f64 {
    let cache_bytes = s.s_l1 * u64::from(s.n_cores) + s.s_l2;
    f64::from(s.n_cores) * ep.p_static_core
        + cache_bytes as f64 / MIB as f64 * ep.p_static_cache_per_mb
}

/// Fills the energy fields of a delay result from its traffic, instruction
/// counts and total time.
///
/// Dynamic energy is bytes x 8 x pJ/bit at every level (off-chip traffic pays
/// the link and the DRAM layers, vault traffic pays the DRAM and logic
/// layers) plus pJ per instruction. Static energy is total time times static
/// power; the logic-layer static power is charged only when work was offloaded.
pub fn apply_energy(r: &mut ModelResult, s: &SystemConfig, ep: &EnergyParams) {
    let bits = |bytes: f64| bytes * BITS_PER_BYTE;
    let t = &r.traffic;
    let e = EnergyBreakdown {
        l1: bits(t.l1) * ep.e_l1_access * PICO,
        l2: bits(t.l2) * ep.e_l2_access * PICO,
        offchip_link: bits(t.offchip) * ep.e_offchip_link * PICO,
        dram_layer: bits(t.offchip + t.vault) * ep.e_dram_layer * PICO,
        logic_layer: bits(t.vault) * ep.e_logic_layer * PICO,
        host_ops: r.host_instructions * ep.e_op_host * PICO,
        nmc_ops: r.nmc_instructions * ep.e_op_nmc * PICO,
        static_host: r.t_total * host_static_power(s, ep),
        static_nmc: if r.offloaded {
            r.t_total * ep.p_static_nmc
        } else {
            0.0
        },
    };
    r.e_dynamic =
        e.l1 + e.l2 + e.offchip_link + e.dram_layer + e.logic_layer + e.host_ops + e.nmc_ops;
    r.e_static = e.static_host + e.static_nmc;
    r.e_total = r.e_dynamic + r.e_static;
    r.energy = e;
}

/// Energy for both systems, given their delay results.
pub fn energy(
    _p: &WorkloadProfile,
    s: &SystemConfig,
    ep: &EnergyParams,
    host: &ModelResult,
    nmc: &ModelResult,
) -> Result<(ModelResult, ModelResult), ModelError> {
    ep.validate()?;
    let mut host = host.clone();
    let mut nmc = nmc.clone();
    apply_energy(&mut host, s, ep);
    apply_energy(&mut nmc, s, ep);
    Ok((host, nmc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{compare, host_delay, nmc_delay};

    fn evaluate(p: &WorkloadProfile, ep: &EnergyParams) -> (ModelResult, ModelResult) {
        let s = SystemConfig::default();
        let h = host_delay(p, &s).unwrap();
        let n = nmc_delay(p, &s).unwrap();
        energy(p, &s, ep, &h, &n).unwrap()
    }

    #[test]
    fn zero_instructions_cost_nothing() {
        let p = WorkloadProfile {
            n_instr: 0.0,
            n_mem: 0.0,
            ..WorkloadProfile::default()
        };
        let (h, n) = evaluate(&p, &EnergyParams::default());
        for r in [h, n] {
            assert_eq!(r.e_dynamic, 0.0);
            assert_eq!(r.e_static, 0.0);
        }
    }

    #[test]
    fn one_gigabyte_off_chip() {
        let p = WorkloadProfile {
            n_instr: 1.0e9 / 64.0,
            n_mem: 1.0e9 / 64.0,
            m1: 1.0,
            m2: 1.0,
            ..WorkloadProfile::default()
        };
        let (h, _) = evaluate(&p, &EnergyParams::default());
        assert_eq!(h.traffic.offchip, 1.0e9);
        let expected = 8.0e9 * 3.7e-12;
        assert!((h.energy.dram_layer - expected).abs() <= 1e-6 * expected);
        assert!((h.energy.dram_layer - 29.6e-3).abs() <= 1e-6 * 29.6e-3);
    }

    #[test]
    fn static_power_scaling() {
        let p = WorkloadProfile {
            m1: 0.3,
            m2: 0.6,
            ..WorkloadProfile::default()
        };
        let base = EnergyParams::default();
        let doubled = EnergyParams {
            p_static_core: 2.0 * base.p_static_core,
            p_static_cache_per_mb: 2.0 * base.p_static_cache_per_mb,
            p_static_nmc: 2.0 * base.p_static_nmc,
            ..base.clone()
        };
        let (h1, n1) = evaluate(&p, &base);
        let (h2, n2) = evaluate(&p, &doubled);
        for (a, b) in [(h1, h2), (n1, n2)] {
            assert_eq!(b.e_dynamic, a.e_dynamic);
            assert!((b.e_static - 2.0 * a.e_static).abs() <= 1e-12 * b.e_static);
        }
    }

    #[test]
    fn host_static_power_default() {
        // 4 cores * 0.5 W + (4 * 32 KiB + 256 KiB) = 0.375 MiB * 0.25 W
        let p = host_static_power(&SystemConfig::default(), &EnergyParams::default());
        assert_eq!(p, 2.0 + 0.375 * 0.25);
    }

    #[test]
    fn offloaded_traffic_pays_dram_and_logic_layers() {
        let p = WorkloadProfile {
            n_instr: 1.0e6,
            n_mem: 1.0e6,
            ..WorkloadProfile::default()
        };
        let c = compare(&p, &SystemConfig::default(), &EnergyParams::default()).unwrap();
        let bits = 1.0e6 * 64.0 * 8.0;
        assert!((c.nmc.energy.dram_layer - bits * 3.7e-12).abs() < 1e-15);
        assert!((c.nmc.energy.logic_layer - bits * 1.5e-12).abs() < 1e-15);
        assert_eq!(c.nmc.energy.static_nmc, c.nmc.t_total * 0.96);
        assert_eq!(c.host.energy.static_nmc, 0.0);
    }
}
