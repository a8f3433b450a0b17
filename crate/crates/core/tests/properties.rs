use std::collections::HashMap;

use proptest::prelude::*;

use nmcdse::advisor::{rank_kernels, MetricFlags, OffloadRecommendation, Verdict};
use nmcdse::characterize::{
    build_dependence_dag, count_misses, dlp_per_opcode, entropy_curve, memory_entropy, simulate_lru,
};
use nmcdse::model::{compare, EnergyParams, SystemConfig, WorkloadProfile};
use nmcdse::trace::{
    generate_synthetic, parse_trace, write_trace, DepShape, InstructionRecord, OpcodeClass,
    PatternKind, PatternSpec, Trace, TraceMeta,
};

fn loads(addrs: &[u64]) -> Trace {
    let recs = addrs
        .iter()
        .enumerate()
        .map(|(i, &a)| InstructionRecord::memory(i as u64, OpcodeClass::Load, 0, a, 8))
        .collect();
    Trace::new(TraceMeta::default(), recs)
}

fn pattern() -> impl Strategy<Value = PatternSpec> {
    let kind = prop_oneof![
        Just(PatternKind::Sequential),
        (1u64..512).prop_map(|s| PatternKind::Strided {
            stride_bytes: s * 8
        }),
        (10u32..34, any::<u64>()).prop_map(|(b, seed)| PatternKind::Random {
            range_bytes: 1 << b,
            seed
        }),
        (2u64..2000, any::<u64>()).prop_map(|(nodes, seed)| PatternKind::PointerChase {
            nodes,
            node_bytes: 64,
            seed
        }),
        (4u64..512, 1u32..3).prop_map(|(n, sweeps)| PatternKind::Stencil1d {
            array_bytes: n * 8,
            sweeps
        }),
        (2u64..48).prop_map(|n| PatternKind::Diagonal {
            matrix_dim: n,
            element_bytes: 8
        }),
    ];
    let deps = prop_oneof![
        Just(DepShape::Independent),
        Just(DepShape::Chain),
        (1u32..4).prop_map(DepShape::Fanout)
    ];
    (kind, 1u64..3000, 0.0f64..0.9, deps, 1u32..32, 0u64..1 << 24).prop_map(
        |(kind, n, mix, deps, block, base)| {
            let natural = PatternSpec::new(kind.clone(), 1).natural_accesses();
            PatternSpec::new(kind, natural.map_or(n, |m| m.min(n)))
                .with_compute_mix(mix)
                .with_dep_shape(deps)
                .with_block_len(block)
                .with_base(base * 8)
        },
    )
}

fn naive_misses(addrs: &[u64], line: u64, capacity: u64) -> u64 {
    let mut stack: Vec<u64> = Vec::new();
    let mut misses = 0;
    for &a in addrs {
        let l = a / line;
        if let Some(pos) = stack.iter().position(|&x| x == l) {
            stack.remove(pos);
        } else {
            misses += 1;
            stack.truncate((capacity / line) as usize - 1);
        }
        stack.insert(0, l);
    }
    misses
}

fn profile() -> impl Strategy<Value = WorkloadProfile> {
    (
        1.0e3f64..1.0e9,
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
    )
        .prop_map(|(n_instr, mem_share, m1, m2, off, par)| WorkloadProfile {
            n_instr,
            n_mem: n_instr * mem_share,
            m1,
            m2,
            offload_fraction: off,
            parallel_fraction: par,
        })
}

/// Configurations where each deeper level costs at least as much per access
/// as the one above it, for both latency and bandwidth, at any core count.
fn ordered_system() -> impl Strategy<Value = SystemConfig> {
    (
        1u32..16,
        1.0e9f64..4.0e9,
        1.0f64..4.0,
        0.0f64..4.0,
        1u32..8,
        1u32..32,
    )
        .prop_map(|(cores, f, lat1, lat2_extra, links, vaults)| SystemConfig {
            n_cores: cores,
            f_host: f,
            lat_l1: lat1,
            lat_l2: lat1 + lat2_extra,
            n_links: links,
            n_vaults: vaults,
            ..SystemConfig::default()
        })
        .prop_filter("off-chip access cheaper than an L2 hit", |s| {
            let line = s.line_size as f64;
            let offchip = line / s.external_bandwidth();
            s.lat_l2 / s.f_host <= offchip && line / s.bw_l2 <= offchip
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_text_round_trip(spec in pattern()) {
        let trace = generate_synthetic(&spec).unwrap();
        let mut first = Vec::new();
        write_trace(&trace, &mut first).unwrap();
        let reparsed = parse_trace(first.as_slice()).unwrap();
        prop_assert_eq!(reparsed.records(), trace.records());
        let mut second = Vec::new();
        write_trace(&reparsed, &mut second).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn generator_is_pure(spec in pattern()) {
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        prop_assert_eq!(a.records(), b.records());
    }

    #[test]
    fn sequential_steps_by_element(n in 2u64..2000, e in prop::sample::select(vec![1u32, 2, 4, 8, 16, 32, 64])) {
        let t = generate_synthetic(&PatternSpec::sequential(n).with_element_size(e)).unwrap();
        let addrs: Vec<u64> = t.addresses().collect();
        prop_assert!(addrs.windows(2).all(|w| w[1] - w[0] == u64::from(e)));
    }

    #[test]
    fn entropy_bounds_and_monotonicity(spec in pattern()) {
        let t = generate_synthetic(&spec).unwrap();
        prop_assume!(t.memory_access_count() > 0);
        let curve = entropy_curve(&t, &[0, 1, 3, 6, 9, 12]).unwrap();
        let distinct = t.addresses().collect::<std::collections::HashSet<_>>().len();
        let h0 = curve.points[0].entropy_bits;
        prop_assert!(h0 >= 0.0 && h0 <= (distinct as f64).log2() + 1e-9);
        for w in curve.points.windows(2) {
            prop_assert!(w[1].entropy_bits <= w[0].entropy_bits);
        }
    }

    #[test]
    fn entropy_ignores_order_and_translation(
        addrs in prop::collection::vec(0u64..1 << 20, 1..2000),
        offset in 0u64..1 << 30,
        seed in any::<u64>(),
    ) {
        let mut shuffled = addrs.clone();
        // Deterministic Fisher-Yates driven by a splitmix sequence.
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            shuffled.swap(i, ((z ^ (z >> 31)) % (i as u64 + 1)) as usize);
        }
        let shifted: Vec<u64> = addrs.iter().map(|a| a + offset).collect();
        let h = memory_entropy(&loads(&addrs), 0).unwrap();
        prop_assert_eq!(h, memory_entropy(&loads(&shuffled), 0).unwrap());
        prop_assert_eq!(h, memory_entropy(&loads(&shifted), 0).unwrap());
    }

    #[test]
    fn lru_engines_match_naive_replay(
        addrs in prop::collection::vec(0u64..1 << 14, 1..3000),
        line_log in 3u32..8,
        lines_log in 0u32..7,
    ) {
        let line = 1u64 << line_log;
        let capacity = line << lines_log;
        let want = naive_misses(&addrs, line, capacity);
        let t = loads(&addrs);
        prop_assert_eq!(simulate_lru(&t, line, capacity).unwrap().misses, want);
        prop_assert_eq!(count_misses(&t, line, capacity).unwrap(), want);
    }

    #[test]
    fn dlp_bounds_and_insertion_invariance(spec in pattern(), at in any::<prop::sample::Index>()) {
        let t = generate_synthetic(&spec).unwrap();
        let dlp = dlp_per_opcode(&build_dependence_dag(&t), &t);
        let mut counts: HashMap<OpcodeClass, usize> = HashMap::new();
        for r in &t {
            *counts.entry(r.opcode).or_default() += 1;
        }
        for (op, &v) in &dlp {
            prop_assert!(v >= 1.0 && v <= counts[op] as f64);
        }

        // A BRANCH with no registers is a class absent from generated traces.
        let mut recs: Vec<InstructionRecord> = t.records().to_vec();
        let pos = at.index(recs.len() + 1);
        let bb = recs.get(pos).map_or(0, |r| r.bb_id);
        recs.insert(pos, InstructionRecord::compute(0, OpcodeClass::Branch, bb));
        for (i, r) in recs.iter_mut().enumerate() {
            r.seq_id = i as u64;
        }
        let t2 = Trace::new(t.meta().clone(), recs);
        let mut dlp2 = dlp_per_opcode(&build_dependence_dag(&t2), &t2);
        dlp2.remove(&OpcodeClass::Branch);
        prop_assert_eq!(dlp, dlp2);
    }

    #[test]
    fn ratios_monotone_in_miss_rates(
        p in profile(),
        s in ordered_system(),
        lo in 0.0f64..=1.0,
        step in 0.0f64..=1.0,
    ) {
        let ep = EnergyParams::default();
        let hi = (lo + step).min(1.0);
        for (a, b) in [
            (WorkloadProfile { m1: lo, ..p.clone() }, WorkloadProfile { m1: hi, ..p.clone() }),
            (WorkloadProfile { m2: lo, ..p.clone() }, WorkloadProfile { m2: hi, ..p.clone() }),
        ] {
            let ca = compare(&a, &s, &ep).unwrap();
            let cb = compare(&b, &s, &ep).unwrap();
            prop_assert!(cb.normalized_delay >= ca.normalized_delay * (1.0 - 1e-12));
            prop_assert!(cb.normalized_energy >= ca.normalized_energy * (1.0 - 1e-12));
        }
    }

    #[test]
    fn scaling_rates_scales_time(p in profile(), k in 0.25f64..8.0) {
        let s = SystemConfig::default();
        let scaled = SystemConfig {
            f_host: s.f_host * k,
            f_nmc: s.f_nmc * k,
            bw_l1: s.bw_l1 * k,
            bw_l2: s.bw_l2 * k,
            bw_per_vault: s.bw_per_vault * k,
            bw_per_link: s.bw_per_link * k,
            t_launch: s.t_launch / k,
            ..s.clone()
        };
        let ep = EnergyParams::default();
        let a = compare(&p, &s, &ep).unwrap();
        let b = compare(&p, &scaled, &ep).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-300);
        prop_assert!(close(b.host.t_total * k, a.host.t_total));
        prop_assert!(close(b.nmc.t_total * k, a.nmc.t_total));
        prop_assert!(close(a.normalized_delay, b.normalized_delay));
    }

    #[test]
    fn traffic_shrinks_down_the_hierarchy(p in profile()) {
        let c = compare(&p, &SystemConfig::default(), &EnergyParams::default()).unwrap();
        for r in [&c.host, &c.nmc] {
            prop_assert!(r.traffic.l2 <= r.traffic.l1);
            prop_assert!(r.traffic.offchip <= r.traffic.l2);
            prop_assert!(r.t_total >= 0.0 && r.e_total >= 0.0);
            prop_assert!((r.e_total - r.e_dynamic - r.e_static).abs() <= 1e-12 * r.e_total.max(1.0));
        }
    }

    #[test]
    fn energy_linear_in_each_coefficient(p in profile(), which in 0usize..10, k in 0.0f64..5.0) {
        let s = SystemConfig::default();
        let base = EnergyParams::default();
        let zero = {
            let mut e = base.clone();
            *coefficient(&mut e, which) = 0.0;
            e
        };
        let scaled = {
            let mut e = base.clone();
            *coefficient(&mut e, which) *= k;
            e
        };
        let e0 = compare(&p, &s, &zero).unwrap();
        let e1 = compare(&p, &s, &base).unwrap();
        let ek = compare(&p, &s, &scaled).unwrap();
        for (r0, r1, rk) in [(&e0.host, &e1.host, &ek.host), (&e0.nmc, &e1.nmc, &ek.nmc)] {
            let want = r0.e_total + k * (r1.e_total - r0.e_total);
            prop_assert!((rk.e_total - want).abs() <= 1e-9 * r1.e_total.max(1e-300));
        }
    }

    #[test]
    fn ranking_is_a_permutation(
        recs in prop::collection::vec((0u8..4, 0.0f64..3.0, 0.0f64..3.0), 0..40)
    ) {
        let input: Vec<OffloadRecommendation> = recs
            .iter()
            .enumerate()
            .map(|(i, &(name, s, e))| OffloadRecommendation {
                kernel: format!("k{name}-{i}"),
                verdict: Verdict::Borderline,
                metric_flags: MetricFlags::default(),
                predicted_speedup: s,
                predicted_energy_ratio: e,
                notes: vec![],
            })
            .collect();
        let ranked = rank_kernels(input.clone());
        let mut a: Vec<String> = input.iter().map(|r| r.kernel.clone()).collect();
        let mut b: Vec<String> = ranked.iter().map(|r| r.kernel.clone()).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
        prop_assert!(ranked.windows(2).all(|w| w[0].predicted_speedup >= w[1].predicted_speedup));
    }
}

fn coefficient(e: &mut EnergyParams, which: usize) -> &mut f64 {
    match which {
        0 => &mut e.e_dram_layer,
        1 => &mut e.e_logic_layer,
        2 => &mut e.p_static_nmc,
        3 => &mut e.e_l1_access,
        4 => &mut e.e_l2_access,
        5 => &mut e.e_offchip_link,
        6 => &mut e.p_static_core,
        7 => &mut e.p_static_cache_per_mb,
        8 => &mut e.e_op_host,
        _ => &mut e.e_op_nmc,
    }
}
