use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use nmcdse::advisor::{
    profile_from_signature, rank_cmp, score_kernel, OffloadRecommendation, HEURISTIC_NOTE,
};
use nmcdse::characterize::{signature, CharError, WorkloadSignature, SIGNATURE_SCHEMA_VERSION};
use nmcdse::config::{parse_quantity, ToolConfig, Unit};
use nmcdse::model::{
    compare, sweep, write_sweep_csv, ComparisonResult, SweepRow, SweepSpec, WorkloadProfile,
};
use nmcdse::numfmt::format_sig;
use nmcdse::trace::{
    generate_synthetic, parse_trace, write_trace, DepShape, PatternKind, PatternSpec, Trace,
};

use crate::manifest::ManifestBuilder;
use crate::{
    AdviseArgs, CharacterizeArgs, Cli, CliError, CliResult, Command, GenTraceArgs, ModelArgs,
    ModelFormat, Pattern, SweepArgs,
};

pub fn run(cli: &Cli, cfg: ToolConfig) -> CliResult<()> {
    let manifest =
        ManifestBuilder::start(cli.command.name(), cli.config.as_deref(), &cli.overrides);
    match &cli.command {
        Command::GenTrace(a) => gen_trace(a, manifest.seed(a.seed)),
        Command::Characterize(a) => characterize(a, cfg, manifest),
        Command::Model(a) => model(a, cfg, manifest),
        Command::Sweep(a) => run_sweep(a, cfg, manifest),
        Command::Advise(a) => advise(a, cfg, manifest),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data_at(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn size_flag(flag: &str, value: &str) -> CliResult<u64> {
    let v = parse_quantity(value, Unit::Bytes).map_err(|e| usage(format!("--{flag}: {e}")))?;
    if v < 1.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
        return Err(usage(format!(
            "--{flag}: expected a positive whole number of bytes, got {value}"
        )));
    }
    Ok(v as u64)
}

fn parse_deps(text: &str) -> CliResult<DepShape> {
    match text {
        "independent" => Ok(DepShape::Independent),
        "chain" => Ok(DepShape::Chain),
        _ => text
            .strip_prefix("fanout:")
            .and_then(|k| k.parse().ok())
            .map(DepShape::Fanout)
            .ok_or_else(|| {
                usage(format!(
                    "--deps: expected independent, chain or fanout:K, got `{text}`"
                ))
            }),
    }
}

fn parse_address(text: &str) -> CliResult<u64> {
    let parsed = match text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => text.parse(),
    };
    parsed.map_err(|_| usage(format!("--base: cannot parse address `{text}`")))
}

/// Output file or standard output, buffered.
fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| data_at(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn finish(mut out: Box<dyn Write>, path: Option<&Path>) -> CliResult<()> {
    out.flush().map_err(|e| match path {
        Some(p) => data_at(p, e),
        None => CliError::Data(format!("standard output: {e}")),
    })
}

fn pattern_spec(a: &GenTraceArgs) -> CliResult<PatternSpec> {
    let only = |present: bool, flag: &str, patterns: &str| {
        if present {
            Err(usage(format!("--{flag} only applies to {patterns}")))
        } else {
            Ok(())
        }
    };
    let p = a.pattern;
    only(
        a.stride.is_some() && p != Pattern::Strided,
        "stride",
        "--pattern strided",
    )?;
    only(
        a.range.is_some() && p != Pattern::Random,
        "range",
        "--pattern random",
    )?;
    only(
        a.nodes.is_some() && p != Pattern::PointerChase,
        "nodes",
        "--pattern pointer-chase",
    )?;
    only(
        a.array.is_some() && p != Pattern::Stencil1d,
        "array",
        "--pattern stencil1d",
    )?;
    only(
        a.dim.is_some() && p != Pattern::Diagonal,
        "dim",
        "--pattern diagonal",
    )?;
    only(
        a.footprint.is_some() && !matches!(p, Pattern::Sequential | Pattern::Strided),
        "footprint",
        "sequential and strided patterns",
    )?;

    let required = |v: Option<u64>, flag: &str| {
        v.ok_or_else(|| usage(format!("--pattern {} requires --{flag}", pattern_name(p))))
    };
    let element_size = size_flag("element-size", &a.element_size)?;
    let element_size =
        u32::try_from(element_size).map_err(|_| usage("--element-size: too large"))?;

    let kind = match p {
        Pattern::Sequential => PatternKind::Sequential,
        Pattern::Strided => PatternKind::Strided {
            stride_bytes: required(
                a.stride
                    .as_deref()
                    .map(|s| size_flag("stride", s))
                    .transpose()?,
                "stride",
            )?,
        },
        Pattern::Random => PatternKind::Random {
            range_bytes: required(
                a.range
                    .as_deref()
                    .map(|s| size_flag("range", s))
                    .transpose()?,
                "range",
            )?,
            seed: a.seed,
        },
        Pattern::PointerChase => PatternKind::PointerChase {
            nodes: required(a.nodes, "nodes")?,
            node_bytes: size_flag("node-bytes", &a.node_bytes)?,
            seed: a.seed,
        },
        Pattern::Stencil1d => PatternKind::Stencil1d {
            array_bytes: required(
                a.array
                    .as_deref()
                    .map(|s| size_flag("array", s))
                    .transpose()?,
                "array",
            )?,
            sweeps: a.sweeps,
        },
        Pattern::Diagonal => PatternKind::Diagonal {
            matrix_dim: required(a.dim, "dim")?,
            element_bytes: element_size,
        },
    };

    let mut spec = PatternSpec::new(kind, 0)
        .with_element_size(element_size)
        .with_compute_mix(a.compute_mix)
        .with_dep_shape(parse_deps(&a.deps)?)
        .with_block_len(a.block_len)
        .with_base(parse_address(&a.base)?)
        .with_name(
            a.name
                .clone()
                .unwrap_or_else(|| pattern_name(p).to_string()),
        );
    if let Some(f) = &a.footprint {
        spec = spec.with_footprint(size_flag("footprint", f)?);
    }
    spec.n_accesses = match (a.n, spec.natural_accesses()) {
        (Some(n), Some(natural)) => n.min(natural),
        (None, Some(natural)) => natural,
        (Some(n), None) => n,
        (None, None) => return Err(usage(format!("--pattern {} requires --n", pattern_name(p)))),
    };
    spec.check().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

fn pattern_name(p: Pattern) -> &'static str {
    match p {
        Pattern::Sequential => "sequential",
        Pattern::Strided => "strided",
        Pattern::Random => "random",
        Pattern::PointerChase => "pointer-chase",
        Pattern::Stencil1d => "stencil1d",
        Pattern::Diagonal => "diagonal",
    }
}

fn gen_trace(a: &GenTraceArgs, manifest: ManifestBuilder) -> CliResult<()> {
    let spec = pattern_spec(a)?;
    let trace = generate_synthetic(&spec).map_err(|e| usage(e.to_string()))?;
    let out = a.out.as_deref();
    let mut w = open_output(out)?;
    write_trace(&trace, &mut w).map_err(|e| CliError::Data(format!("writing trace: {e}")))?;
    finish(w, out)?;
    match out {
        Some(path) => {
            manifest.write(&[], path)?;
            println!("{} records written to {}", trace.len(), path.display());
        }
        None => eprintln!("{} records", trace.len()),
    }
    Ok(())
}

fn load_trace(path: &Path) -> CliResult<Trace> {
    let file = File::open(path).map_err(|e| data_at(path, e))?;
    parse_trace(file).map_err(|e| data_at(path, e))
}

fn file_stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = name.strip_suffix(".gz").unwrap_or(&name);
    match name.rsplit_once('.') {
        Some((stem, _)) if !stem.is_empty() => stem.to_string(),
        _ => name.to_string(),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable output") + "\n"
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| data_at(path, e))
}

fn curve_csvs(sig: &WorkloadSignature) -> (String, String) {
    let mut entropy = String::from("bit_reduction,entropy_bits\n");
    for p in sig.entropy.iter().flat_map(|c| &c.points) {
        entropy.push_str(&format!(
            "{},{}\n",
            p.bit_reduction,
            format_sig(p.entropy_bits, 6)
        ));
    }
    let mut spatial = String::from("line_pair,score\n");
    for p in sig.spatial.iter().flat_map(|c| &c.pairs) {
        spatial.push_str(&format!(
            "{}-{},{}\n",
            p.from_line,
            p.to_line,
            format_sig(p.score, 6)
        ));
    }
    (entropy, spatial)
}

fn characterize(
    a: &CharacterizeArgs,
    mut cfg: ToolConfig,
    manifest: ManifestBuilder,
) -> CliResult<()> {
    let flags = [
        ("capacity", &a.capacity),
        ("l2_capacity", &a.l2_capacity),
        ("line_pairs", &a.pairs),
        ("reductions", &a.reductions),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v).map_err(|e| usage(e.to_string()))?;
        }
    }
    let ccfg = cfg.characterization;
    ccfg.from_lines().map_err(|e| usage(e.to_string()))?;
    if a.out.is_some() && a.traces.len() > 1 {
        return Err(usage(
            "--out takes a single trace; use --out-dir for several",
        ));
    }

    let signatures: Vec<CliResult<WorkloadSignature>> = a
        .traces
        .par_iter()
        .map(|path| {
            let trace = load_trace(path)?;
            signature(&trace, &ccfg).map_err(|e| match e {
                CharError::InvalidArgument(m) => usage(m),
                other => data_at(path, other),
            })
        })
        .collect();
    let signatures: Vec<WorkloadSignature> = signatures.into_iter().collect::<CliResult<_>>()?;

    if let Some(prefix) = &a.csv {
        for (path, sig) in a.traces.iter().zip(&signatures) {
            let base = if a.traces.len() == 1 {
                prefix.clone()
            } else {
                format!("{prefix}_{}", file_stem(path))
            };
            let (entropy, spatial) = curve_csvs(sig);
            for (suffix, text) in [("entropy.csv", entropy), ("spatial.csv", spatial)] {
                let out = PathBuf::from(format!("{base}.{suffix}"));
                write_text(&out, &text)?;
                manifest.write(std::slice::from_ref(path), &out)?;
            }
        }
    }

    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| data_at(dir, e))?;
        for (path, sig) in a.traces.iter().zip(&signatures) {
            let out = dir.join(format!("{}.sig.json", file_stem(path)));
            write_text(&out, &to_json(sig))?;
            manifest.write(std::slice::from_ref(path), &out)?;
        }
    } else if let Some(out) = &a.out {
        write_text(out, &to_json(&signatures[0]))?;
        manifest.write(&a.traces, out)?;
    } else if signatures.len() == 1 {
        print!("{}", to_json(&signatures[0]));
    } else {
        print!("{}", to_json(&signatures));
    }
    Ok(())
}

fn read_signature(path: &Path) -> Result<WorkloadSignature, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let sig: WorkloadSignature = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    if sig.schema_version != SIGNATURE_SCHEMA_VERSION {
        return Err(format!(
            "schema_version {} is not supported (expected {SIGNATURE_SCHEMA_VERSION})",
            sig.schema_version
        ));
    }
    Ok(sig)
}

#[derive(Serialize)]
struct ModelOutput<'a> {
    schema_version: u32,
    profile: &'a WorkloadProfile,
    #[serde(flatten)]
    result: &'a ComparisonResult,
}

fn model(a: &ModelArgs, mut cfg: ToolConfig, manifest: ManifestBuilder) -> CliResult<()> {
    let mut inputs = Vec::new();
    if let Some(path) = &a.signature {
        let sig = read_signature(path).map_err(|e| data_at(path, e))?;
        let p = profile_from_signature(&sig);
        cfg.workload = WorkloadProfile {
            offload_fraction: cfg.workload.offload_fraction,
            parallel_fraction: cfg.workload.parallel_fraction,
            ..p
        };
        inputs.push(path.clone());
    }
    let flags = [
        ("m1", &a.m1),
        ("m2", &a.m2),
        ("n_instr", &a.n_instr),
        ("n_mem", &a.n_mem),
        ("offload_fraction", &a.offload),
        ("parallel_fraction", &a.parallel),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v).map_err(|e| usage(e.to_string()))?;
        }
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let result =
        compare(&cfg.workload, &cfg.system, &cfg.energy).map_err(|e| usage(e.to_string()))?;
    let text = match a.format {
        ModelFormat::Json => to_json(&ModelOutput {
            schema_version: SIGNATURE_SCHEMA_VERSION,
            profile: &cfg.workload,
            result: &result,
        }),
        ModelFormat::Csv => {
            let row = SweepRow {
                m1: cfg.workload.m1,
                m2: cfg.workload.m2,
                n_vaults: cfg.system.n_vaults,
                n_links: cfg.system.n_links,
                result,
            };
            let mut buf = Vec::new();
            write_sweep_csv(std::slice::from_ref(&row), &mut buf).expect("in-memory write");
            String::from_utf8(buf).expect("ascii csv")
        }
    };
    match &a.out {
        Some(out) => {
            write_text(out, &text)?;
            manifest.write(&inputs, out)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_sweep(a: &SweepArgs, cfg: ToolConfig, manifest: ManifestBuilder) -> CliResult<()> {
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let grid = SweepSpec::parse(&a.grid).map_err(|e| usage(format!("--grid: {e}")))?;
    let rows =
        sweep(&grid, &cfg.workload, &cfg.system, &cfg.energy).map_err(|e| usage(e.to_string()))?;
    let out = a.out.as_deref();
    let mut w = open_output(out)?;
    write_sweep_csv(&rows, &mut w).map_err(|e| CliError::Data(format!("writing CSV: {e}")))?;
    finish(w, out)?;
    if let Some(path) = out {
        manifest.write(&[], path)?;
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(untagged)]
enum AdviceEntry {
    Scored {
        file: String,
        #[serde(flatten)]
        recommendation: OffloadRecommendation,
    },
    Failed {
        file: String,
        error: String,
    },
}

fn advice_table(entries: &[AdviceEntry]) -> String {
    let mut t = format!(
        "{:<4} {:<24} {:<13} {:>9} {:>9}  {}\n",
        "rank", "kernel", "verdict", "speedup", "energy", "metrics"
    );
    let mut rank = 0;
    for e in entries {
        match e {
            AdviceEntry::Scored {
                recommendation: r, ..
            } => {
                rank += 1;
                let f = r.metric_flags;
                let mark = |on: bool, c: char| if on { c } else { '-' };
                let mut metrics = format!(
                    "{}{}{}",
                    mark(f.high_entropy, 'E'),
                    mark(f.low_spatial_locality, 'S'),
                    mark(f.parallel, 'P')
                );
                for n in &r.notes {
                    metrics.push_str(&format!(" ({n})"));
                }
                t.push_str(&format!(
                    "{:<4} {:<24} {:<13} {:>9} {:>9}  {}\n",
                    rank,
                    r.kernel,
                    r.verdict.as_str(),
                    format_sig(r.predicted_speedup, 4),
                    format_sig(r.predicted_energy_ratio, 4),
                    metrics
                ));
            }
            AdviceEntry::Failed { file, error } => {
                t.push_str(&format!("{:<4} {:<24} error: {error}\n", "-", file));
            }
        }
    }
    t.push_str(&format!(
        "metrics: E high entropy, S low spatial locality, P parallel; {HEURISTIC_NOTE}\n"
    ));
    t
}

fn advise(a: &AdviseArgs, cfg: ToolConfig, manifest: ManifestBuilder) -> CliResult<()> {
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let scored: Vec<(String, Result<OffloadRecommendation, String>)> = a
        .signatures
        .par_iter()
        .map(|path| {
            let result = read_signature(path).and_then(|sig| {
                score_kernel(&sig, &cfg.system, &cfg.energy, &cfg.thresholds)
                    .map_err(|e| e.to_string())
            });
            (path.display().to_string(), result)
        })
        .collect();

    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (file, result) in scored {
        match result {
            Ok(rec) => ok.push((file, rec)),
            Err(error) => failed.push(AdviceEntry::Failed { file, error }),
        }
    }
    // Same order as `rank_kernels`, with the file name settling equal kernel names.
    ok.sort_by(|(fa, a), (fb, b)| rank_cmp(a, b).then_with(|| fa.cmp(fb)));
    let mut entries: Vec<AdviceEntry> = ok
        .into_iter()
        .map(|(file, recommendation)| AdviceEntry::Scored {
            file,
            recommendation,
        })
        .collect();
    entries.extend(failed);

    let json = to_json(&entries);
    let table = advice_table(&entries);
    match &a.out {
        Some(out) => {
            write_text(out, &json)?;
            manifest.write(&a.signatures, out)?;
            print!("{table}");
        }
        None => {
            print!("{json}");
            eprint!("{table}");
        }
    }
    Ok(())
}
