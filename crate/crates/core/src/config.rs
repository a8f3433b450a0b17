//! Plain `key = value` configuration with unit suffixes.
//!
//! One file holds the system, energy, workload, characterization and
//! advisor settings. Blank lines and `#` comments are ignored, and a trailing
//! `# ...` after a value is a comment too. Sizes use binary multiples
//! (`32KB` = 32768 bytes); bandwidths and frequencies use decimal ones
//! (`16GB/s` = 16e9 bytes/s).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advisor::OffloadThresholds;
use crate::characterize::CharacterizationConfig;
use crate::model::{EnergyParams, SystemConfig, WorkloadProfile};
use crate::numfmt::format_sig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<ConfigError>,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    /// The offending key, when the error concerns one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key } | ConfigError::InvalidValue { key, .. } => Some(key),
            ConfigError::Line { source, .. } => source.key(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Hertz,
    Bytes,
    BytesPerSecond,
    PicojoulePerBit,
    Picojoule,
    Watt,
    Second,
    Cycles,
    Plain,
}

impl Unit {
    /// Suffix and scale; a negative scale divides, so that `5us` is exactly 5e-6.
    fn suffixes(self) -> &'static [(&'static str, f64)] {
        const K: f64 = 1024.0;
        match self {
            Unit::Hertz => &[("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6), ("GHz", 1e9)],
            Unit::Bytes => &[
                ("B", 1.0),
                ("KB", K),
                ("KiB", K),
                ("MB", K * K),
                ("MiB", K * K),
                ("GB", K * K * K),
                ("GiB", K * K * K),
            ],
            Unit::BytesPerSecond => &[("B/s", 1.0), ("KB/s", 1e3), ("MB/s", 1e6), ("GB/s", 1e9)],
            Unit::PicojoulePerBit => &[("pJ/b", 1.0), ("pJ/bit", 1.0)],
            Unit::Picojoule => &[("pJ", 1.0), ("nJ", 1e3)],
            Unit::Watt => &[("W", 1.0), ("mW", -1e3)],
            Unit::Second => &[("s", 1.0), ("ms", -1e3), ("us", -1e6), ("ns", -1e9)],
            Unit::Cycles => &[("cycle", 1.0), ("cycles", 1.0)],
            Unit::Plain => &[],
        }
    }

    /// Syntax hint for help output.
    pub fn syntax(self) -> &'static str {
        match self {
            Unit::Hertz => "Hz|kHz|MHz|GHz",
            Unit::Bytes => "B|KB|MB|GB (binary)",
            Unit::BytesPerSecond => "B/s|KB/s|MB/s|GB/s (decimal)",
            Unit::PicojoulePerBit => "pJ/b",
            Unit::Picojoule => "pJ|nJ",
            Unit::Watt => "W|mW",
            Unit::Second => "s|ms|us|ns",
            Unit::Cycles => "cycles",
            Unit::Plain => "",
        }
    }
}

/// Parses a number with an optional unit suffix into the base unit.
/// A bare number is already in the base unit.
pub fn parse_quantity(text: &str, unit: Unit) -> Result<f64, String> {
    let text = text.trim();
    let (number, suffix) = (1..=text.len())
        .rev()
        .filter(|&i| text.is_char_boundary(i))
        .find_map(|i| {
            text[..i]
                .trim()
                .parse::<f64>()
                .ok()
                .map(|v| (v, text[i..].trim()))
        })
        .ok_or_else(|| format!("`{text}` is not a number"))?;
    if !number.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    if suffix.is_empty() {
        return Ok(number);
    }
    unit.suffixes()
        .iter()
        .find(|(s, _)| *s == suffix)
        .map(|&(_, scale)| {
            if scale < 0.0 {
                number / -scale
            } else {
                number * scale
            }
        })
        .ok_or_else(|| match unit {
            Unit::Plain => format!("unexpected unit `{suffix}`"),
            _ => format!("unknown unit `{suffix}`, expected {}", unit.syntax()),
        })
}

#[derive(Debug, Clone, Copy)]
pub struct KeyInfo {
    pub key: &'static str,
    pub unit: Unit,
    pub help: &'static str,
}

const fn key(key: &'static str, unit: Unit, help: &'static str) -> KeyInfo {
    KeyInfo { key, unit, help }
}

/// Every accepted key.
pub const KEYS: &[KeyInfo] = &[
    key("n_cores", Unit::Plain, "host cores"),
    key("f_host", Unit::Hertz, "host clock"),
    key("f_nmc", Unit::Hertz, "NMC core clock"),
    key("s_l1", Unit::Bytes, "L1 size per core"),
    key("s_l2", Unit::Bytes, "shared L2 size"),
    key("s_dram", Unit::Bytes, "stacked DRAM size"),
    key("bw_l1", Unit::BytesPerSecond, "L1 bandwidth per core"),
    key("bw_l2", Unit::BytesPerSecond, "shared L2 bandwidth"),
    key("lat_l1", Unit::Cycles, "L1 hit latency"),
    key("lat_l2", Unit::Cycles, "L2 hit latency"),
    key("line_size", Unit::Bytes, "cache line and transfer size"),
    key("n_vaults", Unit::Plain, "vaults in the memory stack"),
    key(
        "bw_per_vault",
        Unit::BytesPerSecond,
        "internal bandwidth per vault",
    ),
    key("n_links", Unit::Plain, "off-chip links"),
    key(
        "bw_per_link",
        Unit::BytesPerSecond,
        "bandwidth per off-chip link",
    ),
    key("ipc_host", Unit::Plain, "host instructions per cycle"),
    key("ipc_nmc", Unit::Plain, "NMC instructions per cycle"),
    key(
        "n_nmc_cores",
        Unit::Plain,
        "NMC cores, or `auto` for one per vault",
    ),
    key("t_launch", Unit::Second, "offload launch overhead"),
    key(
        "overlap",
        Unit::Plain,
        "fraction of the shorter phase hidden, 0..1",
    ),
    key(
        "e_dram_layer",
        Unit::PicojoulePerBit,
        "DRAM layer access energy",
    ),
    key("e_logic_layer", Unit::PicojoulePerBit, "logic layer energy"),
    key("p_static_nmc", Unit::Watt, "NMC static power"),
    key("e_l1_access", Unit::PicojoulePerBit, "L1 access energy"),
    key("e_l2_access", Unit::PicojoulePerBit, "L2 access energy"),
    key(
        "e_offchip_link",
        Unit::PicojoulePerBit,
        "off-chip link energy",
    ),
    key("p_static_core", Unit::Watt, "static power per host core"),
    key(
        "p_static_cache_per_mb",
        Unit::Watt,
        "cache static power per MB",
    ),
    key("e_op_host", Unit::Picojoule, "energy per host instruction"),
    key("e_op_nmc", Unit::Picojoule, "energy per NMC instruction"),
    key("n_instr", Unit::Plain, "dynamic instructions"),
    key("n_mem", Unit::Plain, "memory accesses"),
    key("m1", Unit::Plain, "L1 miss rate"),
    key("m2", Unit::Plain, "L2 local miss rate"),
    key("offload_fraction", Unit::Plain, "share of work offloaded"),
    key(
        "parallel_fraction",
        Unit::Plain,
        "parallelizable share of work",
    ),
    key(
        "reductions",
        Unit::Plain,
        "entropy bit reductions, ascending list",
    ),
    key(
        "line_pairs",
        Unit::Plain,
        "line sizes as consecutive doublings",
    ),
    key("capacity", Unit::Bytes, "LRU capacity for spatial locality"),
    key(
        "l2_capacity",
        Unit::Bytes,
        "L2 capacity for measured miss rates",
    ),
    key("weights", Unit::Plain, "spatial pair weights, or `uniform`"),
    key(
        "entropy_min",
        Unit::Plain,
        "advisor: minimum entropy in bits",
    ),
    key(
        "spatial_max",
        Unit::Plain,
        "advisor: maximum spatial locality",
    ),
    key(
        "parallelism_min",
        Unit::Plain,
        "advisor: minimum parallelism",
    ),
    key(
        "speedup_min",
        Unit::Plain,
        "advisor: minimum predicted speedup",
    ),
];

pub fn key_info(name: &str) -> Option<&'static KeyInfo> {
    KEYS.iter().find(|k| k.key == name)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolConfig {
    pub system: SystemConfig,
    pub energy: EnergyParams,
    pub workload: WorkloadProfile,
    pub characterization: CharacterizationConfig,
    pub thresholds: OffloadThresholds,
}

fn count<T: TryFrom<u64>>(v: f64) -> Result<T, String> {
    if v < 0.0 || v.fract() != 0.0 {
        return Err(format!("{v} is not a whole number"));
    }
    T::try_from(v as u64).map_err(|_| format!("{v} is out of range"))
}

fn list<T, F>(text: &str, parse: F) -> Result<Vec<T>, String>
where
    F: Fn(&str) -> Result<T, String>,
{
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(parse)
        .collect()
}

impl ToolConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ToolConfig::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ToolConfig::parse(&text)
    }

    /// Applies every `key = value` line of `text` on top of the current values.
    pub fn apply(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.trim().to_string(),
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| ConfigError::Line {
                    line: i + 1,
                    source: Box::new(e),
                })?;
        }
        Ok(())
    }

    /// Applies a single `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: pair.to_string(),
        })?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, name: &str, value: &str) -> Result<(), ConfigError> {
        let info = key_info(name).ok_or_else(|| ConfigError::UnknownKey {
            key: name.to_string(),
        })?;
        self.set_known(info, value)
            .map_err(|reason| ConfigError::InvalidValue {
                key: name.to_string(),
                reason,
            })
    }

    fn set_known(&mut self, info: &KeyInfo, value: &str) -> Result<(), String> {
        let num = || parse_quantity(value, info.unit);
        let s = &mut self.system;
        let e = &mut self.energy;
        let w = &mut self.workload;
        let c = &mut self.characterization;
        let t = &mut self.thresholds;
        match info.key {
            "n_cores" => s.n_cores = count(num()?)?,
            "f_host" => s.f_host = num()?,
            "f_nmc" => s.f_nmc = num()?,
            "s_l1" => s.s_l1 = count(num()?)?,
            "s_l2" => s.s_l2 = count(num()?)?,
            "s_dram" => s.s_dram = count(num()?)?,
            "bw_l1" => s.bw_l1 = num()?,
            "bw_l2" => s.bw_l2 = num()?,
            "lat_l1" => s.lat_l1 = num()?,
            "lat_l2" => s.lat_l2 = num()?,
            "line_size" => {
                s.line_size = count(num()?)?;
                c.line_size = s.line_size;
            }
            "n_vaults" => s.n_vaults = count(num()?)?,
            "bw_per_vault" => s.bw_per_vault = num()?,
            "n_links" => s.n_links = count(num()?)?,
            "bw_per_link" => s.bw_per_link = num()?,
            "ipc_host" => s.ipc_host = num()?,
            "ipc_nmc" => s.ipc_nmc = num()?,
            "n_nmc_cores" => {
                s.n_nmc_cores = if value.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(count(num()?)?)
                }
            }
            "t_launch" => s.t_launch = num()?,
            "overlap" => s.overlap = num()?,
            "e_dram_layer" => e.e_dram_layer = num()?,
            "e_logic_layer" => e.e_logic_layer = num()?,
            "p_static_nmc" => e.p_static_nmc = num()?,
            "e_l1_access" => e.e_l1_access = num()?,
            "e_l2_access" => e.e_l2_access = num()?,
            "e_offchip_link" => e.e_offchip_link = num()?,
            "p_static_core" => e.p_static_core = num()?,
            "p_static_cache_per_mb" => e.p_static_cache_per_mb = num()?,
            "e_op_host" => e.e_op_host = num()?,
            "e_op_nmc" => e.e_op_nmc = num()?,
            "n_instr" => w.n_instr = num()?,
            "n_mem" => w.n_mem = num()?,
            "m1" => w.m1 = num()?,
            "m2" => w.m2 = num()?,
            "offload_fraction" => w.offload_fraction = num()?,
            "parallel_fraction" => w.parallel_fraction = num()?,
            "reductions" => c.reductions = list(value, |v| count(parse_quantity(v, Unit::Plain)?))?,
            "line_pairs" => c.line_sizes = list(value, |v| count(parse_quantity(v, Unit::Bytes)?))?,
            "capacity" => c.capacity = count(num()?)?,
            "l2_capacity" => c.l2_capacity = count(num()?)?,
            "weights" => {
                c.weights = if value.eq_ignore_ascii_case("uniform") {
                    None
                } else {
                    Some(list(value, |v| parse_quantity(v, Unit::Plain))?)
                }
            }
            "entropy_min" => t.entropy_min = num()?,
            "spatial_max" => t.spatial_max = num()?,
            "parallelism_min" => t.parallelism_min = num()?,
            "speedup_min" => t.speedup_min = num()?,
            other => unreachable!("key table and setter disagree on `{other}`"),
        }
        Ok(())
    }

    /// Current value of `name` in its base unit, as it would be written in a file.
    pub fn get(&self, name: &str) -> Option<String> {
        let g = |v: f64| format_sig(v, 6);
        let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(",");
        let s = &self.system;
        let e = &self.energy;
        let w = &self.workload;
        let c = &self.characterization;
        let t = &self.thresholds;
        let with_unit = |v: f64, unit: &str| format!("{}{unit}", g(v));
        Some(match name {
            "n_cores" => s.n_cores.to_string(),
            "f_host" => with_unit(s.f_host, "Hz"),
            "f_nmc" => with_unit(s.f_nmc, "Hz"),
            "s_l1" => format!("{}B", s.s_l1),
            "s_l2" => format!("{}B", s.s_l2),
            "s_dram" => format!("{}B", s.s_dram),
            "bw_l1" => with_unit(s.bw_l1, "B/s"),
            "bw_l2" => with_unit(s.bw_l2, "B/s"),
            "lat_l1" => with_unit(s.lat_l1, "cycles"),
            "lat_l2" => with_unit(s.lat_l2, "cycles"),
            "line_size" => format!("{}B", s.line_size),
            "n_vaults" => s.n_vaults.to_string(),
            "bw_per_vault" => with_unit(s.bw_per_vault, "B/s"),
            "n_links" => s.n_links.to_string(),
            "bw_per_link" => with_unit(s.bw_per_link, "B/s"),
            "ipc_host" => g(s.ipc_host),
            "ipc_nmc" => g(s.ipc_nmc),
            "n_nmc_cores" => s
                .n_nmc_cores
                .map_or_else(|| "auto".to_string(), |n| n.to_string()),
            "t_launch" => with_unit(s.t_launch, "s"),
            "overlap" => g(s.overlap),
            "e_dram_layer" => with_unit(e.e_dram_layer, "pJ/b"),
            "e_logic_layer" => with_unit(e.e_logic_layer, "pJ/b"),
            "p_static_nmc" => with_unit(e.p_static_nmc, "W"),
            "e_l1_access" => with_unit(e.e_l1_access, "pJ/b"),
            "e_l2_access" => with_unit(e.e_l2_access, "pJ/b"),
            "e_offchip_link" => with_unit(e.e_offchip_link, "pJ/b"),
            "p_static_core" => with_unit(e.p_static_core, "W"),
            "p_static_cache_per_mb" => with_unit(e.p_static_cache_per_mb, "W"),
            "e_op_host" => with_unit(e.e_op_host, "pJ"),
            "e_op_nmc" => with_unit(e.e_op_nmc, "pJ"),
            "n_instr" => g(w.n_instr),
            "n_mem" => g(w.n_mem),
            "m1" => g(w.m1),
            "m2" => g(w.m2),
            "offload_fraction" => g(w.offload_fraction),
            "parallel_fraction" => g(w.parallel_fraction),
            "reductions" => join(&mut c.reductions.iter().map(|r| r.to_string())),
            "line_pairs" => join(&mut c.line_sizes.iter().map(|r| r.to_string())),
            "capacity" => format!("{}B", c.capacity),
            "l2_capacity" => format!("{}B", c.l2_capacity),
            "weights" => match &c.weights {
                None => "uniform".to_string(),
                Some(ws) => join(&mut ws.iter().map(|&x| g(x))),
            },
            "entropy_min" => g(t.entropy_min),
            "spatial_max" => g(t.spatial_max),
            "parallelism_min" => g(t.parallelism_min),
            "speedup_min" => g(t.speedup_min),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn fmt::Display| ConfigError::Invalid(e.to_string());
        self.system.validate().map_err(|e| invalid(&e))?;
        self.energy.validate().map_err(|e| invalid(&e))?;
        self.workload.validate().map_err(|e| invalid(&e))?;
        self.thresholds.validate().map_err(|e| invalid(&e))?;
        self.characterization
            .from_lines()
            .map_err(|e| invalid(&e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantities() {
        assert_eq!(parse_quantity("3GHz", Unit::Hertz).unwrap(), 3.0e9);
        assert_eq!(parse_quantity("1.2 GHz", Unit::Hertz).unwrap(), 1.2e9);
        assert_eq!(parse_quantity("32KB", Unit::Bytes).unwrap(), 32768.0);
        assert_eq!(parse_quantity("4GB", Unit::Bytes).unwrap(), 4294967296.0);
        assert_eq!(
            parse_quantity("16GB/s", Unit::BytesPerSecond).unwrap(),
            16.0e9
        );
        assert_eq!(
            parse_quantity("3.7pJ/b", Unit::PicojoulePerBit).unwrap(),
            3.7
        );
        assert_eq!(parse_quantity("960mW", Unit::Watt).unwrap(), 0.96);
        assert_eq!(parse_quantity("5us", Unit::Second).unwrap(), 5.0e-6);
        assert_eq!(parse_quantity("2 cycles", Unit::Cycles).unwrap(), 2.0);
        assert_eq!(parse_quantity("1e9", Unit::Plain).unwrap(), 1.0e9);
        assert_eq!(parse_quantity("1.5e-6s", Unit::Second).unwrap(), 1.5e-6);
        assert!(parse_quantity("3GB", Unit::Hertz).is_err());
        assert!(parse_quantity("fast", Unit::Hertz).is_err());
        assert!(parse_quantity("inf", Unit::Plain).is_err());
        assert!(parse_quantity("4x", Unit::Plain).is_err());
    }

    #[test]
    fn parse_file() {
        let cfg = ToolConfig::parse(
            "# comment\n\nf_host = 2GHz  # trailing\nn_vaults=32\nbw_per_link = 20GB/s\n\
             reductions = 0,4,8\nline_pairs = 16,32,64\nn_nmc_cores = 8\nweights = 1,3\n",
        )
        .unwrap();
        assert_eq!(cfg.system.f_host, 2.0e9);
        assert_eq!(cfg.system.n_vaults, 32);
        assert_eq!(cfg.system.bw_per_link, 20.0e9);
        assert_eq!(cfg.system.n_nmc_cores, Some(8));
        assert_eq!(cfg.characterization.reductions, vec![0, 4, 8]);
        assert_eq!(cfg.characterization.line_sizes, vec![16, 32, 64]);
        assert_eq!(cfg.characterization.weights, Some(vec![1.0, 3.0]));
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_key_is_named_with_line() {
        let err = ToolConfig::parse("n_cores = 4\nbogus_key = 1\n").unwrap_err();
        assert_eq!(err.key(), Some("bogus_key"));
        let msg = err.to_string();
        assert!(msg.contains("bogus_key") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn bad_values() {
        let mut cfg = ToolConfig::default();
        let err = cfg.set("n_cores", "2.5").unwrap_err();
        assert_eq!(err.key(), Some("n_cores"));
        assert!(cfg.set("f_host", "3GB").is_err());
        assert!(cfg.set_pair("no_equals").is_err());
        assert!(ToolConfig::parse("just words\n").is_err());
    }

    #[test]
    fn overrides() {
        let mut cfg = ToolConfig::default();
        cfg.set_pair("line_size=128").unwrap();
        assert_eq!(cfg.system.line_size, 128);
        assert_eq!(cfg.characterization.line_size, 128);
        cfg.set_pair("n_nmc_cores = auto").unwrap();
        assert_eq!(cfg.system.n_nmc_cores, None);
    }

    #[test]
    fn validation_catches_ranges() {
        let mut cfg = ToolConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.set("m1", "1.5").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn get_round_trips_through_set() {
        let defaults = ToolConfig::default();
        let mut cfg = ToolConfig::default();
        for k in KEYS {
            let v = defaults.get(k.key).unwrap();
            cfg.set(k.key, &v).unwrap();
        }
        assert_eq!(cfg, defaults);
        assert_eq!(defaults.get("f_host").unwrap(), "3e+09Hz");
        assert!(defaults.get("nope").is_none());
    }

    #[test]
    fn every_key_is_settable() {
        let mut cfg = ToolConfig::default();
        for k in KEYS {
            let value = match k.key {
                "reductions" => "0,3",
                "line_pairs" => "8,16",
                "weights" => "uniform",
                _ => "1",
            };
            cfg.set(k.key, value).unwrap();
        }
    }
}
