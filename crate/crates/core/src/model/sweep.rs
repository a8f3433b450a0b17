//! Cartesian sweeps over miss rates and HMC geometry.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compare, ComparisonResult, EnergyParams, ModelError, SystemConfig, WorkloadProfile};
use crate::numfmt::format_sig;

pub const SWEEP_CSV_HEADER: &str =
    "m1,m2,n_vaults,n_links,t_host,t_nmc,e_host,e_nmc,norm_delay,norm_energy";

/// Values of one sweep axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis(pub Vec<f64>);

impl GridAxis {
    /// Inclusive `start:end:step` range.
    pub fn range(start: f64, end: f64, step: f64) -> Result<Self, ModelError> {
        if step.is_nan() || step <= 0.0 || !start.is_finite() || !end.is_finite() {
            return Err(ModelError::InvalidSweep(format!(
                "bad range {start}:{end}:{step}"
            )));
        }
        if end < start {
            return Ok(GridAxis(Vec::new()));
        }
        let count = ((end - start) / step + 1e-9).floor() as usize + 1;
        // Rounded so that 0.1 steps land on 0.3 rather than 0.30000000000000004.
        let values = (0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect();
        Ok(GridAxis(values))
    }

    /// `v` or `start:end:step`.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let bad = || ModelError::InvalidSweep(format!("cannot parse axis `{text}`"));
        let nums: Vec<f64> = text
            .split(':')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        match nums.as_slice() {
            [v] => Ok(GridAxis(vec![*v])),
            [a, b, c] => GridAxis::range(*a, *b, *c),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    /// Empty keeps the configured vault count.
    pub n_vaults: Vec<u32>,
    /// Empty keeps the configured link count.
    pub n_links: Vec<u32>,
}

impl SweepSpec {
    /// 11 x 11 grid over `m1, m2` in steps of 0.1.
    pub fn miss_rate_grid() -> Self {
        let axis = GridAxis::range(0.0, 1.0, 0.1).expect("static range").0;
        SweepSpec {
            m1: axis.clone(),
            m2: axis,
            n_vaults: Vec::new(),
            n_links: Vec::new(),
        }
    }

    /// Parses `m1=0:1:0.1,m2=0:1:0.1[,n_vaults=..][,n_links=..]`.
    pub fn parse(grid: &str) -> Result<Self, ModelError> {
        let mut spec = SweepSpec {
            m1: Vec::new(),
            m2: Vec::new(),
            n_vaults: Vec::new(),
            n_links: Vec::new(),
        };
        for part in grid.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(|| {
                ModelError::InvalidSweep(format!("expected axis=range, got `{part}`"))
            })?;
            let axis = GridAxis::parse(value)?.0;
            let counts = || -> Result<Vec<u32>, ModelError> {
                axis.iter()
                    .map(|&v| {
                        if v >= 1.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX) {
                            Ok(v as u32)
                        } else {
                            Err(ModelError::InvalidSweep(format!(
                                "{key} values must be positive integers, got {v}"
                            )))
                        }
                    })
                    .collect()
            };
            match key.trim() {
                "m1" => spec.m1 = axis,
                "m2" => spec.m2 = axis,
                "n_vaults" => spec.n_vaults = counts()?,
                "n_links" => spec.n_links = counts()?,
                other => return Err(ModelError::InvalidSweep(format!("unknown axis `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.m1.is_empty() || self.m2.is_empty() {
            return Err(ModelError::InvalidSweep(
                "empty grid: m1 and m2 need at least one value".into(),
            ));
        }
        if let Some(v) = self
            .m1
            .iter()
            .chain(&self.m2)
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(ModelError::InvalidSweep(format!(
                "miss rate {v} outside [0, 1]"
            )));
        }
        if self.n_vaults.contains(&0) || self.n_links.contains(&0) {
            return Err(ModelError::InvalidSweep(
                "vault and link counts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m1: f64,
    pub m2: f64,
    pub n_vaults: u32,
    pub n_links: u32,
    pub result: ComparisonResult,
}

/// Evaluates every grid point. Rows come out in lexicographic order over
/// `(m1, m2, n_vaults, n_links)` regardless of evaluation order.
pub fn sweep(
    grid: &SweepSpec,
    base: &WorkloadProfile,
    s: &SystemConfig,
    ep: &EnergyParams,
) -> Result<Vec<SweepRow>, ModelError> {
    grid.validate()?;
    let vaults = if grid.n_vaults.is_empty() {
        vec![s.n_vaults]
    } else {
        grid.n_vaults.clone()
    };
    let links = if grid.n_links.is_empty() {
        vec![s.n_links]
    } else {
        grid.n_links.clone()
    };

    let mut points = Vec::with_capacity(grid.m1.len() * grid.m2.len() * vaults.len() * links.len());
    for &m1 in &grid.m1 {
        for &m2 in &grid.m2 {
            for &v in &vaults {
                for &l in &links {
                    points.push((m1, m2, v, l));
                }
            }
        }
    }

    points
        .into_par_iter()
        .map(|(m1, m2, n_vaults, n_links)| {
            let p = WorkloadProfile {
                m1,
                m2,
                ..base.clone()
            };
            let sys = SystemConfig {
                n_vaults,
                n_links,
                ..s.clone()
            };
            Ok(SweepRow {
                m1,
                m2,
                n_vaults,
                n_links,
                result: compare(&p, &sys, ep)?,
            })
        })
        .collect()
}

/// CSV with [`SWEEP_CSV_HEADER`], floats at six significant digits.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    let g = |x: f64| format_sig(x, 6);
    for r in rows {
        let c = &r.result;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            g(r.m1),
            g(r.m2),
            r.n_vaults,
            r.n_links,
            g(c.host.t_total),
            g(c.nmc.t_total),
            g(c.host.e_total),
            g(c.nmc.e_total),
            g(c.normalized_delay),
            g(c.normalized_energy),
        )?;
    }
    Ok(())
}
