use std::fmt;

use rayon::prelude::*;

use crate::error::Result;
use crate::model::{ControlConfig, ConverterParams};

use super::cycle::Simulator;
use super::measure::Metrics;
use super::steady::run_to_steady_state;
use super::step::{load_conductance, nominal_vo};
use super::{LoadProfile, SimSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Load current (A) at the nominal output voltage.
    Io,
    /// Input voltage (V).
    Vi,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Io => "Io",
            SweepAxis::Vi => "Vi",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub result: Result<Metrics>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    /// Endpoint slope of `Vo_avg` over the input-voltage axis (V/V).
    pub line_regulation: Option<f64>,
}

pub fn lin_space(from: f64, to: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![from],
        _ => (0..n)
            .map(|i| from + (to - from) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `n` points evenly spaced in log scale; both ends must be positive.
pub fn log_space(from: f64, to: f64, n: usize) -> Vec<f64> {
    lin_space(from.ln(), to.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}

fn point(
    params: &ConverterParams,
    cfg: &ControlConfig,
    settings: &SimSettings,
    axis: SweepAxis,
    value: f64,
) -> Result<Metrics> {
    let mut p = *params;
    let sim = match axis {
        SweepAxis::Vi => {
            p.vi = value;
            Simulator::new(&p, cfg, settings)?
        }
        SweepAxis::Io => {
            let g = load_conductance(value, nominal_vo(&p, cfg));
            Simulator::new(&p, cfg, settings)?.with_load(LoadProfile::Constant(g))
        }
    };
    run_to_steady_state(&sim).map(|r| r.metrics)
}

/// Steady state at every grid point. Points run in parallel; rows come back
/// in grid order and a failing point does not stop the others.
pub fn sweep(
    params: &ConverterParams,
    cfg: &ControlConfig,
    settings: &SimSettings,
    axis: SweepAxis,
    values: &[f64],
) -> SweepTable {
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&value| SweepRow {
            value,
            result: point(params, cfg, settings, axis, value),
        })
        .collect();
    let line_regulation = match axis {
        SweepAxis::Vi => {
            let ok: Vec<(f64, f64)> = rows
                .iter()
                .filter_map(|r| r.result.as_ref().ok().map(|m| (r.value, m.vo_avg)))
                .collect();
            match (ok.first(), ok.last()) {
                (Some(a), Some(b)) if b.0 != a.0 => Some((b.1 - a.1) / (b.0 - a.0)),
                _ => None,
            }
        }
        SweepAxis::Io => None,
    };
    SweepTable {
        axis,
        rows,
        line_regulation,
    }
}
