//! Run configuration: a TOML file with `[converter]`, `[control]` and `[sim]`
//! sections, plus `section.key=value` overrides.
//!
//! Every key is optional and falls back to the library defaults. Keys use
//! the circuit symbol names (`Vi`, `RDSon_hs`, `Vramp_pp`, ...).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::engine::{SimSettings, SweepAxis};
use crate::error::{Error, Result};
use crate::model::{ControlConfig, ConverterParams, Scheme, SwitchingLosses, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConverterSection {
    #[serde(rename = "Vi")]
    vi: f64,
    #[serde(rename = "L")]
    l: f64,
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "RL")]
    rl: f64,
    #[serde(rename = "RC")]
    rc: f64,
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "Vd")]
    vd: f64,
    #[serde(rename = "RDSon_hs")]
    rds_on_hs: f64,
    #[serde(rename = "RDSon_ls")]
    rds_on_ls: f64,
    fs: f64,
    #[serde(rename = "Iq")]
    iq: f64,
    topology: Topology,
    tr: f64,
    tf: f64,
    qg: f64,
    vg: f64,
    soft_switching: bool,
}

impl From<ConverterParams> for ConverterSection {
    fn from(p: ConverterParams) -> Self {
        ConverterSection {
            vi: p.vi,
            l: p.l,
            c: p.c,
            rl: p.rl,
            rc: p.rc,
            r: p.r,
            vd: p.vd,
            rds_on_hs: p.rds_on_hs,
            rds_on_ls: p.rds_on_ls,
            fs: p.fs,
            iq: p.iq,
            topology: p.topology,
            tr: p.switching.tr,
            tf: p.switching.tf,
            qg: p.switching.qg,
            vg: p.switching.vg,
            soft_switching: p.switching.soft_switching,
        }
    }
}

impl From<ConverterSection> for ConverterParams {
    fn from(s: ConverterSection) -> Self {
        ConverterParams {
            vi: s.vi,
            l: s.l,
            c: s.c,
            rl: s.rl,
            rc: s.rc,
            r: s.r,
            vd: s.vd,
            rds_on_hs: s.rds_on_hs,
            rds_on_ls: s.rds_on_ls,
            fs: s.fs,
            iq: s.iq,
            topology: s.topology,
            switching: SwitchingLosses {
                tr: s.tr,
                tf: s.tf,
                qg: s.qg,
                vg: s.vg,
                soft_switching: s.soft_switching,
            },
        }
    }
}

impl Default for ConverterSection {
    fn default() -> Self {
        ConverterParams::default().into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SchemeName {
    OpenLoop,
    VoltageMode,
    CurrentMode,
    Burst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ControlSection {
    scheme: SchemeName,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    d: Option<f64>,
    #[serde(rename = "Vref")]
    vref: f64,
    #[serde(rename = "Vo_target")]
    vo_target: f64,
    /// Defaults to `Vref / Vo_target`.
    #[serde(skip_serializing_if = "Option::is_none")]
    fb_ratio: Option<f64>,
    #[serde(rename = "Vramp_pp")]
    vramp_pp: f64,
    ramp_valley: f64,
    kp: f64,
    ki: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    slope_comp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ipk_cmd: Option<f64>,
    burst_hyst: f64,
    dead_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    windup_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    windup_hi: Option<f64>,
}

impl Default for ControlSection {
    fn default() -> Self {
        let c = ControlConfig::default();
        ControlSection {
            scheme: SchemeName::VoltageMode,
            d: None,
            vref: c.vref,
            vo_target: c.vo_target,
            fb_ratio: None,
            vramp_pp: c.vramp_pp,
            ramp_valley: c.ramp_valley,
            kp: c.kp,
            ki: c.ki,
            slope_comp: c.slope_comp,
            ipk_cmd: c.ipk_cmd,
            burst_hyst: c.burst_hyst,
            dead_time: c.dead_time,
            windup_lo: None,
            windup_hi: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum AxisName {
    Io,
    Vi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    t_end: Option<f64>,
    steps_per_period: usize,
    event_tol: f64,
    ss_tol: f64,
    max_periods: usize,
    accelerate: bool,
    trace_stride: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<AxisName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_from: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_to: Option<f64>,
    sweep_points: usize,
    sweep_log: bool,
    step_from: f64,
    step_to: f64,
    step_ramp: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = SimSettings::default();
        let step = StepSpec::default();
        SimSection {
            t_end: None,
            steps_per_period: s.steps_per_period,
            event_tol: s.event_tol,
            ss_tol: s.ss_tol,
            max_periods: s.max_periods,
            accelerate: s.accelerate,
            trace_stride: s.trace_stride,
            sweep: None,
            sweep_from: None,
            sweep_to: None,
            sweep_points: 10,
            sweep_log: false,
            step_from: step.from,
            step_to: step.to,
            step_ramp: step.ramp,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    converter: ConverterSection,
    control: ControlSection,
    sim: SimSection,
}

/// Sweep grid declared in `[sim]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub log: bool,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.log {
            crate::engine::log_space(self.from, self.to, self.points)
        } else {
            crate::engine::lin_space(self.from, self.to, self.points)
        }
    }
}

/// Load step declared in `[sim]` (amps, seconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSpec {
    pub from: f64,
    pub to: f64,
    pub ramp: f64,
}

impl Default for StepSpec {
    fn default() -> Self {
        StepSpec {
            from: 0.0,
            to: 0.3,
            ramp: 2e-6,
        }
    }
}

/// A fully parsed run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub converter: ConverterParams,
    pub control: ControlConfig,
    /// Duty given explicitly in `[control]`, if any.
    pub duty: Option<f64>,
    pub settings: SimSettings,
    pub t_end: Option<f64>,
    pub sweep: Option<SweepSpec>,
    pub step: StepSpec,
}

impl Default for Config {
    fn default() -> Self {
        RawConfig::default().try_into().expect("defaults are consistent")
    }
}

impl TryFrom<RawConfig> for Config {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Config> {
        let c = raw.control;
        let scheme = match c.scheme {
            SchemeName::OpenLoop => Scheme::OpenLoopDuty(
                c.d.ok_or_else(|| Error::Config("control.D is required for open_loop".into()))?,
            ),
            SchemeName::VoltageMode => Scheme::VoltageMode,
            SchemeName::CurrentMode => Scheme::CurrentMode,
            SchemeName::Burst => Scheme::Burst,
        };
        let windup = match (c.windup_lo, c.windup_hi) {
            (None, None) => None,
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => {
                return Err(Error::Config(
                    "control.windup_lo and control.windup_hi must be given together".into(),
                ))
            }
        };
        let control = ControlConfig {
            scheme,
            vref: c.vref,
            vo_target: c.vo_target,
            fb_ratio: c.fb_ratio.unwrap_or(c.vref / c.vo_target),
            vramp_pp: c.vramp_pp,
            ramp_valley: c.ramp_valley,
            kp: c.kp,
            ki: c.ki,
            slope_comp: c.slope_comp,
            ipk_cmd: c.ipk_cmd,
            burst_hyst: c.burst_hyst,
            dead_time: c.dead_time,
            windup,
        };

        let s = raw.sim;
        let settings = SimSettings {
            steps_per_period: s.steps_per_period,
            event_tol: s.event_tol,
            ss_tol: s.ss_tol,
            max_periods: s.max_periods,
            accelerate: s.accelerate,
            trace_stride: s.trace_stride,
        };
        let sweep = match s.sweep {
            None => None,
            Some(axis) => {
                let (from, to) = match (s.sweep_from, s.sweep_to) {
                    (Some(a), Some(b)) => (a, b),
                    _ => {
                        return Err(Error::Config(
                            "sim.sweep needs sim.sweep_from and sim.sweep_to".into(),
                        ))
                    }
                };
                if s.sweep_points == 0 {
                    return Err(Error::Config("sim.sweep_points must be at least 1".into()));
                }
                if s.sweep_log && !(from > 0.0 && to > 0.0) {
                    return Err(Error::Config("log sweep bounds must be positive".into()));
                }
                Some(SweepSpec {
                    axis: match axis {
                        AxisName::Io => SweepAxis::Io,
                        AxisName::Vi => SweepAxis::Vi,
                    },
                    from,
                    to,
                    points: s.sweep_points,
                    log: s.sweep_log,
                })
            }
        };
        Ok(Config {
            converter: raw.converter.into(),
            control,
            duty: c.d,
            settings,
            t_end: s.t_end,
            sweep,
            step: StepSpec {
                from: s.step_from,
                to: s.step_to,
                ramp: s.step_ramp,
            },
        })
    }
}

impl From<&Config> for RawConfig {
    fn from(cfg: &Config) -> Self {
        let c = &cfg.control;
        let (scheme, d) = match c.scheme {
            Scheme::OpenLoopDuty(d) => (SchemeName::OpenLoop, Some(d)),
            Scheme::VoltageMode => (SchemeName::VoltageMode, cfg.duty),
            Scheme::CurrentMode => (SchemeName::CurrentMode, cfg.duty),
            Scheme::Burst => (SchemeName::Burst, cfg.duty),
        };
        let s = &cfg.settings;
        RawConfig {
            converter: cfg.converter.into(),
            control: ControlSection {
                scheme,
                d,
                vref: c.vref,
                vo_target: c.vo_target,
                fb_ratio: Some(c.fb_ratio),
                vramp_pp: c.vramp_pp,
                ramp_valley: c.ramp_valley,
                kp: c.kp,
                ki: c.ki,
                slope_comp: c.slope_comp,
                ipk_cmd: c.ipk_cmd,
                burst_hyst: c.burst_hyst,
                dead_time: c.dead_time,
                windup_lo: c.windup.map(|w| w.0),
                windup_hi: c.windup.map(|w| w.1),
            },
            sim: SimSection {
                t_end: cfg.t_end,
                steps_per_period: s.steps_per_period,
                event_tol: s.event_tol,
                ss_tol: s.ss_tol,
                max_periods: s.max_periods,
                accelerate: s.accelerate,
                trace_stride: s.trace_stride,
                sweep: cfg.sweep.map(|w| match w.axis {
                    SweepAxis::Io => AxisName::Io,
                    SweepAxis::Vi => AxisName::Vi,
                }),
                sweep_from: cfg.sweep.map(|w| w.from),
                sweep_to: cfg.sweep.map(|w| w.to),
                sweep_points: cfg.sweep.map_or(10, |w| w.points),
                sweep_log: cfg.sweep.is_some_and(|w| w.log),
                step_from: cfg.step.from,
                step_to: cfg.step.to,
                step_ramp: cfg.step.ramp,
            },
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string so that
/// `control.scheme=burst` works without quotes.
fn override_value(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.into())),
        Err(_) => toml::Value::String(value.into()),
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("override key `{key}` is not section.key")))?;
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = entry else {
        return Err(Error::Config(format!("`{section}` is not a section")));
    };
    sec.insert(field.to_string(), override_value(value.trim()));
    Ok(())
}

impl Config {
    /// Parses config text and applies `section.key=value` overrides in order.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Config> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let raw: RawConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        Config::try_from(raw)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::Config(format!("config not found: {}", path.display()))
            } else {
                Error::Config(format!("cannot read {}: {e}", path.display()))
            }
        })?;
        Config::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&RawConfig::from(self)).expect("config sections serialize")
    }

    /// Duty for the analytic report: `D` when given, otherwise the duty that
    /// reaches `Vo_target` in continuous conduction.
    pub fn analysis_duty(&self) -> Result<f64> {
        match (self.control.scheme, self.duty) {
            (Scheme::OpenLoopDuty(d), _) | (_, Some(d)) => Ok(d),
            _ => analysis::duty_for_vo(&self.converter, self.control.vo_target),
        }
    }
}
