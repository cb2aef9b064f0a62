//! Domain types shared by the analysis, dynamics, control and engine modules.
//!
//! Every type here is a plain value: cheap to clone and safe to send between
//! threads. [`validate`] is the single place where the electrical parameter
//! invariants are checked.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power-stage topology.
///
/// The asynchronous stage freewheels through a diode with a constant forward
/// drop and can never carry negative inductor current. The synchronous stage
/// freewheels through a low-side switch, so forced-PWM operation lets the
/// inductor current reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Asynchronous,
    Synchronous,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Asynchronous => f.write_str("asynchronous"),
            Topology::Synchronous => f.write_str("synchronous"),
        }
    }
}

/// Per-edge switching loss model of the high-side switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingLosses {
    /// Current rise time during the turn-on overlap (s).
    pub tr: f64,
    /// Current fall time during the turn-off overlap (s).
    pub tf: f64,
    /// Gate charge (C).
    pub qg: f64,
    /// Gate drive voltage (V).
    pub vg: f64,
    /// Zero-voltage switching: drops the V·I overlap term, keeps gate charge.
    pub soft_switching: bool,
}

impl SwitchingLosses {
    pub const NONE: SwitchingLosses = SwitchingLosses {
        tr: 0.0,
        tf: 0.0,
        qg: 0.0,
        vg: 0.0,
        soft_switching: false,
    };

    /// Energy lost in one switching cycle whose peak inductor current is `ipk`.
    pub fn energy_per_cycle(&self, vi: f64, ipk: f64) -> f64 {
        let overlap = if self.soft_switching {
            0.0
        } else {
            0.5 * vi * ipk.abs() * (self.tr + self.tf)
        };
        overlap + self.qg * self.vg
    }
}

impl Default for SwitchingLosses {
    fn default() -> Self {
        // 1 nJ of gate energy per cycle.
        SwitchingLosses {
            tr: 5e-9,
            tf: 5e-9,
            qg: 0.25e-9,
            vg: 4.0,
            soft_switching: false,
        }
    }
}

/// Electrical parameters of the buck power stage. Keys in the config file use
/// the circuit symbol names (`Vi`, `L`, `RDSon_hs`, ...).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterParams {
    pub vi: f64,
    pub l: f64,
    pub c: f64,
    /// Inductor DC resistance.
    pub rl: f64,
    /// Output capacitor ESR.
    pub rc: f64,
    /// Load resistance.
    pub r: f64,
    /// Freewheel diode forward drop (body diode in the synchronous stage).
    pub vd: f64,
    pub rds_on_hs: f64,
    pub rds_on_ls: f64,
    pub fs: f64,
    /// Controller quiescent current drawn from the input.
    pub iq: f64,
    pub topology: Topology,
    pub switching: SwitchingLosses,
}

impl ConverterParams {
    /// Switching period.
    pub fn ts(&self) -> f64 {
        1.0 / self.fs
    }

    /// Lossless asynchronous stage with the default reactive components.
    pub fn ideal(vi: f64, r: f64) -> Self {
        ConverterParams {
            vi,
            rl: 0.0,
            rc: 0.0,
            r,
            vd: 0.0,
            rds_on_hs: 0.0,
            rds_on_ls: 0.0,
            iq: 0.0,
            topology: Topology::Asynchronous,
            switching: SwitchingLosses::NONE,
            ..Self::default()
        }
    }

    /// Voltage across the freewheel path while it conducts `il`.
    pub fn freewheel_drop(&self, il: f64) -> f64 {
        match self.topology {
            Topology::Asynchronous => self.vd,
            Topology::Synchronous => il * self.rds_on_ls,
        }
    }
}

impl Default for ConverterParams {
    fn default() -> Self {
        ConverterParams {
            vi: 3.6,
            l: 10e-6,
            c: 22e-6,
            rl: 0.05,
            rc: 0.02,
            r: 6.0,
            vd: 0.7,
            rds_on_hs: 0.1,
            rds_on_ls: 0.08,
            fs: 500e3,
            iq: 35e-6,
            topology: Topology::Synchronous,
            switching: SwitchingLosses::default(),
        }
    }
}

/// Parameters that passed [`validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatedParams(ConverterParams);

impl ValidatedParams {
    pub fn into_inner(self) -> ConverterParams {
        self.0
    }
}

impl Deref for ValidatedParams {
    type Target = ConverterParams;

    fn deref(&self) -> &ConverterParams {
        &self.0
    }
}

/// Checks every parameter invariant and reports the first violation.
pub fn validate(params: ConverterParams) -> Result<ValidatedParams> {
    fn positive(name: &'static str, v: f64) -> Result<()> {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name,
                requirement: "positive",
            })
        }
    }
    fn non_negative(name: &'static str, v: f64) -> Result<()> {
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name,
                requirement: "non-negative",
            })
        }
    }

    positive("Vi", params.vi)?;
    positive("L", params.l)?;
    positive("C", params.c)?;
    positive("R", params.r)?;
    positive("fs", params.fs)?;
    non_negative("RL", params.rl)?;
    non_negative("RC", params.rc)?;
    non_negative("Vd", params.vd)?;
    non_negative("RDSon_hs", params.rds_on_hs)?;
    non_negative("RDSon_ls", params.rds_on_ls)?;
    non_negative("Iq", params.iq)?;
    non_negative("tr", params.switching.tr)?;
    non_negative("tf", params.switching.tf)?;
    non_negative("qg", params.switching.qg)?;
    non_negative("vg", params.switching.vg)?;
    let ts = params.ts();
    if !(ts.is_finite() && ts > 0.0) {
        return Err(Error::InvalidParameter {
            name: "Ts",
            requirement: "finite and positive",
        });
    }
    Ok(ValidatedParams(params))
}

/// Which conduction path carries the inductor current.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConductionState {
    /// High-side switch conducting.
    On,
    /// Freewheel path conducting: the diode, or the low-side switch.
    Off,
    /// Both paths blocked, inductor current is zero.
    Idle,
    /// Synchronous dead time: both switches off, a body diode carries the
    /// current (low-side body diode for positive current, high-side for
    /// negative).
    DeadTime,
}

impl ConductionState {
    pub fn label(self) -> &'static str {
        match self {
            ConductionState::On => "on",
            ConductionState::Off => "off",
            ConductionState::Idle => "idle",
            ConductionState::DeadTime => "dead",
        }
    }
}

/// Instantaneous plant state. `vc` is the voltage behind the ESR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub il: f64,
    pub vc: f64,
    pub t: f64,
    pub cond: ConductionState,
}

impl PlantState {
    pub fn new(il: f64, vc: f64, t: f64, cond: ConductionState) -> Self {
        let il = if cond == ConductionState::Idle { 0.0 } else { il };
        PlantState { il, vc, t, cond }
    }

    pub fn zero() -> Self {
        PlantState::new(0.0, 0.0, 0.0, ConductionState::Idle)
    }
}

/// Decomposition of one switching period into on, freewheel and idle parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingSolution {
    pub d: f64,
    pub d2: f64,
    pub d3: f64,
    pub ts: f64,
    pub t_on: f64,
    pub t_off: f64,
}

impl TimingSolution {
    /// Builds the partition from `d` and `d2`; the idle fraction takes the rest.
    pub fn new(d: f64, d2: f64, ts: f64) -> Self {
        let d = d.clamp(0.0, 1.0);
        let d2 = d2.clamp(0.0, 1.0 - d);
        let d3 = (1.0 - d - d2).max(0.0);
        TimingSolution {
            d,
            d2,
            d3,
            ts,
            t_on: d * ts,
            t_off: d2 * ts,
        }
    }

    pub fn ccm(d: f64, ts: f64) -> Self {
        let d = d.clamp(0.0, 1.0);
        TimingSolution::new(d, 1.0 - d, ts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConductionMode {
    Ccm,
    Dcm,
}

impl fmt::Display for ConductionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConductionMode::Ccm => f.write_str("CCM"),
            ConductionMode::Dcm => f.write_str("DCM"),
        }
    }
}

/// Steady-state operating point, analytical or measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateReport {
    pub vo_avg: f64,
    /// Peak-to-peak inductor ripple.
    pub d_il: f64,
    pub ipk: f64,
    pub io: f64,
    pub k: f64,
    pub mode: ConductionMode,
    pub timing: TimingSolution,
    /// Only present for measured reports.
    pub efficiency: Option<f64>,
}

/// Modulator selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    OpenLoopDuty(f64),
    VoltageMode,
    CurrentMode,
    Burst,
}

impl Scheme {
    pub fn is_closed_loop(self) -> bool {
        !matches!(self, Scheme::OpenLoopDuty(_))
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::OpenLoopDuty(_) => "open_loop",
            Scheme::VoltageMode => "voltage_mode",
            Scheme::CurrentMode => "current_mode",
            Scheme::Burst => "burst",
        }
    }
}

/// Modulator and compensator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlConfig {
    pub scheme: Scheme,
    pub vref: f64,
    /// Regulated output the divider is designed for.
    pub vo_target: f64,
    /// Output divider ratio; `vo_target * fb_ratio == vref` at the setpoint.
    pub fb_ratio: f64,
    pub vramp_pp: f64,
    pub ramp_valley: f64,
    pub kp: f64,
    pub ki: f64,
    /// Compensation ramp slope (A/s). `None` selects one Off-state slope,
    /// `vo_target / L`.
    pub slope_comp: Option<f64>,
    /// Fixed peak-current command. Required by `Burst`; in `CurrentMode` it
    /// opens the voltage loop.
    pub ipk_cmd: Option<f64>,
    /// Hysteresis half-band on the divided output (V).
    pub burst_hyst: f64,
    pub dead_time: f64,
    /// Anti-windup range of the integral term `ki * integrator`. `None`
    /// selects the ramp span (voltage mode) or `[0, 2 A]` (current mode).
    pub windup: Option<(f64, f64)>,
}

impl ControlConfig {
    pub const DEFAULT_VREF: f64 = 1.23;
    pub const DEFAULT_VO_TARGET: f64 = 1.8;
    const CURRENT_MODE_IPK_MAX: f64 = 2.0;

    pub fn open_loop(d: f64) -> Self {
        ControlConfig {
            scheme: Scheme::OpenLoopDuty(d),
            dead_time: 0.0,
            ..Self::default()
        }
    }

    pub fn with_scheme(scheme: Scheme) -> Self {
        ControlConfig {
            scheme,
            ..Self::default()
        }
    }

    /// Output voltage that puts the divided feedback exactly at `vref`.
    pub fn regulated_output(&self) -> f64 {
        self.vref / self.fb_ratio
    }

    pub fn slope_comp_for(&self, params: &ConverterParams) -> f64 {
        self.slope_comp
            .unwrap_or(self.regulated_output() / params.l)
    }

    pub fn windup_range(&self) -> (f64, f64) {
        self.windup.unwrap_or(match self.scheme {
            Scheme::CurrentMode | Scheme::Burst => (0.0, Self::CURRENT_MODE_IPK_MAX),
            _ => (self.ramp_valley, self.ramp_valley + self.vramp_pp),
        })
    }

    pub fn validate(&self, params: &ConverterParams) -> Result<()> {
        let bad = |name, requirement| Err(Error::InvalidParameter { name, requirement });
        if !(self.vramp_pp.is_finite() && self.vramp_pp > 0.0) {
            return bad("Vramp_pp", "positive");
        }
        if !(self.vref.is_finite() && self.vref > 0.0) {
            return bad("Vref", "positive");
        }
        if !(self.fb_ratio > 0.0 && self.fb_ratio <= 1.0) {
            return bad("fb_ratio", "in (0, 1]");
        }
        if !(self.dead_time >= 0.0 && self.dead_time < params.ts() / 2.0) {
            return bad("dead_time", "non-negative and below Ts/2");
        }
        if let Scheme::OpenLoopDuty(d) = self.scheme {
            if !(0.0..=1.0).contains(&d) {
                return bad("D", "in [0, 1]");
            }
        }
        if self.scheme == Scheme::Burst {
            if !(self.burst_hyst.is_finite() && self.burst_hyst > 0.0) {
                return bad("burst_hyst", "positive in burst mode");
            }
            if !matches!(self.ipk_cmd, Some(i) if i > 0.0) {
                return bad("ipk_cmd", "positive in burst mode");
            }
        }
        if let Some(mc) = self.slope_comp {
            if !(mc.is_finite() && mc >= 0.0) {
                return bad("slope_comp", "non-negative");
            }
        }
        let (lo, hi) = self.windup_range();
        if !(lo <= hi) {
            return bad("windup_lo", "not above windup_hi");
        }
        Ok(())
    }
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            scheme: Scheme::VoltageMode,
            vref: Self::DEFAULT_VREF,
            vo_target: Self::DEFAULT_VO_TARGET,
            fb_ratio: Self::DEFAULT_VREF / Self::DEFAULT_VO_TARGET,
            vramp_pp: 12.0,
            ramp_valley: 0.5,
            kp: 0.5,
            ki: 2e4,
            slope_comp: None,
            ipk_cmd: Some(0.6),
            burst_hyst: 0.01 * Self::DEFAULT_VREF,
            dead_time: 20e-9,
            windup: None,
        }
    }
}
