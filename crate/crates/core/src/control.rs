//! Cycle-by-cycle modulators.
//!
//! All modulators run once per clock edge: the engine hands them the
//! measured output and they return either a duty command, a peak-current
//! command or a burst decision. Switch sequencing for the synchronous stage
//! (dead time on both edges) also lives here.

use crate::model::{ControlConfig, Scheme, TimingSolution, Topology};

/// Compensator and burst comparator memory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerState {
    /// Integral of the error (V·s), clamped for anti-windup.
    pub integrator: f64,
    /// Burst comparator latched in the skip state.
    pub skipping: bool,
    pub last_clock: f64,
    /// Output measurement used at the next clock edge: the mean terminal
    /// voltage over the previous period.
    pub vo_meas: f64,
}

impl ControllerState {
    /// State whose integral term alone produces `u` with zero error.
    pub fn preset(cfg: &ControlConfig, u: f64, vo_meas: f64) -> Self {
        let integrator = if cfg.ki != 0.0 { u / cfg.ki } else { 0.0 };
        ControllerState {
            integrator,
            skipping: false,
            last_clock: 0.0,
            vo_meas,
        }
    }
}

/// Error amplifier: PI on `Vref - vo * fb_ratio`, integrated over `dt`.
/// Returns the compensator output (ramp volts, or amps in current mode).
pub fn compensate(vo: f64, cfg: &ControlConfig, st: &mut ControllerState, dt: f64) -> f64 {
    let e = cfg.vref - vo * cfg.fb_ratio;
    if cfg.ki != 0.0 {
        let (lo, hi) = cfg.windup_range();
        let (a, b) = (lo / cfg.ki, hi / cfg.ki);
        st.integrator = (st.integrator + e * dt).clamp(a.min(b), a.max(b));
    }
    cfg.kp * e + cfg.ki * st.integrator
}

/// Voltage-to-pulse conversion: compare the control voltage with the ramp.
pub fn ramp_duty(vctrl: f64, cfg: &ControlConfig) -> f64 {
    ((vctrl - cfg.ramp_valley) / cfg.vramp_pp).clamp(0.0, 1.0)
}

pub fn voltage_mode_duty(vo: f64, cfg: &ControlConfig, st: &mut ControllerState, dt: f64) -> f64 {
    let vctrl = compensate(vo, cfg, st, dt);
    ramp_duty(vctrl, cfg)
}

/// Peak-current command for the next cycle: the fixed command when one is
/// configured, otherwise the voltage-loop compensator output.
pub fn peak_current_command(
    vo: f64,
    cfg: &ControlConfig,
    st: &mut ControllerState,
    dt: f64,
) -> f64 {
    match (cfg.scheme, cfg.ipk_cmd) {
        (Scheme::Burst, Some(i)) | (Scheme::CurrentMode, Some(i)) => i,
        _ => compensate(vo, cfg, st, dt).max(0.0),
    }
}

/// Piecewise-linear inductor current: rises at `rise` from `i0` while the
/// high side is on, falls at `fall` (magnitude) afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearCurrent {
    pub i0: f64,
    pub rise: f64,
    pub fall: f64,
}

/// Peak current-mode cycle on a linear current trajectory. The high side
/// turns off where `i(t) + slope_comp * t` reaches `ipk_cmd`; if that never
/// happens within the period the duty saturates at 1.
pub fn current_mode_cycle(
    traj: &LinearCurrent,
    ipk_cmd: f64,
    slope_comp: f64,
    ts: f64,
    topology: Topology,
) -> TimingSolution {
    let gap = ipk_cmd - traj.i0;
    let rate = traj.rise + slope_comp;
    let t_off = if gap <= 0.0 {
        0.0
    } else if rate <= 0.0 {
        ts
    } else {
        (gap / rate).min(ts)
    };
    let d = t_off / ts;
    let i_peak = traj.i0 + traj.rise * t_off;
    let d2 = match topology {
        Topology::Asynchronous if traj.fall > 0.0 => {
            let t_fall = i_peak.max(0.0) / traj.fall;
            (t_fall / ts).min(1.0 - d)
        }
        _ => 1.0 - d,
    };
    TimingSolution::new(d, d2, ts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BurstAction {
    RunCycle,
    SkipCycle,
}

/// Hysteretic burst comparator on the divided output.
pub fn burst_decision(vo: f64, cfg: &ControlConfig, st: &mut ControllerState) -> BurstAction {
    let v = vo * cfg.fb_ratio;
    if st.skipping {
        if v < cfg.vref - cfg.burst_hyst {
            st.skipping = false;
        }
    } else if v > cfg.vref + cfg.burst_hyst {
        st.skipping = true;
    }
    if st.skipping {
        BurstAction::SkipCycle
    } else {
        BurstAction::RunCycle
    }
}

/// Gate state over `[previous valid_until, valid_until)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchCommand {
    pub high_side: bool,
    pub low_side: bool,
    pub valid_until: f64,
}

impl SwitchCommand {
    fn high(until: f64) -> Self {
        SwitchCommand {
            high_side: true,
            low_side: false,
            valid_until: until,
        }
    }
    fn low(until: f64) -> Self {
        SwitchCommand {
            high_side: false,
            low_side: true,
            valid_until: until,
        }
    }
    fn none(until: f64) -> Self {
        SwitchCommand {
            high_side: false,
            low_side: false,
            valid_until: until,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSequence {
    pub commands: Vec<SwitchCommand>,
    /// The on-time was shorter than both dead times and the high side was
    /// suppressed for this cycle.
    pub min_on_violation: bool,
}

/// Gate commands after the high side opens at `t_off` (cycle-relative).
pub fn freewheel_tail(
    t_off: f64,
    dead_time: f64,
    ts: f64,
    topology: Topology,
) -> Vec<SwitchCommand> {
    let mut out = Vec::with_capacity(3);
    let mut push = |c: SwitchCommand, start: f64| {
        if c.valid_until > start {
            out.push(c);
        }
    };
    match topology {
        Topology::Asynchronous => push(SwitchCommand::none(ts), t_off),
        Topology::Synchronous => {
            let lead_end = (t_off + dead_time).min(ts);
            let low_end = (ts - dead_time).max(lead_end);
            push(SwitchCommand::none(lead_end), t_off);
            push(SwitchCommand::low(low_end), lead_end);
            push(SwitchCommand::none(ts), low_end);
        }
    }
    out
}

/// Complementary drive with dead time on both edges.
pub fn sequence_synchronous(d_cmd: f64, dead_time: f64, ts: f64) -> SwitchSequence {
    let t_on = d_cmd.clamp(0.0, 1.0) * ts;
    let violation = t_on > 0.0 && t_on < 2.0 * dead_time;
    let t_on = if violation { 0.0 } else { t_on };
    let mut commands = Vec::with_capacity(4);
    if t_on > 0.0 {
        commands.push(SwitchCommand::high(t_on));
    }
    commands.extend(freewheel_tail(t_on, dead_time, ts, Topology::Synchronous));
    SwitchSequence {
        commands,
        min_on_violation: violation,
    }
}

pub fn sequence_asynchronous(d_cmd: f64, ts: f64) -> SwitchSequence {
    let t_on = d_cmd.clamp(0.0, 1.0) * ts;
    let mut commands = Vec::with_capacity(2);
    if t_on > 0.0 {
        commands.push(SwitchCommand::high(t_on));
    }
    commands.extend(freewheel_tail(t_on, 0.0, ts, Topology::Asynchronous));
    SwitchSequence {
        commands,
        min_on_violation: false,
    }
}
