//! Piecewise-linear state equations of the power stage.
//!
//! State is the inductor current `il` and the capacitor voltage `vc` behind
//! the ESR. The terminal voltage `vo` is algebraic:
//! `vo = R (vc + RC il) / (R + RC)`.
//!
//! The engine drives the load through a conductance so that an open circuit
//! (`g = 0`) is representable; the public functions use `1 / params.r`.

use crate::error::{Error, Result};
use crate::model::{ConductionState, ConverterParams, PlantState, Topology};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub dil_dt: f64,
    pub dvc_dt: f64,
}

/// Terminal voltage of the output network.
pub fn output_voltage(state: &PlantState, params: &ConverterParams) -> f64 {
    output_voltage_g(state.cond, state.il, state.vc, params.rc, 1.0 / params.r)
}

pub(crate) fn output_voltage_g(cond: ConductionState, il: f64, vc: f64, rc: f64, g: f64) -> f64 {
    let il = if cond == ConductionState::Idle { 0.0 } else { il };
    (vc + rc * il) / (1.0 + rc * g)
}

/// Voltage the switch node applies to the left side of the inductor, not
/// counting the DCR drop.
pub(crate) fn switch_node_voltage(cond: ConductionState, il: f64, params: &ConverterParams) -> f64 {
    match cond {
        ConductionState::On => params.vi - il * params.rds_on_hs,
        ConductionState::Off => match params.topology {
            Topology::Asynchronous => -params.vd,
            Topology::Synchronous => -il * params.rds_on_ls,
        },
        ConductionState::DeadTime => {
            if il > 0.0 {
                -params.vd
            } else if il < 0.0 {
                params.vi + params.vd
            } else {
                0.0
            }
        }
        ConductionState::Idle => 0.0,
    }
}

pub(crate) fn derivative_g(
    cond: ConductionState,
    il: f64,
    vc: f64,
    params: &ConverterParams,
    g: f64,
) -> Derivative {
    let vo = output_voltage_g(cond, il, vc, params.rc, g);
    let (il, dil_dt) = match cond {
        ConductionState::Idle => (0.0, 0.0),
        ConductionState::DeadTime if il == 0.0 => (0.0, 0.0),
        _ => {
            let v_l = switch_node_voltage(cond, il, params) - il * params.rl - vo;
            (il, v_l / params.l)
        }
    };
    Derivative {
        dil_dt,
        dvc_dt: (il - vo * g) / params.c,
    }
}

/// State derivative in the given conduction state.
pub fn derivative(state: &PlantState, params: &ConverterParams) -> Result<Derivative> {
    if state.cond == ConductionState::DeadTime && params.topology == Topology::Asynchronous {
        return Err(Error::InconsistentState {
            cond: state.cond,
            topology: params.topology,
        });
    }
    Ok(derivative_g(state.cond, state.il, state.vc, params, 1.0 / params.r))
}

/// Peak-current comparator threshold for the current cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakThreshold {
    pub ipk_cmd: f64,
    /// Compensation ramp slope (A/s), added to the sensed current.
    pub slope_comp: f64,
    pub cycle_start: f64,
}

/// Which events are armed in the current interval.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EventContext {
    pub peak: Option<PeakThreshold>,
    /// Low-side switch opens at zero current (synchronous burst operation).
    pub diode_emulation: bool,
}

/// Signed residuals; `None` when the event is not armed in this state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EventResiduals {
    /// Freewheel current reaching zero (transition to Idle). The residual is
    /// the inductor current itself.
    pub zero_current: Option<f64>,
    /// Sensed current plus compensation ramp minus the peak command.
    pub peak: Option<f64>,
}

pub fn event_functions(
    state: &PlantState,
    params: &ConverterParams,
    ctx: &EventContext,
) -> EventResiduals {
    let zero_armed = match (state.cond, params.topology) {
        (ConductionState::Off, Topology::Asynchronous) => true,
        (ConductionState::Off, Topology::Synchronous) => ctx.diode_emulation,
        (ConductionState::DeadTime, _) => true,
        _ => false,
    };
    let peak = match (state.cond, ctx.peak) {
        (ConductionState::On, Some(th)) => {
            Some(state.il + th.slope_comp * (state.t - th.cycle_start) - th.ipk_cmd)
        }
        _ => None,
    };
    EventResiduals {
        zero_current: zero_armed.then_some(state.il),
        peak,
    }
}
