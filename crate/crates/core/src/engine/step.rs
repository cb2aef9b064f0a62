use crate::analysis;
use crate::error::Result;
use crate::model::{ConductionMode, ControlConfig, ConverterParams, Scheme};

use super::cycle::Simulator;
use super::measure::Metrics;
use super::steady::{run_from, run_to_steady_state};
use super::trace::{Trace, TraceBuf};
use super::{LoadProfile, SimSettings};

/// Load-step response.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// Waveform from the step instant until the output has settled.
    pub trace: Trace,
    /// Steady state before the step.
    pub before: Metrics,
    /// Steady state after the step, carrying `settle_time` and
    /// `load_regulation`.
    pub metrics: Metrics,
    /// Time of the start of the load ramp.
    pub t_step: f64,
}

/// Output voltage used to turn a load current into a conductance.
pub(crate) fn nominal_vo(params: &ConverterParams, cfg: &ControlConfig) -> f64 {
    match cfg.scheme {
        Scheme::OpenLoopDuty(d) => match analysis::conduction_mode(params, d) {
            ConductionMode::Ccm => analysis::vo_ccm_lossy(params, d),
            ConductionMode::Dcm => analysis::vo_dcm(params, d),
        },
        _ => cfg.regulated_output(),
    }
}

pub(crate) fn load_conductance(io: f64, vo_nom: f64) -> f64 {
    if vo_nom > 0.0 {
        io / vo_nom
    } else {
        0.0
    }
}

/// Settles at `i_from`, ramps the load to `i_to` over `ramp` seconds and
/// follows the transient until the period map is stationary again.
pub fn load_step(
    params: &ConverterParams,
    cfg: &ControlConfig,
    settings: &SimSettings,
    i_from: f64,
    i_to: f64,
    ramp: f64,
) -> Result<StepResult> {
    let vo_nom = nominal_vo(params, cfg);
    let g0 = load_conductance(i_from, vo_nom);
    let g1 = load_conductance(i_to, vo_nom);
    let base = Simulator::new(params, cfg, settings)?;
    let pre = run_to_steady_state(&base.clone().with_load(LoadProfile::Constant(g0)))?;

    if i_from == i_to {
        let mut metrics = pre.metrics;
        metrics.settle_time = Some(0.0);
        return Ok(StepResult {
            trace: pre.trace,
            before: pre.metrics,
            metrics,
            t_step: pre.end.plant.t,
        });
    }

    let t_step = pre.end.cycle as f64 * base.period();
    let ramp = ramp.max(0.0);
    let transient = base.clone().with_load(LoadProfile::Ramp {
        t0: t_step,
        t1: t_step + ramp,
        g0,
        g1,
    });
    let after_sim = base.clone().with_load(LoadProfile::Constant(g1));

    // Follow the transient cycle by cycle with the real load profile.
    let mut buf = TraceBuf::new(settings.trace_stride);
    let mut state = pre.end;
    let mut residual = f64::INFINITY;
    let mut periods = 0;
    while periods < settings.max_periods {
        let (next, st) = transient.run_cycle_recorded(&state, &mut buf)?;
        periods += 1;
        let ramp_done = st.t_start >= t_step + ramp;
        if ramp_done {
            let il_scale = st.ipk.abs().max(1e-3);
            let vc_scale = st.vo_avg().abs().max(1e-3);
            residual = ((next.plant.il - state.plant.il) / il_scale)
                .abs()
                .max(((next.plant.vc - state.plant.vc) / vc_scale).abs())
                .max(((next.ctrl.vo_meas - state.ctrl.vo_meas) / vc_scale).abs());
        }
        state = next;
        if ramp_done && residual < settings.ss_tol {
            break;
        }
    }
    let post = run_from(&after_sim, state)?;

    let target = post.metrics.vo_avg;
    let band = 0.01 * target.abs();
    let settle = buf
        .trace
        .samples
        .iter()
        .chain(post.trace.samples.iter())
        .filter(|s| s.t >= t_step && (s.vo - target).abs() > band)
        .map(|s| s.t - t_step)
        .fold(0.0, f64::max);

    let d_io = post.metrics.io_avg - pre.metrics.io_avg;
    let mut metrics = post.metrics;
    metrics.settle_time = Some(settle);
    metrics.load_regulation = if d_io.abs() > 1e-9 {
        Some((post.metrics.vo_avg - pre.metrics.vo_avg) / d_io)
    } else {
        None
    };
    let mut trace = buf.trace;
    trace.extend(post.trace);
    Ok(StepResult {
        trace,
        before: pre.metrics,
        metrics,
        t_step,
    })
}
