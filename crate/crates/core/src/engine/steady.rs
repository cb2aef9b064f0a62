use nalgebra::{DMatrix, DVector};

use crate::analysis;
use crate::control::ControllerState;
use crate::error::{Error, Result};
use crate::model::{ConductionMode, ConductionState, ControlConfig, PlantState, Scheme};

use super::cycle::{CycleStats, SimState, Simulator};
use super::measure::Metrics;
use super::trace::{Trace, TraceBuf};

/// Bursts discarded before a quasi-periodic window is measured.
const BURST_DISCARD: usize = 3;
/// Minimum super-periods in a quasi-periodic window.
const BURST_MIN_WINDOW: usize = 8;
/// Burst starts searched backwards for a repeated state.
const BURST_LOOKBACK: usize = 16;
/// Bursts after which an unmatched pattern is accepted as quasi-periodic.
const BURST_MAX: usize = 48;
const NEWTON_ITERS: usize = 12;

/// Result of a steady-state run.
#[derive(Debug, Clone)]
pub struct SteadyRun {
    /// Waveform over the measurement window.
    pub trace: Trace,
    pub metrics: Metrics,
    pub window: Vec<CycleStats>,
    /// State at the start of the measurement window.
    pub state: SimState,
    /// State after the measurement window.
    pub end: SimState,
    /// Periods simulated before the window (Newton evaluations included).
    pub periods: usize,
}

/// Analytic guess for the clock-edge state of the periodic orbit: the
/// inductor-current valley and output voltage from the averaged model,
/// with the compensator preset to the matching command.
pub fn initial_state(sim: &Simulator) -> SimState {
    let cfg = sim.control();
    let g = sim.load().conductance(0.0);
    let mut p = *sim.params();
    p.r = if g > 0.0 { 1.0 / g } else { 1e9 };
    let ts = sim.period();

    let vo_goal = match cfg.scheme {
        Scheme::OpenLoopDuty(d) => estimate_vo(&p, d),
        _ => cfg.regulated_output(),
    };
    let d = match cfg.scheme {
        Scheme::OpenLoopDuty(d) => d,
        _ => analysis::duty_for_vo(&p, vo_goal).unwrap_or(vo_goal / p.vi).clamp(0.0, 1.0),
    };
    let ripple = vo_goal.max(0.0) * (1.0 - d) * ts / p.l;
    let io = vo_goal / p.r;
    let dcm = analysis::conduction_mode(&p, d) == ConductionMode::Dcm
        || cfg.scheme == Scheme::Burst;
    let il0 = if dcm { 0.0 } else { io - 0.5 * ripple };
    let vc = vo_goal - p.rc * (io - il0).max(0.0).min(ripple);
    let cond = if dcm {
        ConductionState::Idle
    } else {
        ConductionState::On
    };

    let ctrl = match cfg.scheme {
        Scheme::OpenLoopDuty(_) => ControllerState {
            vo_meas: vo_goal,
            ..Default::default()
        },
        Scheme::VoltageMode => {
            ControllerState::preset(cfg, cfg.ramp_valley + d * cfg.vramp_pp, vo_goal)
        }
        Scheme::CurrentMode => {
            let slope = cfg.slope_comp_for(&p) * d * ts;
            ControllerState::preset(cfg, io + 0.5 * ripple + slope, vo_goal)
        }
        Scheme::Burst => ControllerState {
            vo_meas: vo_goal,
            ..Default::default()
        },
    };
    SimState::new(PlantState::new(il0, vc, 0.0, cond), ctrl)
}

fn estimate_vo(p: &crate::model::ConverterParams, d: f64) -> f64 {
    match analysis::conduction_mode(p, d) {
        ConductionMode::Ccm => analysis::vo_ccm_lossy(p, d),
        ConductionMode::Dcm => analysis::vo_dcm(p, d),
    }
}

/// Runs from the analytic initial guess until the cycle map is stationary
/// and measures over the final period (or burst super-period).
pub fn run_to_steady_state(sim: &Simulator) -> Result<SteadyRun> {
    run_from(sim, initial_state(sim))
}

/// Which components of the state enter the period map.
#[derive(Debug, Clone, Copy)]
struct Dims {
    ctrl: bool,
    integ: bool,
}

impl Dims {
    fn of(cfg: &ControlConfig) -> Self {
        let ctrl = match cfg.scheme {
            Scheme::VoltageMode => true,
            Scheme::CurrentMode => cfg.ipk_cmd.is_none(),
            _ => false,
        };
        Dims {
            ctrl,
            integ: ctrl && cfg.ki != 0.0,
        }
    }

    fn len(&self) -> usize {
        2 + self.ctrl as usize + self.integ as usize
    }
}

struct Scales {
    il: f64,
    vc: f64,
    u: f64,
}

impl Scales {
    fn new(sim: &Simulator, st: &CycleStats) -> Self {
        let cfg = sim.control();
        let (lo, hi) = cfg.windup_range();
        Scales {
            il: st.ipk.abs().max(1e-3),
            vc: st.vo_avg().abs().max(1e-3),
            u: (hi - lo).abs().max(1e-3),
        }
    }

    fn residual(&self, sim: &Simulator, dims: Dims, a: &SimState, b: &SimState) -> f64 {
        let mut r = ((a.plant.il - b.plant.il) / self.il)
            .abs()
            .max(((a.plant.vc - b.plant.vc) / self.vc).abs());
        if dims.ctrl {
            r = r.max(((a.ctrl.vo_meas - b.ctrl.vo_meas) / self.vc).abs());
        }
        if dims.integ {
            let ki = sim.control().ki;
            r = r.max((ki * (a.ctrl.integrator - b.ctrl.integrator) / self.u).abs());
        }
        r
    }
}

fn pack(s: &SimState, dims: Dims) -> DVector<f64> {
    let mut v = vec![s.plant.il, s.plant.vc];
    if dims.ctrl {
        v.push(s.ctrl.vo_meas);
    }
    if dims.integ {
        v.push(s.ctrl.integrator);
    }
    DVector::from_vec(v)
}

fn unpack(base: &SimState, x: &DVector<f64>, dims: Dims) -> SimState {
    let mut s = *base;
    s.plant.il = x[0];
    s.plant.vc = x[1];
    if s.plant.cond == ConductionState::Idle && s.plant.il != 0.0 {
        s.plant.cond = ConductionState::Off;
    }
    if dims.ctrl {
        s.ctrl.vo_meas = x[2];
    }
    if dims.integ {
        s.ctrl.integrator = x[3];
    }
    s
}

/// One Newton step on `P(x) - x = 0`. Returns the improved state, or
/// `None` when the orbit is not attracting or the step does not help.
fn newton_step(
    sim: &Simulator,
    dims: Dims,
    state: &SimState,
    evals: &mut usize,
) -> Result<Option<(SimState, f64)>> {
    let n = dims.len();
    let (next, st) = sim.run_cycle(state)?;
    *evals += 1;
    let scales = Scales::new(sim, &st);
    let r0 = scales.residual(sim, dims, state, &next);
    let x = pack(state, dims);
    let px = pack(&next, dims);
    let scale = {
        let mut s = vec![scales.il, scales.vc];
        if dims.ctrl {
            s.push(scales.vc);
        }
        if dims.integ {
            let ki = sim.control().ki;
            s.push(scales.u / ki.abs());
        }
        s
    };

    let mut jac = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let h = 1e-6 * scale[j];
        let mut xp = x.clone();
        xp[j] += h;
        let (np, _) = sim.run_cycle(&unpack(state, &xp, dims))?;
        *evals += 1;
        let col = (pack(&np, dims) - &px) / h;
        jac.set_column(j, &col);
    }
    let radius = jac
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if !(radius < 1.0) {
        return Ok(None);
    }
    let a = jac - DMatrix::<f64>::identity(n, n);
    let Some(dx) = a.lu().solve(&(&x - &px)) else {
        return Ok(None);
    };
    let cand = unpack(state, &(&x + dx), dims);
    if !(cand.plant.il.is_finite() && cand.plant.vc.is_finite()) {
        return Ok(None);
    }
    let (cnext, _) = sim.run_cycle(&cand)?;
    *evals += 1;
    let r1 = scales.residual(sim, dims, &cand, &cnext);
    Ok((r1 < r0).then_some((cand, r1)))
}

fn measure(
    sim: &Simulator,
    start: SimState,
    cycles: usize,
    periodic: bool,
    periods: usize,
) -> Result<SteadyRun> {
    let mut buf = TraceBuf::new(sim.settings().trace_stride);
    let mut state = start;
    let mut window = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        let (next, st) = sim.run_cycle_recorded(&state, &mut buf)?;
        window.push(st);
        state = next;
    }
    let metrics = Metrics::from_window(&window, sim.params(), sim.control().scheme, periodic);
    Ok(SteadyRun {
        trace: buf.trace,
        metrics,
        window,
        state: start,
        end: state,
        periods,
    })
}

/// Same as [`run_to_steady_state`] from a caller-supplied state.
pub fn run_from(sim: &Simulator, init: SimState) -> Result<SteadyRun> {
    let settings = *sim.settings();
    let cfg = sim.control();
    let dims = Dims::of(cfg);
    let burst = cfg.scheme == Scheme::Burst;
    let mut state = init;
    let mut evals = 0usize;

    if settings.accelerate && !burst {
        for _ in 0..NEWTON_ITERS {
            match newton_step(sim, dims, &state, &mut evals)? {
                Some((s, r)) => {
                    state = s;
                    if r < 0.1 * settings.ss_tol {
                        break;
                    }
                }
                None => break,
            }
        }
    }

    let mut residual = f64::INFINITY;
    let mut prev_skipped = true;
    let mut run_streak = 0usize;
    let mut starts: Vec<(usize, SimState)> = Vec::new();
    for k in 0..settings.max_periods {
        let (next, st) = sim.run_cycle(&state)?;
        if !burst || !st.skipped {
            residual = Scales::new(sim, &st).residual(sim, dims, &state, &next);
        }
        if burst {
            if st.skipped {
                run_streak = 0;
            } else {
                run_streak += 1;
                if prev_skipped {
                    if let Some(run) = burst_window(sim, &starts, k, &state, evals + k)? {
                        return Ok(run);
                    }
                    starts.push((k, state));
                }
            }
            prev_skipped = st.skipped;
        }
        let settled = !burst || run_streak >= 2;
        if settled && residual < settings.ss_tol {
            return measure(sim, next, 1, true, evals + k + 1);
        }
        state = next;
    }
    if burst && starts.len() > BURST_DISCARD + BURST_MIN_WINDOW {
        let n = starts.len() - 1;
        let first = BURST_DISCARD.max(n.saturating_sub(4 * BURST_MIN_WINDOW));
        let (k0, s0) = starts[first];
        let (k1, _) = starts[n];
        return measure(sim, s0, k1 - k0, false, evals + k0);
    }
    Err(Error::ConvergenceFailure {
        periods: settings.max_periods,
        residual,
    })
}

/// Looks for a burst start whose state repeats an earlier one. Returns the
/// measured super-period(s), or a quasi-periodic window once enough bursts
/// have gone by without an exact repeat.
fn burst_window(
    sim: &Simulator,
    starts: &[(usize, SimState)],
    k: usize,
    state: &SimState,
    periods: usize,
) -> Result<Option<SteadyRun>> {
    let tol = sim.settings().ss_tol;
    let vc_scale = sim.control().regulated_output().abs().max(1e-3);
    let il_scale = sim.control().ipk_cmd.unwrap_or(1e-3).abs().max(1e-3);
    if starts.len() >= BURST_DISCARD {
        for &(kj, sj) in starts.iter().rev().take(BURST_LOOKBACK) {
            let r = ((sj.plant.vc - state.plant.vc) / vc_scale)
                .abs()
                .max(((sj.plant.il - state.plant.il) / il_scale).abs());
            if r < tol {
                return measure(sim, sj, k - kj, true, periods - (k - kj)).map(Some);
            }
        }
    }
    if starts.len() >= BURST_MAX {
        let (k0, s0) = starts[starts.len() - 4 * BURST_MIN_WINDOW];
        return measure(sim, s0, k - k0, false, periods - (k - k0)).map(Some);
    }
    Ok(None)
}
