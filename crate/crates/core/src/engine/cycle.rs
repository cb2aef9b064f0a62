use crate::control::{
    burst_decision, freewheel_tail, peak_current_command, sequence_asynchronous,
    sequence_synchronous, voltage_mode_duty, BurstAction, ControllerState, SwitchCommand,
};
use crate::dynamics::{derivative_g, output_voltage_g};
use crate::error::{Error, Result};
use crate::model::{
    validate, ConductionState, ControlConfig, ConverterParams, PlantState, Scheme, Topology,
    ValidatedParams,
};

use super::trace::{Trace, TraceBuf};
use super::{LoadProfile, SimSettings};

/// Quadrature channels integrated alongside the plant state.
pub(crate) mod q {
    pub const VO: usize = 0;
    pub const IL: usize = 1;
    pub const P_IN: usize = 2;
    pub const P_OUT: usize = 3;
    pub const P_HS: usize = 4;
    pub const P_LS: usize = 5;
    pub const P_RL: usize = 6;
    pub const P_DIODE: usize = 7;
    pub const P_ESR: usize = 8;
    /// Inductor voltage.
    pub const V_L: usize = 9;
    /// Capacitor branch current.
    pub const I_C: usize = 10;
    pub const N: usize = 11;
}

/// Full simulator state at a clock edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub plant: PlantState,
    pub ctrl: ControllerState,
    /// Index of the period that starts at `plant.t`.
    pub cycle: u64,
}

impl SimState {
    pub fn new(plant: PlantState, ctrl: ControllerState) -> Self {
        SimState {
            plant: PlantState { t: 0.0, ..plant },
            ctrl,
            cycle: 0,
        }
    }
}

/// Everything measured over one switching period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleStats {
    pub t_start: f64,
    pub duration: f64,
    /// Time with the high side conducting.
    pub t_on: f64,
    /// Time with the freewheel path (or a body diode) conducting.
    pub t_freewheel: f64,
    pub t_idle: f64,
    pub skipped: bool,
    pub entered_idle: bool,
    pub min_on_violation: bool,
    pub ipk: f64,
    pub il_min: f64,
    pub vo_max: f64,
    pub vo_min: f64,
    pub vc_max: f64,
    pub vc_min: f64,
    /// Switching energy charged to this period.
    pub sw_energy: f64,
    pub integrals: [f64; q::N],
    pub start: PlantState,
    pub end: PlantState,
}

impl CycleStats {
    pub fn duty(&self) -> f64 {
        self.t_on / self.duration
    }

    pub fn vo_avg(&self) -> f64 {
        self.integrals[q::VO] / self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Gate {
    High,
    Low,
    Open,
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    gate: Gate,
    end: f64,
    peak_trip: bool,
}

impl From<&SwitchCommand> for Interval {
    fn from(c: &SwitchCommand) -> Self {
        let gate = match (c.high_side, c.low_side) {
            (true, _) => Gate::High,
            (false, true) => Gate::Low,
            (false, false) => Gate::Open,
        };
        Interval {
            gate,
            end: c.valid_until,
            peak_trip: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Plan {
    Scheduled(f64),
    Peak(f64),
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    ZeroCurrent,
    PeakTrip,
}

/// Switched power stage under one controller.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: ValidatedParams,
    cfg: ControlConfig,
    settings: SimSettings,
    load: LoadProfile,
    ts: f64,
    h_nom: f64,
    slope_comp: f64,
}

impl Simulator {
    pub fn new(params: &ConverterParams, cfg: &ControlConfig, settings: &SimSettings) -> Result<Self> {
        let params = validate(*params)?;
        cfg.validate(&params)?;
        if settings.steps_per_period < 256 {
            return Err(Error::InvalidParameter {
                name: "steps_per_period",
                requirement: "at least 256",
            });
        }
        if !(settings.event_tol > 0.0 && settings.event_tol <= 1e-6) {
            return Err(Error::InvalidParameter {
                name: "event_tol",
                requirement: "in (0, 1e-6]",
            });
        }
        let ts = params.ts();
        Ok(Simulator {
            load: LoadProfile::resistor(params.r),
            h_nom: ts / settings.steps_per_period as f64,
            slope_comp: cfg.slope_comp_for(&params),
            params,
            cfg: *cfg,
            settings: *settings,
            ts,
        })
    }

    pub fn with_load(mut self, load: LoadProfile) -> Self {
        self.load = load;
        self
    }

    pub fn params(&self) -> &ConverterParams {
        &self.params
    }

    pub fn control(&self) -> &ControlConfig {
        &self.cfg
    }

    pub fn settings(&self) -> &SimSettings {
        &self.settings
    }

    pub fn load(&self) -> &LoadProfile {
        &self.load
    }

    pub fn period(&self) -> f64 {
        self.ts
    }

    /// Integrates from `init` until `t_end`, recording every step.
    pub fn simulate(&self, init: &SimState, t_end: f64) -> Result<Trace> {
        if !(t_end >= self.ts) {
            return Err(Error::TEndTooSmall { t_end, ts: self.ts });
        }
        let mut buf = TraceBuf::new(self.settings.trace_stride);
        let mut state = *init;
        let t_stop = init.plant.t + t_end;
        while state.plant.t < t_stop * (1.0 - 1e-15) {
            let (next, _) = self.run_cycle_until(&state, Some(&mut buf), t_stop)?;
            state = next;
        }
        Ok(buf.trace)
    }

    pub fn run_cycle(&self, state: &SimState) -> Result<(SimState, CycleStats)> {
        self.run_cycle_until(state, None, f64::INFINITY)
    }

    pub(crate) fn run_cycle_recorded(
        &self,
        state: &SimState,
        buf: &mut TraceBuf,
    ) -> Result<(SimState, CycleStats)> {
        self.run_cycle_until(state, Some(buf), f64::INFINITY)
    }

    fn clock(&self, plant: &PlantState, ctrl: &mut ControllerState) -> (Plan, bool) {
        let g = self.load.conductance(plant.t);
        let ts = self.ts;
        match self.cfg.scheme {
            Scheme::OpenLoopDuty(d) => (Plan::Scheduled(d), false),
            Scheme::VoltageMode => {
                let d = voltage_mode_duty(ctrl.vo_meas, &self.cfg, ctrl, ts);
                (Plan::Scheduled(d), false)
            }
            Scheme::CurrentMode => {
                let ipk = peak_current_command(ctrl.vo_meas, &self.cfg, ctrl, ts);
                (Plan::Peak(ipk), false)
            }
            Scheme::Burst => {
                let vo = output_voltage_g(plant.cond, plant.il, plant.vc, self.params.rc, g);
                match burst_decision(vo, &self.cfg, ctrl) {
                    BurstAction::RunCycle => {
                        let ipk = peak_current_command(vo, &self.cfg, ctrl, ts);
                        (Plan::Peak(ipk), true)
                    }
                    BurstAction::SkipCycle => (Plan::Skip, true),
                }
            }
        }
    }

    fn intervals(&self, plan: Plan) -> (Vec<Interval>, bool) {
        let ts = self.ts;
        match plan {
            Plan::Scheduled(d) => {
                let seq = match self.params.topology {
                    Topology::Synchronous => sequence_synchronous(d, self.cfg.dead_time, ts),
                    Topology::Asynchronous => sequence_asynchronous(d, ts),
                };
                (seq.commands.iter().map(Interval::from).collect(), seq.min_on_violation)
            }
            Plan::Peak(_) => (
                vec![Interval {
                    gate: Gate::High,
                    end: ts,
                    peak_trip: true,
                }],
                false,
            ),
            Plan::Skip => {
                let gate = match self.params.topology {
                    Topology::Synchronous => Gate::Low,
                    Topology::Asynchronous => Gate::Open,
                };
                (
                    vec![Interval {
                        gate,
                        end: ts,
                        peak_trip: false,
                    }],
                    false,
                )
            }
        }
    }

    fn entry_state(&self, gate: Gate, il: f64, diode_emulation: bool) -> ConductionState {
        use ConductionState::*;
        match (gate, self.params.topology) {
            (Gate::High, _) => On,
            (Gate::Low, _) if diode_emulation && il <= 0.0 => Idle,
            (Gate::Low, _) => Off,
            (Gate::Open, Topology::Asynchronous) if il > 0.0 => Off,
            (Gate::Open, Topology::Synchronous) if il != 0.0 => DeadTime,
            (Gate::Open, _) => Idle,
        }
    }

    fn zero_event_armed(&self, cond: ConductionState, diode_emulation: bool) -> bool {
        match cond {
            ConductionState::Off => {
                self.params.topology == Topology::Asynchronous || diode_emulation
            }
            ConductionState::DeadTime => true,
            _ => false,
        }
    }

    /// Plant derivative and quadrature integrands.
    fn rates(&self, cond: ConductionState, t: f64, il: f64, vc: f64) -> ([f64; 2], [f64; q::N]) {
        use ConductionState::*;
        let p = &*self.params;
        let g = self.load.conductance(t);
        let d = derivative_g(cond, il, vc, p, g);
        let vo = output_voltage_g(cond, il, vc, p.rc, g);
        let il = if cond == Idle { 0.0 } else { il };
        let i_c = il - vo * g;
        let mut w = [0.0; q::N];
        w[q::VO] = vo;
        w[q::IL] = il;
        w[q::P_OUT] = vo * vo * g;
        w[q::P_RL] = il * il * p.rl;
        w[q::P_ESR] = i_c * i_c * p.rc;
        w[q::V_L] = p.l * d.dil_dt;
        w[q::I_C] = i_c;
        match cond {
            On => {
                w[q::P_IN] = p.vi * il;
                w[q::P_HS] = il * il * p.rds_on_hs;
            }
            Off => match p.topology {
                Topology::Asynchronous => w[q::P_DIODE] = p.vd * il,
                Topology::Synchronous => w[q::P_LS] = il * il * p.rds_on_ls,
            },
            DeadTime => {
                if il < 0.0 {
                    w[q::P_IN] = p.vi * il;
                }
                w[q::P_DIODE] = p.vd * il.abs();
            }
            Idle => {}
        }
        ([d.dil_dt, d.dvc_dt], w)
    }

    fn rk4(
        &self,
        cond: ConductionState,
        t: f64,
        il: f64,
        vc: f64,
        h: f64,
    ) -> (f64, f64, [f64; q::N]) {
        let (k1, w1) = self.rates(cond, t, il, vc);
        let (k2, w2) = self.rates(cond, t + 0.5 * h, il + 0.5 * h * k1[0], vc + 0.5 * h * k1[1]);
        let (k3, w3) = self.rates(cond, t + 0.5 * h, il + 0.5 * h * k2[0], vc + 0.5 * h * k2[1]);
        let (k4, w4) = self.rates(cond, t + h, il + h * k3[0], vc + h * k3[1]);
        let il1 = il + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        let vc1 = vc + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        let mut acc = [0.0; q::N];
        for i in 0..q::N {
            acc[i] = h / 6.0 * (w1[i] + 2.0 * w2[i] + 2.0 * w3[i] + w4[i]);
        }
        if cond == ConductionState::Idle {
            (0.0, vc1, acc)
        } else {
            (il1, vc1, acc)
        }
    }

    /// Earliest root in `(0, h]` of a residual that is positive at 0 and
    /// non-positive at `h`: bisection to the tolerance, then one secant step.
    fn localize(&self, h: f64, f0: f64, fh: f64, f: impl Fn(f64) -> f64) -> f64 {
        let tol = self.settings.event_tol * self.ts;
        let (mut a, mut fa, mut b, mut fb) = (0.0, f0, h, fh);
        while b - a > tol {
            let m = 0.5 * (a + b);
            let fm = f(m);
            if fm > 0.0 {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
        }
        if fa > fb {
            (a + (b - a) * fa / (fa - fb)).clamp(a, b)
        } else {
            b
        }
    }

    fn run_cycle_until(
        &self,
        state: &SimState,
        mut rec: Option<&mut TraceBuf>,
        t_stop: f64,
    ) -> Result<(SimState, CycleStats)> {
        let p = &*self.params;
        let ts = self.ts;
        let t0 = state.cycle as f64 * ts;
        let mut ctrl = state.ctrl;
        let mut plant = PlantState { t: t0, ..state.plant };
        let start = plant;

        let (plan, diode_emulation) = self.clock(&plant, &mut ctrl);
        ctrl.last_clock = t0;
        let (mut intervals, min_on_violation) = self.intervals(plan);
        let peak_cmd = match plan {
            Plan::Peak(i) => Some(i),
            _ => None,
        };
        let local_stop = (t_stop - t0).min(ts);

        if let Some(buf) = rec.as_deref_mut() {
            buf.begin_cycle();
        }

        let vo_of = |pl: &PlantState| {
            output_voltage_g(pl.cond, pl.il, pl.vc, p.rc, self.load.conductance(pl.t))
        };

        let mut stats = CycleStats {
            t_start: t0,
            duration: 0.0,
            t_on: 0.0,
            t_freewheel: 0.0,
            t_idle: 0.0,
            skipped: matches!(plan, Plan::Skip),
            entered_idle: false,
            min_on_violation,
            ipk: plant.il,
            il_min: plant.il,
            vo_max: f64::NEG_INFINITY,
            vo_min: f64::INFINITY,
            vc_max: plant.vc,
            vc_min: plant.vc,
            sw_energy: 0.0,
            integrals: [0.0; q::N],
            start,
            end: start,
        };
        let observe = |pl: &PlantState, vo: f64, stats: &mut CycleStats| {
            stats.ipk = stats.ipk.max(pl.il);
            stats.il_min = stats.il_min.min(pl.il);
            stats.vo_max = stats.vo_max.max(vo);
            stats.vo_min = stats.vo_min.min(vo);
            stats.vc_max = stats.vc_max.max(pl.vc);
            stats.vc_min = stats.vc_min.min(pl.vc);
        };

        let mut t = 0.0_f64;
        let mut idx = 0;
        'intervals: while idx < intervals.len() && t < local_stop {
            let iv = intervals[idx];
            let end = iv.end.min(local_stop);
            plant.cond = self.entry_state(iv.gate, plant.il, diode_emulation);
            if plant.cond == ConductionState::Idle {
                if plant.il != 0.0 && iv.gate == Gate::Open {
                    stats.entered_idle = true;
                }
                plant.il = 0.0;
            }
            plant.t = t0 + t;
            let vo = vo_of(&plant);
            observe(&plant, vo, &mut stats);
            if let Some(buf) = rec.as_deref_mut() {
                buf.mark(&plant, vo);
            }

            let peak_residual = |il: f64, tl: f64| match (iv.peak_trip, peak_cmd) {
                (true, Some(ipk)) => Some(il + self.slope_comp * tl - ipk),
                _ => None,
            };
            if matches!(peak_residual(plant.il, t), Some(r) if r >= 0.0) {
                intervals.truncate(idx + 1);
                intervals[idx].end = t;
                intervals.extend(
                    freewheel_tail(t, self.cfg.dead_time, ts, p.topology)
                        .iter()
                        .map(Interval::from),
                );
                idx += 1;
                continue;
            }

            while t < end {
                let last = end - t <= self.h_nom * (1.0 + 1e-9);
                let h = if last { end - t } else { self.h_nom };
                let cond = plant.cond;
                let (il1, vc1, acc1) = self.rk4(cond, t0 + t, plant.il, plant.vc, h);

                // Event detection on the step end point.
                let mut event: Option<(f64, Event)> = None;
                if self.zero_event_armed(cond, diode_emulation) && plant.il != 0.0 {
                    let s = plant.il.signum();
                    if s * il1 <= 0.0 {
                        let tau = self.localize(h, s * plant.il, s * il1, |tau| {
                            s * self.rk4(cond, t0 + t, plant.il, plant.vc, tau).0
                        });
                        event = Some((tau, Event::ZeroCurrent));
                    }
                }
                if let Some(r0) = peak_residual(plant.il, t) {
                    let r1 = peak_residual(il1, t + h).unwrap_or(r0);
                    if r1 >= 0.0 {
                        let tau = self.localize(h, -r0, -r1, |tau| {
                            let il = self.rk4(cond, t0 + t, plant.il, plant.vc, tau).0;
                            -peak_residual(il, t + tau).unwrap_or(r0)
                        });
                        if event.is_none_or(|(te, _)| tau < te) {
                            event = Some((tau, Event::PeakTrip));
                        }
                    }
                }

                let (dt, il_n, vc_n, acc) = match event {
                    Some((tau, _)) if tau < h => {
                        let (a, b, c) = self.rk4(cond, t0 + t, plant.il, plant.vc, tau);
                        (tau, a, b, c)
                    }
                    _ => (h, il1, vc1, acc1),
                };
                for (s, a) in stats.integrals.iter_mut().zip(acc.iter()) {
                    *s += a;
                }
                match cond {
                    ConductionState::On => stats.t_on += dt,
                    ConductionState::Off | ConductionState::DeadTime => stats.t_freewheel += dt,
                    ConductionState::Idle => stats.t_idle += dt,
                }
                t = if last && dt == h { end } else { t + dt };
                plant.il = il_n;
                plant.vc = vc_n;
                plant.t = t0 + t;
                if !(plant.il.is_finite() && plant.vc.is_finite()) {
                    return Err(Error::Divergence { t: plant.t });
                }

                match event {
                    Some((_, Event::ZeroCurrent)) => {
                        plant.il = 0.0;
                        plant.cond = ConductionState::Idle;
                        stats.entered_idle = true;
                        let vo = vo_of(&plant);
                        observe(&plant, vo, &mut stats);
                        if let Some(buf) = rec.as_deref_mut() {
                            buf.mark(&plant, vo);
                        }
                    }
                    Some((_, Event::PeakTrip)) => {
                        let vo = vo_of(&plant);
                        observe(&plant, vo, &mut stats);
                        intervals.truncate(idx + 1);
                        intervals[idx].end = t;
                        intervals.extend(
                            freewheel_tail(t, self.cfg.dead_time, ts, p.topology)
                                .iter()
                                .map(Interval::from),
                        );
                        idx += 1;
                        continue 'intervals;
                    }
                    None => {
                        let vo = vo_of(&plant);
                        observe(&plant, vo, &mut stats);
                        if let Some(buf) = rec.as_deref_mut() {
                            if t >= end {
                                buf.mark(&plant, vo);
                            } else {
                                buf.step(&plant, vo);
                            }
                        }
                    }
                }
            }
            idx += 1;
        }

        stats.duration = t;
        stats.end = plant;
        if stats.t_on > 0.0 {
            stats.sw_energy = p.switching.energy_per_cycle(p.vi, stats.ipk);
        }
        if t > 0.0 {
            ctrl.vo_meas = stats.integrals[q::VO] / t;
        }
        if let Some(buf) = rec {
            buf.end_cycle(stats.t_on / ts);
        }
        let next = SimState {
            plant,
            ctrl,
            cycle: state.cycle + 1,
        };
        Ok((next, stats))
    }
}
