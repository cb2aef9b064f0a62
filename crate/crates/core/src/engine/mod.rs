//! Event-driven time-domain simulation of the switched power stage.
//!
//! The simulator advances one switching period at a time. Inside a period
//! the gate sequence is split into intervals; each interval integrates the
//! piecewise-linear plant with fixed-step RK4 and localizes state events
//! (freewheel current reaching zero, peak-current trip) by bisection.
//! Energy and charge integrals ride along as RK4 quadratures so that every
//! steady-state run can be audited.

mod cycle;
mod measure;
mod steady;
mod step;
mod sweep;
mod trace;

pub use cycle::{CycleStats, SimState, Simulator};
pub use measure::{measure_efficiency, Balance, LossBreakdown, Metrics, OperatingMode};
pub use steady::{initial_state, run_from, run_to_steady_state, SteadyRun};
pub use step::{load_step, StepResult};
pub use sweep::{lin_space, log_space, sweep, SweepAxis, SweepRow, SweepTable};
pub use trace::{Sample, Trace};

/// Integration and convergence settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    /// RK4 steps per switching period (at least 256).
    pub steps_per_period: usize,
    /// Event localization tolerance as a fraction of the period.
    pub event_tol: f64,
    /// Relative period-to-period change that counts as steady state.
    pub ss_tol: f64,
    pub max_periods: usize,
    /// Newton shooting on the period map to skip slow LC transients.
    pub accelerate: bool,
    /// Keep every n-th integration step in recorded traces (events and
    /// interval edges are always kept).
    pub trace_stride: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            steps_per_period: 256,
            event_tol: 1e-9,
            ss_tol: 1e-6,
            max_periods: 10_000,
            accelerate: true,
            trace_stride: 1,
        }
    }
}

/// Load seen by the output: a conductance, so that an open circuit is
/// representable. Ramps are linear in load current at the nominal output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoadProfile {
    Constant(f64),
    Ramp { t0: f64, t1: f64, g0: f64, g1: f64 },
}

impl LoadProfile {
    pub fn resistor(r: f64) -> Self {
        LoadProfile::Constant(1.0 / r)
    }

    pub fn conductance(&self, t: f64) -> f64 {
        match *self {
            LoadProfile::Constant(g) => g,
            LoadProfile::Ramp { t0, t1, g0, g1 } => {
                if t <= t0 {
                    g0
                } else if t >= t1 {
                    g1
                } else {
                    g0 + (g1 - g0) * (t - t0) / (t1 - t0)
                }
            }
        }
    }

    /// Conductance after any ramp has finished.
    pub fn final_conductance(&self) -> f64 {
        match *self {
            LoadProfile::Constant(g) => g,
            LoadProfile::Ramp { g1, .. } => g1,
        }
    }
}
