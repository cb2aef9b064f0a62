//! Buck DC-DC converter analysis and simulation.
//!
//! [`analysis`] holds the closed-form CCM/DCM steady-state relations,
//! [`engine`] simulates the switched power stage under the modulators in
//! [`control`], and [`config`] reads run files for the command-line tool.

pub mod analysis;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod model;

pub use config::Config;
pub use engine::{
    load_step, run_to_steady_state, sweep, LoadProfile, Metrics, OperatingMode, SimSettings,
    SimState, Simulator, SteadyRun, StepResult, SweepAxis, SweepTable, Trace,
};
pub use error::{Error, Result};
pub use model::{
    validate, ConductionMode, ConductionState, ControlConfig, ConverterParams, PlantState,
    Scheme, SteadyStateReport, SwitchingLosses, TimingSolution, Topology, ValidatedParams,
};
