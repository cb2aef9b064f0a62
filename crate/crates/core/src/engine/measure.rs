use std::fmt;
use std::io::{self, Write};

use crate::model::{ConverterParams, Scheme};

use super::cycle::{q, CycleStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatingMode {
    Ccm,
    Dcm,
    Burst,
}

impl fmt::Display for OperatingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatingMode::Ccm => "CCM",
            OperatingMode::Dcm => "DCM",
            OperatingMode::Burst => "Burst",
        })
    }
}

/// Mean dissipation per loss mechanism (W).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub high_side: f64,
    pub low_side: f64,
    pub inductor: f64,
    pub diode: f64,
    pub esr: f64,
    pub switching: f64,
    pub quiescent: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.high_side
            + self.low_side
            + self.inductor
            + self.diode
            + self.esr
            + self.switching
            + self.quiescent
    }
}

/// Periodic-balance residuals over a measurement window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Balance {
    /// Integral of the inductor voltage (V·s).
    pub volt_seconds: f64,
    /// Integral of the capacitor current (C).
    pub charge: f64,
    /// `(Pin - Pout - losses) / Pin`.
    pub energy_residual: f64,
    /// `Vi * T` for the window.
    pub volt_second_scale: f64,
    /// `max(Ipk, 1 mA) * T` for the window.
    pub charge_scale: f64,
}

impl Balance {
    pub fn volt_second_ok(&self, rel: f64) -> bool {
        self.volt_seconds.abs() <= rel * self.volt_second_scale
    }

    pub fn charge_ok(&self, rel: f64) -> bool {
        self.charge.abs() <= rel * self.charge_scale
    }
}

/// Steady-state measurements over a window of whole periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub vo_avg: f64,
    pub vo_ripple_pp: f64,
    pub vc_ripple_pp: f64,
    pub il_ripple_pp: f64,
    pub ipk: f64,
    pub il_min: f64,
    pub io_avg: f64,
    pub il_avg: f64,
    /// Mean high-side, freewheel and idle fractions of the window.
    pub duty: f64,
    pub d2: f64,
    pub d3: f64,
    pub efficiency: f64,
    pub pin: f64,
    pub pout: f64,
    pub losses: LossBreakdown,
    pub balance: Balance,
    pub mode: OperatingMode,
    /// V/A, from a load step.
    pub load_regulation: Option<f64>,
    /// V/V, from an input-voltage sweep.
    pub line_regulation: Option<f64>,
    pub settle_time: Option<f64>,
    pub periods: usize,
    pub duration: f64,
    /// The window closes an exact periodic orbit (false for quasi-periodic
    /// burst patterns measured over several bursts).
    pub periodic: bool,
}

impl Metrics {
    pub(crate) fn from_window(
        window: &[CycleStats],
        params: &ConverterParams,
        scheme: Scheme,
        periodic: bool,
    ) -> Metrics {
        assert!(!window.is_empty(), "measurement window is empty");
        let mut ints = [0.0; q::N];
        let (mut t_on, mut t_fw, mut t_idle, mut duration, mut e_sw) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut ipk, mut il_min) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut vo_max, mut vo_min) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut vc_max, mut vc_min) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut any_skip, mut any_idle) = (false, false);
        for c in window {
            for (a, b) in ints.iter_mut().zip(c.integrals.iter()) {
                *a += b;
            }
            t_on += c.t_on;
            t_fw += c.t_freewheel;
            t_idle += c.t_idle;
            duration += c.duration;
            e_sw += c.sw_energy;
            ipk = ipk.max(c.ipk);
            il_min = il_min.min(c.il_min);
            vo_max = vo_max.max(c.vo_max);
            vo_min = vo_min.min(c.vo_min);
            vc_max = vc_max.max(c.vc_max);
            vc_min = vc_min.min(c.vc_min);
            any_skip |= c.skipped;
            any_idle |= c.entered_idle || c.t_idle > 0.0;
        }

        let losses = LossBreakdown {
            high_side: ints[q::P_HS] / duration,
            low_side: ints[q::P_LS] / duration,
            inductor: ints[q::P_RL] / duration,
            diode: ints[q::P_DIODE] / duration,
            esr: ints[q::P_ESR] / duration,
            switching: e_sw / duration,
            quiescent: params.vi * params.iq,
        };
        let pout = ints[q::P_OUT] / duration;
        let pin = ints[q::P_IN] / duration + losses.quiescent + losses.switching;
        let efficiency = if pin > 0.0 {
            (pout / pin).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let energy_residual = if pin > 0.0 {
            (pin - pout - losses.total()) / pin
        } else {
            0.0
        };
        let balance = Balance {
            volt_seconds: ints[q::V_L],
            charge: ints[q::I_C],
            energy_residual,
            volt_second_scale: params.vi * duration,
            charge_scale: ipk.abs().max(1e-3) * duration,
        };
        let mode = if scheme == Scheme::Burst && any_skip {
            OperatingMode::Burst
        } else if any_idle {
            OperatingMode::Dcm
        } else {
            OperatingMode::Ccm
        };
        let vo_avg = ints[q::VO] / duration;
        Metrics {
            vo_avg,
            vo_ripple_pp: vo_max - vo_min,
            vc_ripple_pp: vc_max - vc_min,
            il_ripple_pp: ipk - il_min,
            ipk,
            il_min,
            io_avg: if vo_avg != 0.0 { pout / vo_avg } else { 0.0 },
            il_avg: ints[q::IL] / duration,
            duty: t_on / duration,
            d2: t_fw / duration,
            d3: t_idle / duration,
            efficiency,
            pin,
            pout,
            losses,
            balance,
            mode,
            load_regulation: None,
            line_regulation: None,
            settle_time: None,
            periods: window.len(),
            duration,
            periodic,
        }
    }

    /// Key-value rows for export.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        let mut rows = vec![
            ("Vo_avg", self.vo_avg),
            ("Vo_ripple_pp", self.vo_ripple_pp),
            ("vC_ripple_pp", self.vc_ripple_pp),
            ("iL_ripple_pp", self.il_ripple_pp),
            ("Ipk", self.ipk),
            ("iL_min", self.il_min),
            ("Io_avg", self.io_avg),
            ("duty", self.duty),
            ("D2", self.d2),
            ("D3", self.d3),
            ("efficiency", self.efficiency),
            ("Pin", self.pin),
            ("Pout", self.pout),
            ("P_hs", self.losses.high_side),
            ("P_ls", self.losses.low_side),
            ("P_RL", self.losses.inductor),
            ("P_diode", self.losses.diode),
            ("P_esr", self.losses.esr),
            ("P_sw", self.losses.switching),
            ("P_q", self.losses.quiescent),
            ("volt_seconds", self.balance.volt_seconds),
            ("charge", self.balance.charge),
            ("energy_residual", self.balance.energy_residual),
            ("periods", self.periods as f64),
            ("window", self.duration),
        ];
        if let Some(v) = self.load_regulation {
            rows.push(("load_regulation", v));
        }
        if let Some(v) = self.line_regulation {
            rows.push(("line_regulation", v));
        }
        if let Some(v) = self.settle_time {
            rows.push(("settle_time", v));
        }
        rows
    }

    /// `key,value` rows; reals in full-precision scientific notation.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "key,value")?;
        writeln!(w, "mode,{}", self.mode)?;
        writeln!(w, "periodic,{}", self.periodic as u8)?;
        for (k, v) in self.rows() {
            writeln!(w, "{k},{v:.16e}")?;
        }
        Ok(())
    }
}

/// `Pout / Pin` over a window, with `Pin` charged for conduction input
/// power, quiescent current and switching energy.
pub fn measure_efficiency(window: &[CycleStats], params: &ConverterParams) -> f64 {
    Metrics::from_window(window, params, Scheme::OpenLoopDuty(0.0), true).efficiency
}
