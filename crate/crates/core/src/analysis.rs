//! Closed-form steady-state relations of the buck power stage.
//!
//! CCM results include the conduction drops (switch on-resistance, inductor
//! DCR and the freewheel drop). DCM results use the ideal, lossless stage.
//!
//! For the synchronous stage the freewheel drop `Vd` is replaced by
//! `IL * RDSon_ls`, and forced-PWM operation is always CCM since the
//! low-side switch lets the current reverse.

use crate::error::{Error, Result};
use crate::model::{
    ConductionMode, ConverterParams, SteadyStateReport, TimingSolution, Topology,
};

/// Output voltage of the lossy CCM stage for an externally supplied average
/// inductor current `il`:
///
/// `Vo = (Vi - IL*RDSon_hs)*D - Vfw*(1 - D) - IL*RL`
pub fn vo_ccm_at_current(params: &ConverterParams, d: f64, il: f64) -> f64 {
    let vds = il * params.rds_on_hs;
    (params.vi - vds) * d - params.freewheel_drop(il) * (1.0 - d) - il * params.rl
}

/// Current rise during the on-time at average inductor current `il`.
pub fn ripple_on(params: &ConverterParams, d: f64, il: f64) -> Result<f64> {
    if d == 0.0 {
        return Ok(0.0);
    }
    let vo = vo_ccm_at_current(params, d, il);
    let applied = params.vi - il * params.rds_on_hs - il * params.rl - vo;
    // D = 1 in the lossless stage leaves exactly zero across L.
    if applied < -1e-12 * params.vi {
        return Err(Error::InfeasibleOperatingPoint(format!(
            "on-state inductor voltage {applied:.6e} V is not positive"
        )));
    }
    Ok(applied.max(0.0) * d * params.ts() / params.l)
}

/// Current fall during the off-time at average inductor current `il`.
pub fn ripple_off(params: &ConverterParams, d: f64, il: f64) -> f64 {
    let vo = vo_ccm_at_current(params, d, il);
    let t_off = (1.0 - d) * params.ts();
    (vo + params.freewheel_drop(il) + il * params.rl) * t_off / params.l
}

/// Lossy CCM output voltage with the loop closed through the load,
/// `IL = Vo / R`. Negative solutions clamp to zero.
pub fn vo_ccm_lossy(params: &ConverterParams, d: f64) -> f64 {
    let r = params.r;
    let (series, rhs) = match params.topology {
        Topology::Asynchronous => (
            params.rl + d * params.rds_on_hs,
            params.vi * d - params.vd * (1.0 - d),
        ),
        Topology::Synchronous => (
            params.rl + d * params.rds_on_hs + (1.0 - d) * params.rds_on_ls,
            params.vi * d,
        ),
    };
    (rhs / (1.0 + series / r)).max(0.0)
}

pub fn vo_ccm_ideal(vi: f64, d: f64) -> f64 {
    vi * d
}

/// Duty cycle that produces `vo_target` in lossy CCM (inverse of
/// [`vo_ccm_lossy`]).
pub fn duty_for_vo(params: &ConverterParams, vo_target: f64) -> Result<f64> {
    let r = params.r;
    let d = match params.topology {
        Topology::Asynchronous => {
            (vo_target * (1.0 + params.rl / r) + params.vd)
                / (params.vi - vo_target * params.rds_on_hs / r + params.vd)
        }
        Topology::Synchronous => {
            vo_target * (1.0 + (params.rl + params.rds_on_ls) / r)
                / (params.vi - vo_target * (params.rds_on_hs - params.rds_on_ls) / r)
        }
    };
    if d.is_finite() && (0.0..=1.0).contains(&d) {
        Ok(d)
    } else {
        Err(Error::UnreachableTarget(format!(
            "Vo = {vo_target} V needs duty {d:.6} outside [0, 1]"
        )))
    }
}

/// Conduction parameter `K = 2L / (R Ts)`.
pub fn k_param(params: &ConverterParams) -> f64 {
    2.0 * params.l / (params.r * params.ts())
}

/// DCM iff `K < 1 - D`; the boundary itself counts as CCM.
pub fn conduction_mode(params: &ConverterParams, d: f64) -> ConductionMode {
    if params.topology == Topology::Synchronous {
        return ConductionMode::Ccm;
    }
    if k_param(params) < 1.0 - d {
        ConductionMode::Dcm
    } else {
        ConductionMode::Ccm
    }
}

/// Ideal DCM output voltage `Vi * 2 / (1 + sqrt(1 + 4K/D^2))`.
pub fn vo_dcm(params: &ConverterParams, d: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    let k = k_param(params);
    params.vi * 2.0 / (1.0 + (1.0 + 4.0 * k / (d * d)).sqrt())
}

/// On/freewheel/idle partition of an ideal DCM cycle.
pub fn dcm_timing(params: &ConverterParams, d: f64) -> TimingSolution {
    let ts = params.ts();
    if d <= 0.0 {
        return TimingSolution::new(0.0, 0.0, ts);
    }
    let vo = vo_dcm(params, d);
    let d2 = d * (params.vi - vo) / vo;
    TimingSolution::new(d, d2, ts)
}

/// Peak inductor current and average output current of an ideal DCM cycle.
pub fn dcm_peak_and_current(params: &ConverterParams, d: f64) -> (f64, f64) {
    if d <= 0.0 {
        return (0.0, 0.0);
    }
    let vo = vo_dcm(params, d);
    let timing = dcm_timing(params, d);
    let ipk = (params.vi - vo) * d * params.ts() / params.l;
    let io = ipk / 2.0 * (timing.d + timing.d2);
    (ipk, io)
}

/// Full analytical operating point at duty `d`.
pub fn steady_state(params: &ConverterParams, d: f64) -> Result<SteadyStateReport> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::InfeasibleOperatingPoint(format!(
            "duty {d} outside [0, 1]"
        )));
    }
    let k = k_param(params);
    let ts = params.ts();
    match conduction_mode(params, d) {
        ConductionMode::Ccm => {
            let vo = vo_ccm_lossy(params, d);
            let io = vo / params.r;
            let d_il = ripple_on(params, d, io)?;
            Ok(SteadyStateReport {
                vo_avg: vo,
                d_il,
                ipk: io + d_il / 2.0,
                io,
                k,
                mode: ConductionMode::Ccm,
                timing: TimingSolution::ccm(d, ts),
                efficiency: None,
            })
        }
        ConductionMode::Dcm => {
            let vo = vo_dcm(params, d);
            let (ipk, io) = dcm_peak_and_current(params, d);
            Ok(SteadyStateReport {
                vo_avg: vo,
                d_il: ipk,
                ipk,
                io,
                k,
                mode: ConductionMode::Dcm,
                timing: dcm_timing(params, d),
                efficiency: None,
            })
        }
    }
}
