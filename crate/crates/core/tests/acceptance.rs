//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use buckbench_core::analysis;
use buckbench_core::control::{freewheel_tail, sequence_synchronous, SwitchCommand};
use buckbench_core::engine::{initial_state, lin_space, SweepAxis};
use buckbench_core::{
    load_step, run_to_steady_state, sweep, ControlConfig, ConverterParams, Error, LoadProfile,
    OperatingMode, Scheme, SimSettings, Simulator, SteadyRun, Topology,
};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn steady_with(p: &ConverterParams, c: &ControlConfig, s: &SimSettings) -> SteadyRun {
    let sim = Simulator::new(p, c, s).expect("valid setup");
    run_to_steady_state(&sim).expect("steady state")
}

fn steady(p: &ConverterParams, c: &ControlConfig) -> SteadyRun {
    steady_with(p, c, &SimSettings::default())
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Load resistance that puts the ideal stage at conduction parameter `k`.
fn r_for_k(p: &ConverterParams, k: f64) -> f64 {
    2.0 * p.l / (k * p.ts())
}

struct Case {
    p: ConverterParams,
    d: f64,
    run: SteadyRun,
}

fn ccm_ideal_grid() -> Vec<Case> {
    let mut out = Vec::new();
    for &vi in &lin_space(2.6, 4.2, 10) {
        for &d in &lin_space(0.1, 0.9, 10) {
            let p = ConverterParams::ideal(vi, 6.0);
            let run = steady(&p, &ControlConfig::open_loop(d));
            out.push(Case { p, d, run });
        }
    }
    out
}

fn lossy_params() -> ConverterParams {
    ConverterParams {
        vd: 0.4,
        rl: 0.05,
        rds_on_hs: 0.1,
        // Heavy enough that the lossy stage stays continuous down to D = 0.2.
        r: 3.0,
        ..ConverterParams::ideal(3.6, 3.0)
    }
}

fn ccm_lossy_cases() -> Vec<Case> {
    lin_space(0.2, 0.8, 7)
        .into_iter()
        .map(|d| {
            let p = lossy_params();
            let run = steady(&p, &ControlConfig::open_loop(d));
            Case { p, d, run }
        })
        .collect()
}

fn dcm_cases() -> Vec<Case> {
    let mut out = Vec::new();
    for k in [0.02, 0.05, 0.1, 0.2] {
        for d in [0.1, 0.2, 0.3] {
            let base = ConverterParams::ideal(3.6, 6.0);
            let p = ConverterParams {
                r: r_for_k(&base, k),
                ..base
            };
            assert!(k < 1.0 - d);
            let run = steady(&p, &ControlConfig::open_loop(d));
            out.push(Case { p, d, run });
        }
    }
    out
}

fn c1(grid: &[Case]) -> Outcome {
    let mut worst: f64 = 0.0;
    for c in grid {
        assert!(analysis::k_param(&c.p) > 1.0);
        worst = worst.max(rel(c.run.metrics.vo_avg, c.p.vi * c.d));
    }
    outcome(
        worst < 0.01,
        format!("{} points, max |Vo - Vi*D|/(Vi*D) = {worst:.3e} (tol 1e-2)", grid.len()),
    )
}

fn c2(cases: &[Case]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut all_ccm = true;
    for c in cases {
        let vo = analysis::vo_ccm_lossy(&c.p, c.d);
        worst = worst.max(rel(c.run.metrics.vo_avg, vo));
        all_ccm &= c.run.metrics.mode == OperatingMode::Ccm;
    }
    outcome(
        worst < 0.02 && all_ccm,
        format!(
            "{} points, max rel err vs lossy CCM = {worst:.3e} (tol 2e-2), all CCM: {all_ccm}",
            cases.len()
        ),
    )
}

fn c3(cases: &[Case]) -> Outcome {
    let (mut worst_vo, mut worst_d2): (f64, f64) = (0.0, 0.0);
    let mut all_dcm = true;
    for c in cases {
        let m = &c.run.metrics;
        worst_vo = worst_vo.max(rel(m.vo_avg, analysis::vo_dcm(&c.p, c.d)));
        worst_d2 = worst_d2.max((m.d2 - analysis::dcm_timing(&c.p, c.d).d2).abs());
        all_dcm &= m.mode == OperatingMode::Dcm;
    }
    outcome(
        worst_vo < 0.02 && worst_d2 < 0.03 && all_dcm,
        format!(
            "{} points, max Vo rel err = {worst_vo:.3e} (tol 2e-2), max |D2 err| = {worst_d2:.3e} Ts (tol 3e-2), all DCM: {all_dcm}",
            cases.len()
        ),
    )
}

fn c4(grid: &[Case]) -> Outcome {
    let mut worst: f64 = 0.0;
    for c in grid {
        let vo = c.p.vi * c.d;
        let ripple = (c.p.vi - vo) * c.d * c.p.ts() / c.p.l;
        worst = worst.max(rel(c.run.metrics.il_ripple_pp, ripple));
    }
    outcome(
        worst < 0.01,
        format!("{} points, max ripple rel err = {worst:.3e} (tol 1e-2)", grid.len()),
    )
}

fn c5() -> Outcome {
    let mut worst_alg: f64 = 0.0;
    let mut worst_min: f64 = 0.0;
    for d in [0.3, 0.5, 0.7] {
        let base = ConverterParams::ideal(3.6, 6.0);
        let p = ConverterParams {
            r: r_for_k(&base, 1.0 - d),
            ..base
        };
        worst_alg = worst_alg.max(rel(analysis::vo_dcm(&p, d), p.vi * d));
        let m = steady(&p, &ControlConfig::open_loop(d)).metrics;
        worst_min = worst_min.max((m.il_min / m.ipk).abs());
    }
    outcome(
        worst_alg < 1e-12 && worst_min < 0.02,
        format!(
            "max |vo_dcm - Vi*D|/(Vi*D) = {worst_alg:.3e} (tol 1e-12), max |iL_min|/Ipk = {worst_min:.3e} (tol 2e-2)"
        ),
    )
}

fn c6(sets: &[&[Case]]) -> Outcome {
    let (mut vs, mut q, mut e): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut n = 0;
    for c in sets.iter().flat_map(|s| s.iter()) {
        let b = &c.run.metrics.balance;
        vs = vs.max(b.volt_seconds.abs() / b.volt_second_scale);
        q = q.max(b.charge.abs() / b.charge_scale);
        e = e.max(b.energy_residual.abs());
        n += 1;
    }
    outcome(
        vs < 1e-3 && q < 1e-3 && e < 5e-3,
        format!(
            "{n} runs, max volt-second {vs:.3e} (tol 1e-3 Vi*T), max charge {q:.3e} (tol 1e-3 Ipk*T), max energy residual {e:.3e} (tol 5e-3 Pin)"
        ),
    )
}

fn c7() -> Outcome {
    let p = ConverterParams::default();
    let pwm = ControlConfig::default();
    let burst = ControlConfig::with_scheme(Scheme::Burst);
    let s = SimSettings::default();
    let eff = |c: &ControlConfig, io: f64| {
        let g = io / c.regulated_output();
        let sim = Simulator::new(&p, c, &s)
            .unwrap()
            .with_load(LoadProfile::Constant(g));
        run_to_steady_state(&sim).unwrap().metrics
    };
    let (b1, f1) = (eff(&burst, 1e-3), eff(&pwm, 1e-3));
    let (b3, f3) = (eff(&burst, 0.3), eff(&pwm, 0.3));
    let gap = (b3.efficiency - f3.efficiency).abs();
    outcome(
        b1.efficiency > f1.efficiency && gap < 0.02 && b1.mode == OperatingMode::Burst,
        format!(
            "1 mA: burst {:.4} vs PWM {:.4}; 300 mA: burst {:.4} vs PWM {:.4}, gap {:.2} pp (tol 2 pp)",
            b1.efficiency,
            f1.efficiency,
            b3.efficiency,
            f3.efficiency,
            gap * 100.0
        ),
    )
}

fn c8() -> Outcome {
    let table = sweep(
        &ConverterParams::default(),
        &ControlConfig::default(),
        &SimSettings::default(),
        SweepAxis::Io,
        &lin_space(0.05, 0.3, 11),
    );
    let best = table
        .rows
        .iter()
        .filter_map(|r| r.result.as_ref().ok())
        .map(|m| m.efficiency)
        .fold(0.0, f64::max);
    outcome(
        best > 0.90,
        format!("peak efficiency over 50-300 mA = {best:.4} (threshold 0.90)"),
    )
}

/// Both-off time separating every high/low hand-over, wrapping into the
/// next cycle.
fn shoot_through_violation(cmds: &[SwitchCommand], dead_time: f64, ts: f64) -> Option<String> {
    let mut spans = Vec::new();
    let mut start = 0.0;
    for c in cmds {
        if c.high_side && c.low_side {
            return Some(format!("both on until {}", c.valid_until));
        }
        if c.valid_until < start {
            return Some("commands out of order".into());
        }
        spans.push((start, c.valid_until, c.high_side, c.low_side));
        start = c.valid_until;
    }
    if (start - ts).abs() > 1e-15 * ts {
        return Some(format!("sequence ends at {start}, not Ts"));
    }
    // Two copies of the cycle catch hand-overs across the clock edge.
    let mut gap = 0.0;
    let mut last: Option<bool> = None;
    for &(a, b, hi, lo) in spans.iter().chain(spans.iter()) {
        if hi || lo {
            if let Some(prev_hi) = last {
                if prev_hi != hi && gap < dead_time * (1.0 - 1e-9) {
                    return Some(format!("hand-over with {gap:e} s gap at {a}"));
                }
            }
            last = Some(hi);
            gap = 0.0;
        } else {
            gap += b - a;
        }
    }
    None
}

fn c9() -> Outcome {
    let ts = 2e-6;
    let mut runner = TestRunner::new(PropConfig {
        cases: 10_000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let strategy = (0.0..=1.0f64, 0.0..0.5f64, 0.0..=1.0f64);
    let result = runner.run(&strategy, |(d, dt_frac, trip)| {
        let dead_time = dt_frac * ts;
        let seq = sequence_synchronous(d, dead_time, ts);
        if let Some(v) = shoot_through_violation(&seq.commands, dead_time, ts) {
            return Err(TestCaseError::fail(format!("d={d} dt={dead_time}: {v}")));
        }
        // Peak-current trip at an arbitrary instant followed by the tail.
        let t_off = trip * ts;
        let mut cmds = Vec::new();
        if t_off > 0.0 {
            cmds.push(SwitchCommand {
                high_side: true,
                low_side: false,
                valid_until: t_off,
            });
        }
        cmds.extend(freewheel_tail(t_off, dead_time, ts, Topology::Synchronous));
        if let Some(v) = shoot_through_violation(&cmds, dead_time, ts) {
            return Err(TestCaseError::fail(format!("trip={t_off} dt={dead_time}: {v}")));
        }
        Ok(())
    });
    match result {
        Ok(()) => outcome(true, "10000 random (d_cmd, dead_time, trip) samples, 0 overlaps".into()),
        Err(e) => outcome(false, format!("overlap found: {e}")),
    }
}

fn c10() -> Outcome {
    // Lossless stage at D = 0.7: Vo = 2.52 V, Io = 0.42 A, ripple 0.1512 A.
    let p = ConverterParams::ideal(3.6, 6.0);
    let peak = 0.42 + 0.1512 / 2.0;
    let mut cfg = ControlConfig::with_scheme(Scheme::CurrentMode);
    cfg.vo_target = 2.52;
    cfg.fb_ratio = cfg.vref / cfg.vo_target;
    cfg.dead_time = 0.0;
    let settings = SimSettings {
        accelerate: false,
        ..SimSettings::default()
    };

    let spread = |cfg: &ControlConfig| {
        let sim = Simulator::new(&p, cfg, &settings).unwrap();
        let mut st = initial_state(&sim);
        let mut ipk = Vec::new();
        let mut duty = 0.0;
        for _ in 0..4000 {
            let (next, stats) = sim.run_cycle(&st).unwrap();
            ipk.push(stats.ipk);
            duty = stats.duty();
            st = next;
        }
        let tail = &ipk[ipk.len() - 200..];
        let diff = tail
            .windows(2)
            .map(|w| ((w[1] - w[0]) / w[0]).abs())
            .fold(0.0, f64::max);
        (diff, duty, run_to_steady_state(&sim))
    };

    let mut comp = cfg;
    comp.ipk_cmd = Some(peak + cfg.slope_comp_for(&p) * 0.7 * p.ts());
    let (d_comp, duty, run_comp) = spread(&comp);

    let mut bare = cfg;
    bare.slope_comp = Some(0.0);
    bare.ipk_cmd = Some(peak);
    let (d_bare, _, run_bare) = spread(&bare);

    let comp_ok = d_comp < 1e-4 && run_comp.is_ok() && (duty - 0.7).abs() < 0.01;
    let bare_unstable =
        d_bare > 1e-2 && matches!(run_bare, Err(Error::ConvergenceFailure { .. }));
    outcome(
        comp_ok && bare_unstable,
        format!(
            "slope comp: successive Ipk diff {d_comp:.3e} (tol 1e-4), D = {duty:.4}; no slope comp: diff {d_bare:.3e}, steady state {}",
            if run_bare.is_err() { "not reached" } else { "reached" }
        ),
    )
}

fn c11(grid: &[Case]) -> Outcome {
    let fine = SimSettings {
        steps_per_period: 512,
        ..SimSettings::default()
    };
    let mut worst: f64 = 0.0;
    for c in grid {
        let m = steady_with(&c.p, &ControlConfig::open_loop(c.d), &fine).metrics;
        worst = worst.max(rel(m.vo_avg, c.run.metrics.vo_avg));
    }
    outcome(
        worst < 1e-6,
        format!(
            "{} points, max |Vo(512) - Vo(256)|/Vo = {worst:.3e} (tol 1e-6)",
            grid.len()
        ),
    )
}

fn c12() -> Outcome {
    let p = ConverterParams::default();
    let cfg = ControlConfig::default();
    let s = SimSettings::default();
    let step = load_step(&p, &cfg, &s, 0.0, 0.3, 2e-6).unwrap();
    let target = cfg.regulated_output();
    let settle = step.metrics.settle_time;
    let lr = step.metrics.load_regulation;
    let recovered = rel(step.metrics.vo_avg, target) < 0.01;
    let dipped = step
        .trace
        .samples
        .iter()
        .map(|x| x.vo)
        .fold(f64::INFINITY, f64::min);

    let line = sweep(&p, &cfg, &s, SweepAxis::Vi, &lin_space(2.6, 4.2, 9));
    let vos: Vec<f64> = line
        .rows
        .iter()
        .filter_map(|r| r.result.as_ref().ok().map(|m| m.vo_avg))
        .collect();
    let spread = vos.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - vos.iter().cloned().fold(f64::INFINITY, f64::min);
    let line_reg = line.line_regulation;

    let pass = settle.is_some_and(f64::is_finite)
        && lr.is_some_and(f64::is_finite)
        && recovered
        && vos.len() == 9
        && spread < 0.01 * target
        && line_reg.is_some_and(f64::is_finite);
    outcome(
        pass,
        format!(
            "0->300 mA in 2 us: min vo {dipped:.4} V, settle {:.1} us, load reg {:.3e} mV/A; line 2.6-4.2 V: |dVo| {:.3e} V (tol {:.3e}), line reg {:.3e} mV/V",
            settle.unwrap_or(f64::NAN) * 1e6,
            lr.unwrap_or(f64::NAN) * 1e3,
            spread,
            0.01 * target,
            line_reg.unwrap_or(f64::NAN) * 1e3
        ),
    )
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let grid = ccm_ideal_grid();
    let lossy = ccm_lossy_cases();
    let dcm = dcm_cases();

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("CCM ideal agreement", Box::new(|| c1(&grid))),
        ("CCM lossy agreement", Box::new(|| c2(&lossy))),
        ("DCM agreement", Box::new(|| c3(&dcm))),
        ("ripple formulas", Box::new(|| c4(&grid))),
        ("mode-boundary continuity", Box::new(c5)),
        ("conservation suite", Box::new(|| c6(&[&grid, &lossy, &dcm]))),
        ("burst light-load benefit", Box::new(c7)),
        ("peak efficiency threshold", Box::new(c8)),
        ("shoot-through exclusion", Box::new(c9)),
        ("subharmonic check", Box::new(c10)),
        ("integrator order", Box::new(|| c11(&grid))),
        ("regulation metrics", Box::new(c12)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {} [{:.2} s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1} s",
        criteria.len() - failed,
        criteria.len(),
        t0.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
