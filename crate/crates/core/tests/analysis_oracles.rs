//! Closed-form relations checked against independent numerical oracles.
//!
//! The DCM oracle solves the volt-second and charge balance of the
//! three-state cycle by bisection, without using the closed-form solution.
//! The lossy CCM oracle iterates `Vo = f(Vo / R)` to a fixed point.

use approx::assert_relative_eq;
use buckbench_core::analysis::*;
use buckbench_core::{ConductionMode, ConverterParams, Topology};
use proptest::prelude::*;

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Ideal DCM operating point from first principles: the inductor current
/// rises for `D Ts`, falls to zero, and its cycle average feeds `Vo / R`.
fn dcm_oracle(p: &ConverterParams, d: f64) -> (f64, f64, f64) {
    let ts = p.ts();
    let balance = |vo: f64| {
        let ipk = (p.vi - vo) * d * ts / p.l;
        let t_fall = ipk * p.l / vo;
        let charge = 0.5 * ipk * (d * ts + t_fall);
        charge / ts - vo / p.r
    };
    let vo = bisect(p.vi * d, p.vi * (1.0 - 1e-12), balance);
    let ipk = (p.vi - vo) * d * ts / p.l;
    let d2 = ipk * p.l / vo / ts;
    (vo, d2, ipk)
}

fn lossy_oracle(p: &ConverterParams, d: f64) -> f64 {
    let mut vo = p.vi * d;
    for _ in 0..500 {
        vo = vo_ccm_at_current(p, d, vo / p.r);
    }
    vo
}

fn ideal(r: f64) -> ConverterParams {
    ConverterParams::ideal(3.6, r)
}

#[test]
fn dcm_example_matches_oracle() {
    // K = 0.1 at R = 100 ohm.
    let p = ideal(100.0);
    assert_relative_eq!(k_param(&p), 0.1, max_relative = 1e-12);
    let (vo, d2, ipk) = dcm_oracle(&p, 0.2);
    assert_relative_eq!(vo, 1.6679698490558879, max_relative = 1e-12);
    assert_relative_eq!(vo_dcm(&p, 0.2), vo, max_relative = 1e-12);
    let t = dcm_timing(&p, 0.2);
    assert_relative_eq!(t.d2, d2, max_relative = 1e-9);
    assert_relative_eq!(t.d2, 0.23166247903554002, max_relative = 1e-9);
    assert_relative_eq!(t.d3, 0.56833752096446, max_relative = 1e-9);
    let (pk, io) = dcm_peak_and_current(&p, 0.2);
    assert_relative_eq!(pk, ipk, max_relative = 1e-9);
    assert_relative_eq!(pk, 0.07728120603776449, max_relative = 1e-9);
    assert_relative_eq!(io, 0.01667969849055888, max_relative = 1e-9);
}

#[test]
fn lossy_example_matches_fixed_point() {
    let p = ConverterParams {
        vd: 0.4,
        rl: 0.05,
        rds_on_hs: 0.1,
        ..ideal(6.0)
    };
    assert_relative_eq!(vo_ccm_lossy(&p, 0.5), 1.5737704918032789, max_relative = 1e-12);
    assert_relative_eq!(lossy_oracle(&p, 0.5), vo_ccm_lossy(&p, 0.5), max_relative = 1e-12);
    // Lossy relation at a fixed average current of 0.3 A.
    assert_relative_eq!(vo_ccm_at_current(&p, 0.5, 0.3), 1.570, max_relative = 1e-12);
}

#[test]
fn synchronous_lossy_matches_fixed_point() {
    let p = ConverterParams {
        topology: Topology::Synchronous,
        ..ConverterParams::default()
    };
    for d in [0.2, 0.5, 0.8] {
        assert_relative_eq!(vo_ccm_lossy(&p, d), lossy_oracle(&p, d), max_relative = 1e-12);
    }
}

#[test]
fn ideal_ccm_report() {
    let r = steady_state(&ideal(6.0), 0.5).unwrap();
    assert_eq!(r.mode, ConductionMode::Ccm);
    assert_relative_eq!(r.vo_avg, 1.8, max_relative = 1e-12);
    assert_relative_eq!(r.d_il, 0.18, max_relative = 1e-12);
    assert_relative_eq!(r.ipk, 0.39, max_relative = 1e-12);
    assert_relative_eq!(r.io, r.vo_avg / 6.0, max_relative = 1e-3);
}

#[test]
fn boundary_is_continuous() {
    for d in [0.3, 0.5, 0.7] {
        let r = 2.0 * 10e-6 / (2e-6 * (1.0 - d));
        let p = ideal(r);
        assert_relative_eq!(vo_dcm(&p, d), 3.6 * d, max_relative = 1e-12);
        assert_eq!(conduction_mode(&p, d), ConductionMode::Ccm);
    }
}

#[test]
fn unreachable_target_is_reported() {
    assert!(duty_for_vo(&ideal(6.0), 4.0).is_err());
    assert!(steady_state(&ideal(6.0), 1.2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn dcm_closed_form_matches_oracle(k in 0.01f64..0.5, d in 0.05f64..0.45) {
        prop_assume!(k < 1.0 - d);
        let base = ideal(6.0);
        let p = ConverterParams { r: 2.0 * base.l / (k * base.ts()), ..base };
        let (vo, d2, _) = dcm_oracle(&p, d);
        prop_assert!((vo_dcm(&p, d) - vo).abs() <= 1e-9 * vo);
        prop_assert!((dcm_timing(&p, d).d2 - d2).abs() <= 1e-8);
    }

    #[test]
    fn timing_partitions_the_period(k in 0.01f64..3.0, d in 0.0f64..=1.0) {
        let base = ideal(6.0);
        let p = ConverterParams { r: 2.0 * base.l / (k * base.ts()), ..base };
        let t = steady_state(&p, d).unwrap().timing;
        prop_assert!(t.d >= 0.0 && t.d2 >= 0.0 && t.d3 >= 0.0);
        prop_assert!((t.d + t.d2 + t.d3 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mode_matches_idle_fraction(k in 0.01f64..3.0, d in 0.01f64..0.99) {
        let base = ideal(6.0);
        let p = ConverterParams { r: 2.0 * base.l / (k * base.ts()), ..base };
        let r = steady_state(&p, d).unwrap();
        prop_assert_eq!(r.mode == ConductionMode::Dcm, r.timing.d3 > 0.0);
    }

    #[test]
    fn dcm_output_is_monotone_in_duty(k in 0.01f64..0.3, d in 0.05f64..0.6) {
        let base = ideal(6.0);
        let p = ConverterParams { r: 2.0 * base.l / (k * base.ts()), ..base };
        prop_assert!(vo_dcm(&p, d + 0.01) > vo_dcm(&p, d));
        prop_assert!(vo_dcm(&p, d) >= p.vi * d * (1.0 - 1e-12));
        prop_assert!(vo_dcm(&p, d) < p.vi);
    }

    #[test]
    fn duty_round_trip(vo in 0.5f64..2.45, r in 2.0f64..50.0, sync in any::<bool>()) {
        let p = ConverterParams {
            r,
            topology: if sync { Topology::Synchronous } else { Topology::Asynchronous },
            ..ConverterParams::default()
        };
        let d = duty_for_vo(&p, vo).unwrap();
        prop_assert!((vo_ccm_lossy(&p, d) - vo).abs() < 1e-12 * vo.max(1.0));
    }

    #[test]
    fn losses_only_lower_the_output(d in 0.05f64..0.95, rl in 0.0f64..0.2, rhs in 0.0f64..0.2) {
        let p = ConverterParams { rl, rds_on_hs: rhs, vd: 0.3, ..ideal(3.0) };
        prop_assert!(vo_ccm_lossy(&p, d) <= vo_ccm_ideal(p.vi, d));
    }
}
