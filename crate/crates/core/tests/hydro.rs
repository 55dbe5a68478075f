mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use propgen::datagen::baseline_design;
use propgen::geometry::{Feature, PropellerSpec, RadialGrid, N_STATIONS};
use propgen::hydro::{self, DesignBrief, Section};

#[test]
fn efficiency_golden_values() {
    assert!((hydro::eta_from_coeffs(0.6, 0.1, 0.015).unwrap() - 0.6366197723675814).abs() < 1e-15);
    assert!((hydro::eta_from_coeffs(0.5, 0.2, 0.03).unwrap() - 0.5305164769729844).abs() < 1e-15);
    assert!(hydro::eta_from_coeffs(0.6, 0.1, 0.0).is_err());
}

#[test]
fn target_condition_golden_values() {
    let brief = DesignBrief {
        v_a: 5.0,
        t_req: 10250.0,
        n: 10.0,
        p_avail: 128805.3,
        diameter_m: 1.0,
        blades: 4,
        rho: 1025.0,
        bar_min: 0.3,
        bar_max: 0.8,
        material: Default::default(),
    };
    let t = hydro::target_condition(&brief).unwrap();
    assert!((t.j_star - 0.5).abs() < 1e-15);
    assert!((t.kt_star - 0.1).abs() < 1e-15);
    assert!((t.kq_star - 0.020000000186765374).abs() < 1e-15);
    assert!((t.eta_star - 0.3978873540141593).abs() < 1e-12);
    let fast = hydro::target_condition(&DesignBrief { n: 20.0, ..brief }).unwrap();
    assert!((fast.j_star - 0.25).abs() < 1e-15);
}

/// Independent element balance: with the converged inductions, the element
/// loads must reproduce the momentum relations and the load integrands.
#[test]
fn converged_stations_satisfy_momentum_balance() {
    let d = baseline_design();
    let grid = RadialGrid::standard();
    for &j in &[0.3, 0.6, 0.9] {
        for i in 0..N_STATIONS - 1 {
            let sec = Section {
                radius: grid.radius(i),
                chord: d.get(Feature::Chord, i),
                pitch: d.get(Feature::Pitch, i),
                thickness: d.get(Feature::MaxThickness, i),
                camber: d.get(Feature::MaxCamber, i),
            };
            let s = hydro::solve_station(&sec, 4, j);
            if !s.converged {
                continue;
            }
            let r = sec.radius;
            let (a, ap) = (s.axial_induction, s.swirl_induction);
            let beta = (j * (1.0 + a)).atan2(PI * r * (1.0 - ap));
            let alpha = (sec.pitch / (PI * r)).atan() - beta;
            let cl = (2.0 * PI * (alpha + 2.0 * sec.camber)).clamp(-1.5, 1.5);
            let tc = sec.thickness / sec.chord - 0.06;
            let cd = 0.008 * (1.0 + 60.0 * tc * tc) + 0.01 * cl * cl;
            let f = 2.0 / PI * (-(4.0 * (1.0 - r) / (2.0 * r * beta.sin()))).exp().acos();
            let cx = cl * beta.cos() - cd * beta.sin();
            let cy = cl * beta.sin() + cd * beta.cos();
            let sigma = 4.0 * sec.chord / (PI * r);
            let lhs_a = a / (1.0 + a);
            let rhs_a = sigma * cx / (4.0 * f * beta.sin().powi(2));
            let lhs_t = ap / (1.0 - ap);
            let rhs_t = sigma * cy / (4.0 * f * beta.sin() * beta.cos());
            assert!((lhs_a - rhs_a).abs() < 1e-5, "J {j} station {i}: axial {lhs_a} vs {rhs_a}");
            assert!((lhs_t - rhs_t).abs() < 1e-5, "J {j} station {i}: swirl {lhs_t} vs {rhs_t}");
            let w2 = (j * (1.0 + a)).powi(2) + (PI * r * (1.0 - ap)).powi(2);
            assert!((s.thrust_density - w2 * sec.chord * cx).abs() < 1e-12);
            assert!((s.torque_density - 0.5 * w2 * sec.chord * cy * r).abs() < 1e-12);
        }
    }
}

#[test]
fn baseline_regression() {
    let spec = PropellerSpec::new(baseline_design(), 2.0, 4).unwrap();
    let p = hydro::evaluate_point(&spec, 0.6).unwrap();
    assert!(p.converged);
    let golden = [BASELINE_KT, BASELINE_KQ, BASELINE_ETA];
    for (v, g) in [p.kt, p.kq, p.eta].iter().zip(golden) {
        assert!((v - g).abs() < 1e-12, "{v} vs {g}");
    }
}

const BASELINE_KT: f64 = 0.2702181286477068;
const BASELINE_KQ: f64 = 0.04265729377613885;
const BASELINE_ETA: f64 = 0.6049125072915067;

#[test]
fn solver_consistency_on_random_designs() {
    let specs = common::random_specs(20, 3);
    let r = common::solver_consistency(&specs);
    assert!(r.points > 100);
    assert!(r.max_identity_err < 1e-12, "{r:?}");
    assert!(r.max_scaling_err < 1e-12, "{r:?}");
    assert_eq!(r.eta_out_of_range, 0, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn efficiency_identity(j in 0.01f64..2.0, kt in 0.001f64..0.6, kq in 0.001f64..0.1) {
        let eta = hydro::eta_from_coeffs(j, kt, kq).unwrap();
        prop_assert!((eta * 2.0 * PI * kq - j * kt).abs() < 1e-12);
    }

    #[test]
    fn diameter_never_changes_coefficients(d1 in 0.5f64..2.5, d2 in 0.5f64..2.5, j in 0.1f64..1.0) {
        let a = hydro::evaluate_point(&PropellerSpec::new(baseline_design(), d1, 5).unwrap(), j).unwrap();
        let b = hydro::evaluate_point(&PropellerSpec::new(baseline_design(), d2, 5).unwrap(), j).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn tip_loss_bounds(r in 0.2f64..0.999, s in -1.0f64..1.0) {
        let f = hydro::tip_loss(4, r, s);
        prop_assert!(f > 0.0 && f <= 1.0);
    }
}
