mod common;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resonance_core::greens::{
    full_green_element, g_eff, g_eff_direct, g_eff_expanded, g_retarded_advanced_sum, lead_green_element,
    transmission, transmission_direct, SiteRef,
};
use resonance_core::oracle::truncate;
use resonance_core::pencil::max_abs;
use resonance_core::spectral::solve_discrete_states;
use resonance_core::{Error, LeadAttachment, OpenLatticeModel, SheetPoint, C64};

#[test]
fn expansion_matches_inversion_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    for (m, sol) in common::random_models(20, 40, 6) {
        let mut count = 0;
        while count < 50 {
            let l = C64::from_polar(rng.gen_range(0.2..3.0), rng.gen_range(-3.1..3.1));
            if sol.states.iter().any(|s| (s.lambda - l).norm() < 1e-3) {
                continue;
            }
            let d = g_eff_direct(&m, &SheetPoint::from_lambda(l).unwrap()).unwrap();
            let e = g_eff_expanded(&sol, l).unwrap();
            let scale = max_abs(&d).max(1.0);
            worst = worst.max(max_abs(&(d - e)) / scale);
            count += 1;
        }
    }
    assert!(worst <= 1e-9, "worst {worst:e}");
}

#[test]
fn retarded_plus_advanced_identity() {
    for (m, sol) in common::random_models(22, 20, 5) {
        for j in 0..20 {
            let e = -1.95 + 3.9 * (j as f64 + 0.5) / 20.0;
            let k = (-e / 2.0).acos();
            let gr = g_eff_direct(&m, &SheetPoint::from_k(C64::from(k)).unwrap()).unwrap();
            let ga = g_eff_direct(&m, &SheetPoint::from_k(C64::from(-k)).unwrap()).unwrap();
            let sum = g_retarded_advanced_sum(&sol, e).unwrap();
            assert!(max_abs(&(sum - gr - ga)) <= 1e-9);
        }
    }
}

#[test]
fn retarded_advanced_rejects_band_edge() {
    let sol = solve_discrete_states(&OpenLatticeModel::t_model()).unwrap();
    assert_eq!(g_retarded_advanced_sum(&sol, 2.0).unwrap_err(), Error::BandEdge(2.0));
}

#[test]
fn expansion_refuses_poles_and_fallback_inverts() {
    let m = OpenLatticeModel::t_model();
    let sol = solve_discrete_states(&m).unwrap();
    let l = sol.states[0].lambda + 1e-9;
    assert!(matches!(g_eff_expanded(&sol, l), Err(Error::PoleHit { index: 0 })));
    assert!(matches!(g_eff(&m, &sol, sol.states[0].lambda), Err(Error::PoleHit { .. })));
    let near = sol.states[0].lambda + 1e-7;
    let g = g_eff(&m, &sol, near).unwrap();
    assert!(max_abs(&g) > 1e5);
}

#[test]
fn lead_green_against_truncated_lattice() {
    let m = OpenLatticeModel::t_model();
    let sol = solve_discrete_states(&m).unwrap();
    let sys = truncate(&m, 200).unwrap();
    for l in [C64::new(0.5, 0.0), C64::from_polar(0.6, 0.8), C64::from_polar(0.9, 2.0)] {
        let p = SheetPoint::from_lambda(l).unwrap();
        for (a, b) in [
            (SiteRef::Lead { lead: 0, x: 3 }, SiteRef::Lead { lead: 0, x: 7 }),
            (SiteRef::Lead { lead: 0, x: 2 }, SiteRef::Lead { lead: 1, x: 5 }),
            (SiteRef::Lead { lead: 1, x: 4 }, SiteRef::Lead { lead: 1, x: 4 }),
            (SiteRef::Dot(0), SiteRef::Lead { lead: 1, x: 6 }),
            (SiteRef::Dot(1), SiteRef::Dot(0)),
        ] {
            let closed = full_green_element(&m, &sol, &p, a, b).unwrap();
            let brute = sys.resolvent_element(p.energy, a, b).unwrap();
            assert!((closed - brute).norm() <= 1e-10, "{a:?} {b:?} {closed} {brute}");
        }
    }
}

#[test]
fn lead_green_closed_form() {
    let p = SheetPoint::from_lambda(C64::new(0.5, 0.0)).unwrap();
    // x = y = 1: -lambda
    assert!((lead_green_element(&p, 1, 1).unwrap() + 0.5).norm() < 1e-15);
    let g = lead_green_element(&p, 2, 5).unwrap();
    assert!((g - lead_green_element(&p, 5, 2).unwrap()).norm() == 0.0);
    let on = SheetPoint::from_k(C64::from(1.0)).unwrap();
    assert!(matches!(lead_green_element(&on, 1, 1), Err(Error::UnitCircleLambda(_))));
}

#[test]
fn perfect_chain_transmits_fully() {
    let leads = vec![
        LeadAttachment { site: 0, coupling: 1.0, label: "L".into() },
        LeadAttachment { site: 0, coupling: 1.0, label: "R".into() },
    ];
    let m = OpenLatticeModel::new(DMatrix::zeros(1, 1), leads).unwrap();
    let sol = solve_discrete_states(&m).unwrap();
    for e in [-1.9, -0.7, 0.0, 0.4, 1.99] {
        assert!((transmission(&m, &sol, e, 0, 1).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn transmission_properties() {
    for (m, sol) in common::random_models(23, 15, 5) {
        if m.leads().len() < 2 {
            continue;
        }
        for j in 0..30 {
            let e = -1.98 + 3.96 * j as f64 / 29.0;
            let t = transmission(&m, &sol, e, 0, 1).unwrap();
            assert!((-1e-12..=1.0 + 1e-9).contains(&t));
            assert!((t - transmission(&m, &sol, e, 1, 0).unwrap()).abs() < 1e-12);
            assert!((t - transmission_direct(&m, e, 0, 1).unwrap()).abs() < 1e-9);
        }
        assert!(transmission(&m, &sol, -1.999999, 0, 1).unwrap() < 1e-3);
        assert!(transmission(&m, &sol, 1.999999, 0, 1).unwrap() < 1e-3);
        assert!(matches!(transmission(&m, &sol, 2.0, 0, 1), Err(Error::BandEdge(_))));
    }
}
