mod common;

use common::{grid, m1, max_diff};
use nalgebra::{DMatrix, SymmetricEigen};
use resonance_core::greens::SiteRef;
use resonance_core::oracle::{truncate, ExactPropagator};
use resonance_core::spectral::solve_discrete_states;
use resonance_core::time::*;
use resonance_core::{CVector, Error, OpenLatticeModel, C64};

const TOL: f64 = 1e-11;

#[test]
fn survival_quadrature_matches_oracle() {
    let times = grid(0.0, 200.0, 2.5);
    for m in [m1(), OpenLatticeModel::t_model()] {
        let sol = solve_discrete_states(&m).unwrap();
        let q = survival_amplitude_quadrature(&m, &sol, 0, 0, &times, TOL).unwrap();
        let ex = ExactPropagator::new(truncate(&m, 600).unwrap());
        let o = ex.element(SiteRef::Dot(0), SiteRef::Dot(0), &times).unwrap();
        assert!(max_diff(&q.values, &o) <= 1e-6);
        assert_eq!(q.method, Method::Quadrature);
        assert!((q.values[0] - 1.0).norm() < 1e-12);
    }
}

#[test]
fn single_site_survival_at_t5() {
    let m = m1();
    let sol = solve_discrete_states(&m).unwrap();
    let q = survival_amplitude_quadrature(&m, &sol, 0, 0, &[5.0], TOL).unwrap();
    let o = ExactPropagator::new(truncate(&m, 600).unwrap())
        .element(SiteRef::Dot(0), SiteRef::Dot(0), &[5.0])
        .unwrap();
    assert!((q.values[0] - o[0]).norm() < 1e-8);
}

#[test]
fn single_site_resonant_group_is_analytic() {
    let sol = solve_discrete_states(&m1()).unwrap();
    let a = survival_amplitude_poles(&sol, 0, 0, &[10.0], BranchMode::Saddle).unwrap();
    let g = a.groups.unwrap();
    let expected = 7.0 / 6.0 * (-0.288675134594813 * 10.0f64).exp();
    assert!((g.resonant_or_ar[0] - expected).norm() < 1e-12, "{}", g.resonant_or_ar[0]);
    assert!((expected - 0.0650499).abs() < 1e-7);
    assert_eq!(g.bound_ab[0], C64::from(0.0));
    assert_eq!(g.plane_wave[0], C64::from(0.0));
}

#[test]
fn conjugation_symmetry_of_quadrature() {
    let times = grid(-60.0, 60.0, 3.0);
    for (m, sol) in common::random_models(31, 8, 4).into_iter().chain([(
        OpenLatticeModel::t_model(),
        solve_discrete_states(&OpenLatticeModel::t_model()).unwrap(),
    )]) {
        let n = m.n_sites();
        let a = survival_amplitude_quadrature(&m, &sol, 0, n - 1, &times, TOL).unwrap();
        let len = times.len();
        for i in 0..len {
            assert!((a.values[i] - a.values[len - 1 - i].conj()).norm() <= 1e-12);
        }
        let e = escaping_amplitude_x_quadrature(&m, &sol, 0, 7, n - 1, &times, TOL).unwrap();
        for i in 0..len {
            assert!((e.values[i] - e.values[len - 1 - i].conj()).norm() <= 1e-12);
        }
    }
}

#[test]
fn exact_branch_reproduces_quadrature() {
    let times: Vec<f64> = grid(-40.0, 40.0, 2.0).into_iter().filter(|t| *t != 0.0).collect();
    let mut models = common::random_models(32, 6, 4);
    let t = OpenLatticeModel::t_model();
    models.push((t.clone(), solve_discrete_states(&t).unwrap()));
    for (m, sol) in models {
        let n = m.n_sites();
        let q = survival_amplitude_quadrature(&m, &sol, 0, n - 1, &times, TOL).unwrap();
        let p = survival_amplitude_poles(&sol, 0, n - 1, &times, BranchMode::Descent).unwrap();
        assert!(max_diff(&q.values, &p.values) <= 1e-9, "{:e}", max_diff(&q.values, &p.values));
        let qx = escaping_amplitude_x_quadrature(&m, &sol, 0, 5, 0, &times, TOL).unwrap();
        let px = escaping_amplitude_x(&m, &sol, 0, 5, 0, &times, BranchMode::Descent).unwrap();
        assert!(max_diff(&qx.values, &px.values) <= 1e-9, "{:e}", max_diff(&qx.values, &px.values));
    }
}

#[test]
fn saddle_branch_is_the_long_time_limit() {
    let m = OpenLatticeModel::t_model();
    let sol = solve_discrete_states(&m).unwrap();
    let times = [80.0, 320.0, 1280.0];
    let q = survival_amplitude_quadrature(&m, &sol, 0, 0, &times, TOL).unwrap();
    let p = survival_amplitude_poles(&sol, 0, 0, &times, BranchMode::Saddle).unwrap();
    let err: Vec<f64> = q.values.iter().zip(&p.values).map(|(a, b)| (a - b).norm()).collect();
    // next order is t^{-5/2}: a factor 4 in t gives about 32
    assert!(err[0] / err[1] > 16.0 && err[1] / err[2] > 16.0, "{err:?}");
    assert!(err[2] < 1e-6);
}

#[test]
fn groups_sum_to_total_and_mirror_in_time() {
    let sol = solve_discrete_states(&OpenLatticeModel::t_model()).unwrap();
    let times = [-30.0, -4.0, 4.0, 30.0];
    for mode in [BranchMode::Saddle, BranchMode::Descent] {
        let a = survival_amplitude_poles(&sol, 0, 1, &times, mode).unwrap();
        let g = a.groups.as_ref().unwrap();
        for i in 0..times.len() {
            let s = g.resonant_or_ar[i] + g.bound_ab[i] + g.branch_power[i] + g.plane_wave[i];
            assert!((s - a.values[i]).norm() <= 1e-10);
        }
        for (i, j) in [(0, 3), (1, 2)] {
            assert!((g.resonant_or_ar[i] - g.resonant_or_ar[j].conj()).norm() < 1e-13);
            assert!((g.bound_ab[i] - g.bound_ab[j].conj()).norm() < 1e-13);
            assert!((g.branch_power[i] - g.branch_power[j].conj()).norm() < 1e-12);
        }
    }
}

#[test]
fn poles_method_rejects_t_zero_and_incomplete_spectra() {
    let sol = solve_discrete_states(&m1()).unwrap();
    assert!(matches!(
        survival_amplitude_poles(&sol, 0, 0, &[1.0, 0.0], BranchMode::Saddle),
        Err(Error::BadArgument(_))
    ));
    let m = OpenLatticeModel::single_site(0.0, 1.0).unwrap();
    let s = solve_discrete_states(&m).unwrap();
    assert!(matches!(
        survival_amplitude_poles(&s, 0, 0, &[1.0], BranchMode::Saddle),
        Err(Error::IncompleteSpectrum { .. })
    ));
    assert!(matches!(
        survival_amplitude_quadrature(&m, &s, 0, 0, &[1.0], TOL),
        Err(Error::IncompleteSpectrum { .. })
    ));
}

#[test]
fn saddle_warning_near_band_edge() {
    // bound state at lambda close to 1: eps = -1.1, 0.75 l^2 - 1.1 l + 1 has no real root,
    // so use a weak coupling with eps just outside the band.
    let m = OpenLatticeModel::single_site(-2.05, 0.2).unwrap();
    let sol = solve_discrete_states(&m).unwrap();
    let a = survival_amplitude_poles(&sol, 0, 0, &[10.0], BranchMode::Saddle).unwrap();
    assert!(a.warnings.iter().any(|w| matches!(w, Warning::SaddleOverlap { .. })));
    let b = survival_amplitude_poles(&sol, 0, 0, &[10.0], BranchMode::Descent).unwrap();
    assert!(b.warnings.iter().all(|w| !matches!(w, Warning::SaddleOverlap { .. })));
}

#[test]
fn escape_into_momentum_state_matches_projection() {
    let m = OpenLatticeModel::t_model();
    let sol = solve_discrete_states(&m).unwrap();
    let ex = ExactPropagator::new(truncate(&m, 600).unwrap());
    let mut init = CVector::zeros(ex.system.dim());
    init[0] = C64::from(1.0);
    let times = [5.0, 40.0];
    let fields = ex.propagate(&init, &times, 0).unwrap();
    for k in [0.4, 1.3, 2.6] {
        let p = escaping_amplitude_k(&m, &sol, 1, k, 0, &times, BranchMode::Descent).unwrap();
        for (ti, f) in fields.iter().enumerate() {
            let proj: C64 = (1..=600u32)
                .map(|x| {
                    let row = ex.system.index(SiteRef::Lead { lead: 1, x }).unwrap();
                    f[row] * (2f64.sqrt() * (k * x as f64).sin())
                })
                .sum();
            assert!((p.values[ti] - proj).norm() < 1e-9, "k={k} {} {}", p.values[ti], proj);
        }
        let g = p.groups.unwrap();
        assert!(g.plane_wave.iter().all(|v| v.norm() > 0.0));
    }
    assert!(matches!(
        escaping_amplitude_k(&m, &sol, 0, 0.0, 0, &times, BranchMode::Saddle),
        Err(Error::BandEdgeK(_))
    ));
    assert!(matches!(
        escaping_amplitude_k(&m, &sol, 0, 3.2, 0, &times, BranchMode::Saddle),
        Err(Error::BandEdgeK(_))
    ));
}

#[test]
fn escape_to_lead_site_matches_oracle() {
    let m = OpenLatticeModel::t_model();
    let sol = solve_discrete_states(&m).unwrap();
    let times = grid(0.0, 100.0, 5.0);
    let q = escaping_amplitude_x_quadrature(&m, &sol, 1, 20, 0, &times, TOL).unwrap();
    let o = ExactPropagator::new(truncate(&m, 600).unwrap())
        .element(SiteRef::Lead { lead: 1, x: 20 }, SiteRef::Dot(0), &times)
        .unwrap();
    assert!(max_diff(&q.values, &o) <= 1e-6);
}

#[test]
fn free_lead_propagator_matches_chain() {
    let l = 400;
    let h = DMatrix::from_fn(l, l, |i, j| if i.abs_diff(j) == 1 { -1.0 } else { 0.0 });
    let eig = SymmetricEigen::new(h);
    for (x, xp, t) in [(1u32, 1u32, 0.0), (3, 5, 7.5), (10, 2, 40.0), (30, 31, -20.0)] {
        let (a, b) = (x as usize - 1, xp as usize - 1);
        let exact: C64 = (0..l)
            .map(|k| C64::from_polar(eig.eigenvectors[(a, k)] * eig.eigenvectors[(b, k)], -eig.eigenvalues[k] * t))
            .sum();
        assert!((free_lead_propagator(x, xp, t) - exact).norm() < 1e-12);
    }
}

#[test]
fn general_propagator_between_lead_sites() {
    let m = OpenLatticeModel::t_model();
    let sol = solve_discrete_states(&m).unwrap();
    let times = [0.0, 10.0, 25.0];
    let ex = ExactPropagator::new(truncate(&m, 300).unwrap());
    for (a, b) in [
        (SiteRef::Lead { lead: 0, x: 4 }, SiteRef::Lead { lead: 0, x: 9 }),
        (SiteRef::Lead { lead: 1, x: 3 }, SiteRef::Lead { lead: 0, x: 2 }),
        (SiteRef::Dot(1), SiteRef::Lead { lead: 1, x: 6 }),
    ] {
        let q = propagator_quadrature(&m, &sol, a, b, &times, TOL).unwrap();
        let o = ex.element(a, b, &times).unwrap();
        assert!(max_diff(&q.values, &o) < 1e-9);
    }
}

fn packet_case() -> (OpenLatticeModel, resonance_core::SpectralSolution, GaussianPacket) {
    let m = OpenLatticeModel::t_model();
    let sol = solve_discrete_states(&m).unwrap();
    (m, sol, GaussianPacket::default_on(0))
}

#[test]
fn packet_amplitudes_normalized() {
    let p = GaussianPacket::default_on(0);
    let w = p.amplitudes().unwrap();
    let n: f64 = w.iter().map(|v| v.norm_sqr()).sum();
    assert!((n - 1.0).abs() < 1e-14);
    assert!(GaussianPacket { width: 0.0, ..p.clone() }.amplitudes().is_err());
    let (m, sol, _) = packet_case();
    assert!(matches!(packet_evolve(&m, &sol, &p, &[0.0], 100, TOL), Err(Error::BadArgument(_))));
}

#[test]
fn packet_totals_match_oracle_and_conserve_norm() {
    let (m, sol, p) = packet_case();
    let times = [-150.0, -60.0, 0.0, 35.0, 100.0];
    let x_max = 400;
    let frames = packet_evolve(&m, &sol, &p, &times, x_max, TOL).unwrap();
    let ex = ExactPropagator::new(truncate(&m, 800).unwrap());
    let mut init = CVector::zeros(ex.system.dim());
    for (x, w) in p.amplitudes().unwrap().iter().enumerate() {
        init[ex.system.index(SiteRef::Lead { lead: 0, x: x as u32 + 1 }).unwrap()] = *w;
    }
    let fields = ex.propagate(&init, &times, x_max).unwrap();
    for (f, o) in frames.iter().zip(&fields) {
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            worst = worst.max((f.total.dot[i] - o[i]).norm());
        }
        for b in 0..2 {
            for x in 1..=x_max {
                let row = ex.system.index(SiteRef::Lead { lead: b, x }).unwrap();
                worst = worst.max((f.total.leads[b][x as usize - 1] - o[row]).norm());
            }
        }
        assert!(worst <= 1e-6, "t={} {worst:e}", f.time);
        if f.time.abs() <= 100.0 {
            assert!((f.total.norm_sqr() - 1.0).abs() < 1e-6);
        }
    }
    let start = &frames[2].total;
    for (x, w) in p.amplitudes().unwrap().iter().enumerate() {
        assert!((start.leads[0][x] - w).norm() < 1e-12);
    }
}

#[test]
fn packet_time_reversal_and_components() {
    let (m, sol, p) = packet_case();
    let times = [-30.0, 30.0];
    let frames = packet_evolve_with_components(&m, &sol, &p, &times, 200, TOL).unwrap();
    let (back, fwd) = (&frames[0], &frames[1]);
    assert!(back.total.max_diff(&fwd.total.time_inverted()) < 1e-12);
    for f in &frames {
        let comps = f.components.as_ref().unwrap();
        assert_eq!(comps.len(), 1 + sol.states.len());
        let mut sum = resonance_core::time::SiteField::zeros(2, 2, 200);
        for (_, c) in comps {
            sum.add(c);
        }
        assert!(sum.max_diff(&f.total) < 1e-8);
    }
    let res = sol.leading_resonance().unwrap();
    let ar = sol.states[res].partner;
    let get = |f: &PacketFrame, tag| f.components.as_ref().unwrap().iter().find(|c| c.0 == tag).unwrap().1.clone();
    let ar_back = get(back, ComponentTag::State(ar));
    let res_fwd = get(fwd, ComponentTag::State(res));
    assert!(ar_back.max_diff(&res_fwd.time_inverted()) < 1e-10);
    let single = packet_component(&m, &sol, ComponentTag::State(res), &p, 30.0, 200, TOL).unwrap();
    assert!(single.max_diff(&res_fwd) < 1e-12);
}

#[test]
fn reabsorption_is_time_inverted_emission() {
    let m = OpenLatticeModel::t_model();
    let sol = solve_discrete_states(&m).unwrap();
    let t0 = 30.0;
    let xs = [1u32, 5, 20];
    let times = [0.0, 10.0, 30.0];
    let r = reabsorption_experiment(&m, &sol, t0, 1, 0, &xs, &times, TOL).unwrap();
    assert_eq!(r.reabsorbed[2].tau, 0.0);
    assert_eq!(r.reabsorbed[2].total, r.emitted[0].total);
    // oracle: propagate for t0, conjugate, propagate for t
    let ex = ExactPropagator::new(truncate(&m, 300).unwrap());
    let mut init = CVector::zeros(ex.system.dim());
    init[0] = C64::from(1.0);
    let emitted = ex.propagate(&init, &[t0], 0).unwrap().remove(0).map(|v| v.conj());
    let later = ex.propagate(&emitted, &times, 20).unwrap();
    for (ti, f) in later.iter().enumerate() {
        for (xi, &x) in xs.iter().enumerate() {
            let row = ex.system.index(SiteRef::Lead { lead: 1, x }).unwrap();
            assert!((r.reabsorbed[ti].total[xi] - f[row]).norm() < 1e-9);
        }
        for (xi, _) in xs.iter().enumerate() {
            let s: C64 = r.reabsorbed[ti].states.iter().map(|c| c[xi]).sum();
            assert!((s - r.reabsorbed[ti].total[xi]).norm() < 1e-9);
        }
    }
    assert!(reabsorption_experiment(&m, &sol, 0.0, 1, 0, &xs, &times, TOL).is_err());
}
