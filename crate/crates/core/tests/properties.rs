use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resonance_core::greens::{g_eff_direct, g_eff_expanded};
use resonance_core::model::{energy_of, lambda_from_energy};
use resonance_core::oracle::{det_z_roots, multiset_distance};
use resonance_core::pencil::max_abs;
use resonance_core::spectral::{solve_discrete_states, verify_resolution_of_unity};
use resonance_core::time::{survival_amplitude_poles, survival_amplitude_quadrature, BranchMode};
use resonance_core::{Error, OpenLatticeModel, Sheet, SheetPoint, SpectralSolution, C64};

fn draw(seed: u64, n: usize) -> Option<(OpenLatticeModel, SpectralSolution)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = OpenLatticeModel::random(n, || rng.gen::<f64>()).unwrap();
    match solve_discrete_states(&m) {
        Ok(s) => Some((m, s)),
        Err(Error::DegenerateSpectrum { .. }) => None,
        Err(e) => panic!("{e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectral_invariants(seed in any::<u64>(), n in 1usize..=6) {
        let Some((m, sol)) = draw(seed, n) else { return Ok(()) };
        prop_assert_eq!(sol.states.len() + sol.n_infinite, 2 * n);
        prop_assert!(verify_resolution_of_unity(&sol).unwrap().passes(1e-9));
        prop_assert!(sol.diagnostics.max_biorthonormality_error <= 1e-9);
        prop_assert!(sol.diagnostics.max_pencil_residual <= 1e-9);
        let roots = det_z_roots(&m).unwrap().roots;
        let lam: Vec<C64> = sol.states.iter().map(|s| s.lambda).collect();
        prop_assert!(multiset_distance(&lam, &roots).unwrap() <= 1e-8);
        for s in &sol.states {
            prop_assert_eq!(sol.states[s.partner].lambda, s.lambda.conj());
        }
    }

    #[test]
    fn expansion_equals_inversion(seed in any::<u64>(), n in 1usize..=5, r in 0.1f64..3.0, phi in -3.1f64..3.1) {
        let Some((m, sol)) = draw(seed, n) else { return Ok(()) };
        let l = C64::from_polar(r, phi);
        prop_assume!(sol.states.iter().all(|s| (s.lambda - l).norm() > 1e-3));
        let d = g_eff_direct(&m, &SheetPoint::from_lambda(l).unwrap()).unwrap();
        let e = g_eff_expanded(&sol, l).unwrap();
        prop_assert!(max_abs(&(&d - &e)) <= 1e-9 * max_abs(&d).max(1.0));
        prop_assert!(max_abs(&(&e - e.transpose())) <= 1e-12 * max_abs(&e).max(1.0));
    }

    #[test]
    fn quadrature_conjugation_and_group_sum(seed in any::<u64>(), n in 1usize..=4, t in 0.5f64..60.0) {
        let Some((m, sol)) = draw(seed, n) else { return Ok(()) };
        let a = survival_amplitude_quadrature(&m, &sol, 0, n - 1, &[t, -t], 1e-11).unwrap();
        prop_assert!((a.values[0] - a.values[1].conj()).norm() <= 1e-12);
        let p = survival_amplitude_poles(&sol, 0, n - 1, &[t], BranchMode::Saddle).unwrap();
        let g = p.groups.unwrap();
        let s = g.resonant_or_ar[0] + g.bound_ab[0] + g.branch_power[0] + g.plane_wave[0];
        prop_assert!((s - p.values[0]).norm() <= 1e-10);
    }

    #[test]
    fn sheet_round_trip(re in -6.0f64..6.0, im in -3.0f64..3.0) {
        let e = C64::new(re, im);
        prop_assume!((e - 2.0).norm() > 1e-6 && (e + 2.0).norm() > 1e-6);
        let a = lambda_from_energy(e, Sheet::First).unwrap();
        let b = lambda_from_energy(e, Sheet::Second).unwrap();
        prop_assert!((energy_of(a.lambda) - e).norm() <= 1e-12 * e.norm().max(1.0));
        prop_assert!((a.lambda * b.lambda - 1.0).norm() <= 1e-12);
        prop_assert!(a.lambda.norm() <= 1.0 + 1e-12);
    }
}
