#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resonance_core::spectral::solve_discrete_states;
use resonance_core::{Error, OpenLatticeModel, SpectralSolution, C64};

/// Seeded random models with their solutions; degenerate draws are skipped.
pub fn random_models(seed: u64, count: usize, max_n: usize) -> Vec<(OpenLatticeModel, SpectralSolution)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let n = rng.gen_range(1..=max_n);
        let m = OpenLatticeModel::random(n, || rng.gen::<f64>()).unwrap();
        match solve_discrete_states(&m) {
            Ok(s) => out.push((m, s)),
            Err(Error::DegenerateSpectrum { .. }) => continue,
            Err(e) => panic!("solver failed: {e}"),
        }
    }
    out
}

pub fn m1() -> OpenLatticeModel {
    OpenLatticeModel::single_site(0.0, 0.5).unwrap()
}

pub fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}
