//! Adaptive Gauss-Kronrod (7/15) quadrature for complex-valued integrands.

use alloc::vec::Vec;

use crate::C64;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Outcome of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    /// Integral estimate.
    pub value: C64,
    /// Summed error estimate.
    pub error: f64,
    /// Largest `|f| * panel width` seen, a cancellation indicator.
    pub peak: f64,
    /// True when every panel met the tolerance.
    pub converged: bool,
}

fn panel<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64) -> (C64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    let mut peak = fc.norm();
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        peak = peak.max(f1.norm()).max(f2.norm());
        k += (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            g += (f1 + f2) * WG[j / 2];
        }
    }
    let k = k * h;
    let g = g * h;
    (k, (k - g).norm(), peak * (b - a))
}

const ROUNDOFF: f64 = 64.0 * f64::EPSILON;

/// Integrates `f` over `[a, b]`, first splitting into `initial` equal panels,
/// then bisecting panels until `err <= max(abs_tol, rel_tol |I|) * width / (b - a)`
/// or the panel error is at round-off relative to its own `peak * width`.
pub fn integrate<F: FnMut(f64) -> C64>(
    mut f: F,
    a: f64,
    b: f64,
    initial: usize,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> QuadResult {
    let initial = initial.max(1);
    let width = (b - a) / initial as f64;
    let mut done = C64::from(0.0);
    let mut done_err = 0.0;
    let mut peak: f64 = 0.0;
    let mut stack: Vec<(f64, f64, C64, f64, f64)> = Vec::new();
    for i in 0..initial {
        let lo = a + width * i as f64;
        let hi = if i + 1 == initial { b } else { lo + width };
        let (v, e, p) = panel(&mut f, lo, hi);
        peak = peak.max(p);
        stack.push((lo, hi, v, e, p));
    }
    let total_est: C64 = stack.iter().map(|s| s.2).sum();
    let target = abs_tol.max(rel_tol * total_est.norm());
    let mut panels = initial;
    let mut converged = true;
    while let Some((lo, hi, v, e, p)) = stack.pop() {
        let allowed = (target * (hi - lo) / (b - a)).max(ROUNDOFF * p);
        if e <= allowed || panels >= max_panels || hi - lo <= 1e-12 * (b - a) {
            if e > allowed {
                converged = false;
            }
            done += v;
            done_err += e;
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let (v1, e1, p1) = panel(&mut f, lo, mid);
        let (v2, e2, p2) = panel(&mut f, mid, hi);
        peak = peak.max(p1).max(p2);
        panels += 1;
        stack.push((lo, mid, v1, e1, p1));
        stack.push((mid, hi, v2, e2, p2));
    }
    QuadResult { value: done, error: done_err, peak, converged }
}
