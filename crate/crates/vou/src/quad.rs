//! Quadrature helpers: fixed Gauss-Legendre panels and geometrically graded
//! panels for integrands with an endpoint singularity.

/// 16-point Gauss-Legendre nodes on (-1, 1), positive half; mirror for the rest.
const GL16_NODES: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_7,
    0.755_404_408_355_003_0,
    0.865_631_202_387_831_7,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL16_WEIGHTS: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_54,
    0.149_595_988_816_576_73,
    0.124_628_971_255_533_87,
    0.095_158_511_682_492_78,
    0.062_253_523_938_647_89,
    0.027_152_459_411_754_095,
];

/// ∫_a^b f over one 16-point Gauss-Legendre panel.
pub fn gl16<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..8 {
        let x = h * GL16_NODES[i];
        acc += GL16_WEIGHTS[i] * (f(c - x) + f(c + x));
    }
    acc * h
}

/// Adaptive bisection on top of GL16, used as a quadrature oracle in tests:
/// a panel is accepted when splitting it changes the value by less than its
/// share of the tolerance.
#[cfg(test)]
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let whole = gl16(f, a, b);
    let scale = whole.abs().max(1e-300);
    adaptive_step(f, a, b, whole, rel_tol * scale, 48)
}

#[cfg(test)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    abs_tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let left = gl16(f, a, m);
    let right = gl16(f, m, b);
    let refined = left + right;
    if (refined - whole).abs() <= abs_tol || depth == 0 {
        return refined;
    }
    adaptive_step(f, a, m, left, 0.5 * abs_tol, depth - 1)
        + adaptive_step(f, m, b, right, 0.5 * abs_tol, depth - 1)
}

/// ∫_0^b f where f may blow up (integrably) as t → 0⁺: geometric panels
/// [b·ρ^{i+1}, b·ρ^i] shrink toward the singular endpoint until the panel
/// contribution is negligible relative to the accumulated value.
pub fn graded_toward_zero<F: Fn(f64) -> f64>(f: &F, b: f64, rel_tol: f64) -> f64 {
    debug_assert!(b > 0.0);
    let rho = 0.5;
    let mut hi = b;
    let mut acc = 0.0;
    for _ in 0..220 {
        let lo = hi * rho;
        let panel = gl16(f, lo, hi);
        acc += panel;
        hi = lo;
        if panel.abs() < rel_tol * acc.abs() && acc != 0.0 {
            break;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        // GL16 integrates degree-31 polynomials exactly.
        let f = |x: f64| 5.0 * x.powi(9) - 2.0 * x.powi(4) + 1.0;
        assert_relative_eq!(
            gl16(&f, -1.0, 3.0),
            {
                let prim = |x: f64| 0.5 * x.powi(10) - 0.4 * x.powi(5) + x;
                prim(3.0) - prim(-1.0)
            },
            max_relative = 1e-13
        );
    }

    #[test]
    fn adaptive_handles_oscillation() {
        let f = |x: f64| (20.0 * x).sin();
        let exact = (1.0 - (20.0f64).cos()) / 20.0;
        assert_relative_eq!(adaptive(&f, 0.0, 1.0, 1e-12), exact, epsilon = 1e-12);
    }

    #[test]
    fn graded_integrates_power_singularity() {
        // ∫_0^1 t^{-1/2} dt = 2, singular at the origin.
        let f = |t: f64| t.powf(-0.5);
        assert_relative_eq!(graded_toward_zero(&f, 1.0, 1e-14), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn graded_respects_upper_limit() {
        let f = |t: f64| t.powf(-0.25);
        let exact = 4.0 / 3.0 * 2.0f64.powf(0.75);
        assert_relative_eq!(graded_toward_zero(&f, 2.0, 1e-14), exact, epsilon = 1e-9);
    }
}
