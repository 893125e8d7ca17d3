//! Adaptive Simpson quadrature for log-domain integrands.

use crate::math::{exp, log};

const MAX_DEPTH: u32 = 40;

/// A point and the integrand value there.
type Node = (f64, f64);

fn simpson<F: Fn(f64) -> f64>(
    f: &F,
    (a, fa): Node,
    (m, fm): Node,
    (b, fb): Node,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, (a, fa), (lm, flm), (m, fm), left, 0.5 * tol, depth - 1)
        + simpson(f, (m, fm), (rm, frm), (b, fb), right, 0.5 * tol, depth - 1)
}

fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fb, fm) = (f(a), f(b), f(m));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, (a, fa), (m, fm), (b, fb), whole, tol, MAX_DEPTH)
}

/// `ln ∫_a^b e^{φ(z)} dz`.
///
/// The interval is cut into panels of width `panel`; `φ` is shifted by its
/// largest value on a fine grid so the integrand peaks near 1, and each
/// panel is integrated adaptively to absolute tolerance `tol`.
pub(crate) fn log_integral<F: Fn(f64) -> f64>(phi: F, a: f64, b: f64, panel: f64, tol: f64) -> f64 {
    let panels = (libm::ceil((b - a) / panel) as usize).max(1);
    let width = (b - a) / panels as f64;
    let grid = panels * 8;
    let shift = (0..=grid)
        .map(|i| phi(a + (b - a) * i as f64 / grid as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    let integrand = |z: f64| exp(phi(z) - shift);
    let total: f64 = (0..panels)
        .map(|i| {
            let lo = a + width * i as f64;
            let hi = if i + 1 == panels { b } else { lo + width };
            integrate(&integrand, lo, hi, tol)
        })
        .sum();
    shift + log(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_normaliser() {
        // ∫ e^{-z²/2} dz = √(2π)
        let v = log_integral(|z| -0.5 * z * z, -40.0, 40.0, 0.5, 1e-13);
        assert!((v - 0.5 * log(2.0 * core::f64::consts::PI)).abs() < 1e-11);
    }

    #[test]
    fn huge_exponents_stay_finite() {
        // ∫ e^{1000 - z²/2} dz
        let v = log_integral(|z| 1000.0 - 0.5 * z * z, -40.0, 40.0, 0.5, 1e-13);
        assert!((v - 1000.0 - 0.5 * log(2.0 * core::f64::consts::PI)).abs() < 1e-10);
    }
}
