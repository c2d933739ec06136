//! Bracketed scalar root finding and golden-section maximisation.

use crate::error::{LabError, Result};
use crate::scalar::Scalar;

/// Root of `f` on `[lo, hi]`, where `f(lo)` and `f(hi)` have opposite signs.
///
/// Secant steps are taken while they stay inside the bracket and shrink it
/// by at least half; bisection otherwise. Stops when `|f| <= ftol` or the
/// bracket collapses to machine precision.
pub fn bracketed_root<F: Scalar, G: FnMut(F) -> F>(mut f: G, lo: F, hi: F, ftol: F) -> Result<F> {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == F::zero() {
        return Ok(a);
    }
    if fb == F::zero() {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(LabError::Bracket(format!(
            "no sign change on [{}, {}]: f = ({}, {})",
            a.to_f64_lossy(),
            b.to_f64_lossy(),
            fa.to_f64_lossy(),
            fb.to_f64_lossy()
        )));
    }
    let mut use_secant = true;
    for _ in 0..500 {
        let width = (b - a).abs();
        let mut x = if use_secant {
            b - fb * (b - a) / (fb - fa)
        } else {
            F::half() * (a + b)
        };
        let (lo_b, hi_b) = if a < b { (a, b) } else { (b, a) };
        if !(x > lo_b && x < hi_b) {
            x = F::half() * (a + b);
        }
        let fx = f(x);
        if fx.abs() <= ftol || fx == F::zero() {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        // alternate to bisection when the secant stalls on one side
        use_secant = (b - a).abs() <= F::half() * width;
        if (b - a).abs() <= F::lit(4.0) * F::epsilon() * (a.abs() + b.abs()) {
            return Ok(if fa.abs() < fb.abs() { a } else { b });
        }
    }
    Err(LabError::Bracket("iteration budget exhausted".into()))
}

/// Golden-section search for the maximiser of a unimodal `f` on `[a, b]`.
pub fn golden_max<F: Scalar, G: FnMut(F) -> F>(mut f: G, a: F, b: F, xtol: F) -> (F, F) {
    let inv_phi = F::lit(0.618_033_988_749_894_8);
    let (mut a, mut b) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = F::half() * (a + b);
    (x, f(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bracketed_root(|x: f64| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rejects_missing_bracket() {
        assert!(matches!(
            bracketed_root(|x: f64| x * x + 1.0, -1.0, 1.0, 1e-12),
            Err(LabError::Bracket(_))
        ));
    }

    #[test]
    fn golden_section_on_parabola() {
        let (x, fx) = golden_max(|x: f64| -(x - 0.3) * (x - 0.3) + 1.0, 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        assert!((fx - 1.0).abs() < 1e-14);
    }
}
