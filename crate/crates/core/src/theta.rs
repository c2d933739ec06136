//! Law of the resonance angle θ at scale ε = b/n.
//!
//! θ = ½·arctan(s·C) with C standard Cauchy and s = πε/2. The density on
//! [-π/4, π/4] is r(θ) = 2s / (π (s² cos²2θ + sin²2θ)), which behaves like
//! ε / sin²2θ away from the origin, i.e. the weight constant of the
//! small-ε expansion equals one.

use rand::Rng;

use crate::error::{LabError, Result};
use crate::quadrature::{integrate, integrate_origin_singular, QuadResult, Tolerance};
use crate::rng::std_normal;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaLaw<F> {
    epsilon: F,
    s: F,
}

/// sin²θ and cos²θ of one draw, computed without trigonometric round trips.
#[derive(Debug, Clone, Copy)]
pub struct AnglePair<F> {
    pub sin2: F,
    pub cos2: F,
}

impl<F: Scalar> ThetaLaw<F> {
    pub fn new(epsilon: F) -> Result<Self> {
        if !(epsilon > F::zero()) || !epsilon.is_finite() {
            return Err(LabError::Domain(format!(
                "theta law needs epsilon > 0 (got {})",
                epsilon.to_f64_lossy()
            )));
        }
        Ok(ThetaLaw {
            epsilon,
            s: F::PI() * epsilon * F::half(),
        })
    }

    /// Law at scale n with coupling b, i.e. ε = b/n.
    pub fn at_scale(b: F, n: usize) -> Result<Self> {
        Self::new(b / F::from_count(n))
    }

    pub fn epsilon(&self) -> F {
        self.epsilon
    }

    pub fn scale(&self) -> F {
        self.s
    }

    /// Maps a Cauchy variate to the angle; odd in `c`.
    #[inline]
    pub fn theta_from_cauchy(&self, c: F) -> F {
        F::half() * (self.s * c).atan()
    }

    #[inline]
    pub fn pair_from_cauchy(&self, c: F) -> AnglePair<F> {
        let x = self.s * c;
        let r = (F::one() + x * x).sqrt();
        let inv = (F::two() * r).recip();
        AnglePair {
            sin2: x * x * inv / (r + F::one()),
            cos2: (r + F::one()) * inv,
        }
    }

    /// Standard Cauchy as a ratio of normals; cheaper than a `tan` on the hot loop.
    #[inline]
    fn cauchy<R: Rng + ?Sized>(rng: &mut R) -> F {
        let num = std_normal(rng);
        loop {
            let den = std_normal(rng);
            if den != 0.0 {
                return F::lit(num / den);
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> F {
        self.theta_from_cauchy(Self::cauchy(rng))
    }

    #[inline]
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> AnglePair<F> {
        self.pair_from_cauchy(Self::cauchy(rng))
    }

    fn check_angle(theta: F) -> Result<()> {
        if theta.is_nan() || theta.abs() > F::FRAC_PI_4() {
            return Err(LabError::Domain(format!(
                "angle {} outside [-π/4, π/4]",
                theta.to_f64_lossy()
            )));
        }
        Ok(())
    }

    #[inline]
    fn density_unchecked(&self, theta: F) -> F {
        let c = (F::two() * theta).cos();
        let s = (F::two() * theta).sin();
        F::two() * self.s / (F::PI() * (self.s * self.s * c * c + s * s))
    }

    pub fn density(&self, theta: F) -> Result<F> {
        Self::check_angle(theta)?;
        Ok(self.density_unchecked(theta))
    }

    /// Closed-form distribution function P(Θ <= θ).
    pub fn cdf(&self, theta: F) -> Result<F> {
        Self::check_angle(theta)?;
        let t = (F::two() * theta).tan();
        Ok(F::half() + (t / self.s).atan() / F::PI())
    }

    /// χ_ε(θ) = r(θ) sin²(2θ) / ε.
    pub fn chi(&self, theta: F) -> Result<F> {
        let r = self.density(theta)?;
        let s = (F::two() * theta).sin();
        Ok(r * s * s / self.epsilon)
    }

    /// Panel boundaries resolving the peak of width ~ε at the origin.
    pub fn breakpoints(&self) -> Vec<F> {
        let q = F::FRAC_PI_4();
        let mut inner: Vec<F> = [self.epsilon, F::lit(10.0) * self.epsilon]
            .into_iter()
            .filter(|&x| x < q)
            .collect();
        inner.dedup();
        let mut pts = vec![-q];
        pts.extend(inner.iter().rev().map(|&x| -x));
        pts.push(F::zero());
        pts.extend(inner.iter().copied());
        pts.push(q);
        pts
    }

    /// E f(θ) by adaptive quadrature with absolute tolerance 1e-10.
    pub fn expect<G: FnMut(F) -> F>(&self, f: G) -> QuadResult<F> {
        self.expect_with(f, Tolerance::new(1e-10, 0.0))
    }

    pub fn expect_with<G: FnMut(F) -> F>(&self, mut f: G, tol: Tolerance<F>) -> QuadResult<F> {
        let pts = self.breakpoints();
        integrate(|t| f(t) * self.density_unchecked(t), &pts, tol)
    }

    /// E f(θ) for even `f`, integrating over [0, π/4] only.
    pub fn expect_even_with<G: FnMut(F) -> F>(&self, mut f: G, tol: Tolerance<F>) -> QuadResult<F> {
        let pts: Vec<F> = self.breakpoints().into_iter().filter(|&x| x >= F::zero()).collect();
        let half_tol = Tolerance {
            abs: tol.abs * F::half(),
            ..tol
        };
        let mut r = integrate(|t| f(t) * self.density_unchecked(t), &pts, half_tol);
        r.value = r.value * F::two();
        r.abs_error = r.abs_error * F::two();
        r
    }
}

/// ∫_{-π/4}^{π/4} f(θ)/sin²(2θ) dθ for f(θ) = O(|θ|^α), α > 1: the limit of
/// E f(θ)/ε as ε -> 0.
pub fn lemma_sing_limit<F: Scalar, G: FnMut(F) -> F>(mut f: G, alpha: F) -> Result<QuadResult<F>> {
    if !(alpha > F::one()) {
        return Err(LabError::Domain(format!(
            "decay order must exceed 1 (got {})",
            alpha.to_f64_lossy()
        )));
    }
    let exponent = (alpha - F::two()).min(F::zero());
    let tol = Tolerance::new(1e-13, 1e-12).with_max_intervals(4000);
    let q = F::FRAC_PI_4();
    let mut g = |t: F| {
        let s = (F::two() * t).sin();
        f(t) / (s * s)
    };
    let right = integrate_origin_singular(&mut g, q, exponent, &[], tol);
    let left = integrate_origin_singular(|t: F| g(-t), q, exponent, &[], tol);
    Ok(QuadResult {
        value: right.value + left.value,
        abs_error: right.abs_error + left.abs_error,
        converged: right.converged && left.converged,
        evaluations: right.evaluations + left.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use std::f64::consts::{FRAC_PI_4, PI};

    #[test]
    fn density_closed_form_points() {
        let law = ThetaLaw::new(0.01_f64).unwrap();
        let s = law.scale();
        assert!((law.density(0.0).unwrap() - 2.0 / (PI * s)).abs() < 1e-9);
        assert!((law.density(FRAC_PI_4).unwrap() - 2.0 * s / PI).abs() < 1e-12);
        assert!(law.density(0.8).is_err());
        assert!(ThetaLaw::new(0.0_f64).is_err());
    }

    #[test]
    fn density_normalised_and_symmetric() {
        for eps in [1e-1_f64, 1e-2, 1e-3, 1e-5] {
            let law = ThetaLaw::new(eps).unwrap();
            let r = law.expect(|_| 1.0);
            assert!(r.converged);
            assert!((r.value - 1.0).abs() < 1e-8, "eps {eps}: {}", r.value);
            for t in [0.001, 0.1, 0.7] {
                assert_eq!(law.density(t).unwrap(), law.density(-t).unwrap());
            }
        }
    }

    #[test]
    fn odd_functions_integrate_to_zero() {
        let law = ThetaLaw::new(0.05_f64).unwrap();
        let r = law.expect(|t| t.sin() * t.cos().powi(3));
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn antithetic_cauchy_gives_mirrored_angle() {
        let law = ThetaLaw::new(0.3_f64).unwrap();
        for c in [0.1, 2.5, 1e6] {
            assert_eq!(law.theta_from_cauchy(c), -law.theta_from_cauchy(-c));
        }
    }

    #[test]
    fn pair_matches_trigonometry() {
        let law = ThetaLaw::new(0.2_f64).unwrap();
        for c in [-30.0, -1.0, 1e-4, 0.7, 5.0] {
            let t = law.theta_from_cauchy(c);
            let p = law.pair_from_cauchy(c);
            assert!((p.sin2 - t.sin().powi(2)).abs() < 1e-15);
            assert!((p.cos2 - t.cos().powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn cdf_matches_quadrature() {
        let law = ThetaLaw::new(0.01_f64).unwrap();
        for t in [-0.5, -0.01, 0.0, 0.003, 0.3] {
            let mut pts: Vec<f64> = law.breakpoints().into_iter().filter(|&x| x < t).collect();
            pts.push(t);
            let q = integrate(|x| law.density(x).unwrap(), &pts, Tolerance::new(1e-13, 0.0));
            assert!((q.value - law.cdf(t).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn sin2_expectation_scaling() {
        // E sin²θ / ε -> ∫ sin²θ / sin²2θ = 1/2
        let law = ThetaLaw::new(1e-3_f64).unwrap();
        let r = law.expect(|t| t.sin().powi(2));
        let ratio = r.value / (0.5 * 1e-3);
        assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn chi_bounds_hold_with_c4() {
        for eps in [1e-1_f64, 1e-2, 1e-3] {
            let law = ThetaLaw::new(eps).unwrap();
            for i in 1..=2000 {
                let t = FRAC_PI_4 * i as f64 / 2000.0;
                let chi = law.chi(t).unwrap();
                assert!(chi <= 4.0 * (t / eps).powi(2) + 1e-12);
                if t >= eps {
                    assert!((chi - 1.0).abs() <= 4.0 * eps / t);
                }
            }
        }
    }

    #[test]
    fn lemma_limit_values() {
        let r = lemma_sing_limit(|t: f64| t.sin().powi(2), 2.0).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
        let r = lemma_sing_limit(
            |t: f64| {
                let u = t.sin().powi(2);
                crate::analytics::one_minus_pair_power(u, 2.0)
            },
            2.0,
        )
        .unwrap();
        assert!((r.value - PI / 4.0).abs() < 1e-11);
        let r = lemma_sing_limit(|t: f64| t.sin().powi(4) * t.cos().powi(4) * t, 4.0).unwrap();
        assert!(r.value.abs() < 1e-14);
        assert!(lemma_sing_limit(|t: f64| t, 1.0).is_err());
    }

    #[test]
    fn sampler_mean_sin2() {
        let law = ThetaLaw::new(0.01_f64).unwrap();
        let mut rng = derive_stream(5, &[1]);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| law.sample_pair(&mut rng).sin2).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        let exact = law.expect(|t| t.sin().powi(2)).value;
        assert!((m - exact).abs() < 4.0 * sd / (n as f64).sqrt());
    }
}
