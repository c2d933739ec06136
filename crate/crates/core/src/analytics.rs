//! Closed-form exponents of the recursion: T(q), T'(q), H(q) = qT'(q) - T(q),
//! the critical point q_c, the moment boundary p*(q), the thresholds q_k and
//! the multifractal dimension d(q).
//!
//! The prefactor of T is √π/2; with it the defining angular integral gives
//! T(2) = π/4.

use std::collections::BTreeMap;

use crate::error::{LabError, Result};
use crate::quadrature::{integrate_origin_singular, Tolerance};
use crate::roots::bracketed_root;
use crate::scalar::Scalar;
use crate::special::{digamma, ln_gamma_pos};

fn check_q<F: Scalar>(q: F, what: &str) -> Result<()> {
    if q.is_nan() || q <= F::half() {
        return Err(LabError::Domain(format!(
            "{what}: q must exceed 1/2 (got {})",
            q.to_f64_lossy()
        )));
    }
    Ok(())
}

/// Γ(q - 1/2) / Γ(q) for q > 1/2.
fn gamma_ratio<F: Scalar>(q: F) -> F {
    (ln_gamma_pos(q - F::half()) - ln_gamma_pos(q)).exp()
}

/// T(q) = (√π/2) Γ(q - 1/2) / Γ(q - 1), written as (√π/2)(q - 1) Γ(q - 1/2)/Γ(q)
/// so that q = 1 gives exactly zero.
pub fn t_of_q<F: Scalar>(q: F) -> Result<F> {
    check_q(q, "T(q)")?;
    Ok(F::PI().sqrt() * F::half() * (q - F::one()) * gamma_ratio(q))
}

/// 1 - sin^{2q}θ - cos^{2q}θ evaluated from u = sin²θ without cancellation.
#[inline]
pub(crate) fn one_minus_pair_power<F: Scalar>(u: F, q: F) -> F {
    let c_part = -(q * (-u).ln_1p()).exp_m1();
    let s_part = if u > F::zero() { (q * u.ln()).exp() } else { F::zero() };
    c_part - s_part
}

/// T(q) from its defining angular integral
/// (1/4)∫_0^{π/2} (1 - sin^{2q}θ - cos^{2q}θ)/(sin²θ cos²θ) dθ.
///
/// Independent of the Γ-function route; used as a cross-check.
pub fn t_of_q_quadrature<F: Scalar>(q: F) -> Result<F> {
    check_q(q, "T(q) quadrature")?;
    let integrand = |theta: F| {
        let s = theta.sin();
        let u = s * s;
        if u == F::zero() {
            return if q >= F::one() { q } else { F::zero() };
        }
        one_minus_pair_power(u, q) / (u * (F::one() - u))
    };
    // symmetric under θ -> π/2 - θ: (1/4)∫_0^{π/2} = (1/2)∫_0^{π/4}
    let exponent = (F::two() * q - F::two()).min(F::zero());
    let r = integrate_origin_singular(
        integrand,
        F::FRAC_PI_4(),
        exponent,
        &[F::lit(1e-3)],
        Tolerance::new(1e-14, 1e-13).with_max_intervals(4000),
    );
    if !r.converged {
        return Err(LabError::Contract(format!(
            "T(q) quadrature did not converge at q = {}",
            q.to_f64_lossy()
        )));
    }
    Ok(F::half() * r.value)
}

/// T'(q) = T(q)(ψ(q - 1/2) - ψ(q - 1)), evaluated in the form that is regular at q = 1.
pub fn t_prime<F: Scalar>(q: F) -> Result<F> {
    check_q(q, "T'(q)")?;
    let dpsi = digamma(q - F::half())? - digamma(q)?;
    Ok(F::PI().sqrt() * F::half() * gamma_ratio(q) * (F::one() + (q - F::one()) * dpsi))
}

/// H(q) = q T'(q) - T(q); positive below q_c and negative above.
pub fn h_of_q<F: Scalar>(q: F) -> Result<F> {
    Ok(q * t_prime(q)? - t_of_q(q)?)
}

/// The unique root of H on (1/2, ∞), approximately 2.4056.
pub fn find_qc<F: Scalar>() -> Result<F> {
    bracketed_root(
        |q| h_of_q(q).unwrap_or_else(|_| F::nan()),
        F::lit(1.1),
        F::lit(8.0),
        F::lit(1e-12),
    )
}

/// Supremum p*(q) of the bounded moment orders of the normalised IPR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentBound<F> {
    /// Every moment order stays bounded (q <= 1).
    Unbounded,
    Finite(F),
}

impl<F: Scalar> MomentBound<F> {
    pub fn finite(self) -> Option<F> {
        match self {
            MomentBound::Unbounded => None,
            MomentBound::Finite(p) => Some(p),
        }
    }
}

/// g(p) = T(pq) - pT(q).
pub fn moment_gap<F: Scalar>(q: F, p: F) -> Result<F> {
    Ok(t_of_q(p * q)? - p * t_of_q(q)?)
}

/// p*(q): for q in (1, q_c) the root p > 1 of T(pq) = pT(q); unbounded for q <= 1.
pub fn p_star<F: Scalar>(q: F) -> Result<MomentBound<F>> {
    let qc: F = find_qc()?;
    if q.is_nan() || q <= F::half() || q >= qc {
        return Err(LabError::Domain(format!(
            "p*(q) defined on (1/2, q_c); got q = {}",
            q.to_f64_lossy()
        )));
    }
    if q <= F::one() {
        return Ok(MomentBound::Unbounded);
    }
    let h1 = h_of_q(q)?;
    // g(p)/(p - 1) is continuous at p = 1 with value H(q) > 0
    let reduced = |p: F| {
        if p == F::one() {
            h1
        } else {
            moment_gap(q, p).unwrap_or_else(|_| F::nan()) / (p - F::one())
        }
    };
    let mut hi = F::two();
    let mut tries = 0;
    while reduced(hi) > F::zero() {
        hi = hi * F::two();
        tries += 1;
        if tries > 60 {
            return Err(LabError::Bracket(format!(
                "p*(q): no sign change up to p = {}",
                hi.to_f64_lossy()
            )));
        }
    }
    bracketed_root(reduced, F::one(), hi, F::lit(1e-14)).map(MomentBound::Finite)
}

/// q_k: the unique root in (1, q_c) of T(kq) - kT(q).
pub fn find_qk<F: Scalar>(k: usize) -> Result<F> {
    if k < 2 {
        return Err(LabError::Domain(format!("q_k requires k >= 2 (got {k})")));
    }
    let qc: F = find_qc()?;
    let kf = F::from_count(k);
    bracketed_root(
        |q| moment_gap(q, kf).unwrap_or_else(|_| F::nan()),
        F::one(),
        qc,
        F::lit(1e-13),
    )
}

/// d(q) = b T(q)/(q - 1) = b (√π/2) Γ(q - 1/2)/Γ(q), continuous at q = 1.
pub fn d_of_q<F: Scalar>(q: F, b: F) -> Result<F> {
    check_q(q, "d(q)")?;
    Ok(b * F::PI().sqrt() * F::half() * gamma_ratio(q))
}

/// Exponents at one (q, b).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentReport<F> {
    pub q: F,
    pub b: F,
    pub t: F,
    pub t_prime: F,
    /// q T'(q) - T(q).
    pub h: F,
    pub d: F,
}

impl<F: Scalar> ExponentReport<F> {
    pub fn new(q: F, b: F) -> Result<Self> {
        let t = t_of_q(q)?;
        let tp = t_prime(q)?;
        Ok(ExponentReport {
            q,
            b,
            t,
            t_prime: tp,
            h: q * tp - t,
            d: d_of_q(q, b)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPoints<F> {
    pub q_c: F,
    /// q_k for k = 2..=kmax; strictly decreasing in k.
    pub q_k: BTreeMap<usize, F>,
}

impl<F: Scalar> CriticalPoints<F> {
    pub fn compute(kmax: usize) -> Result<Self> {
        let q_c = find_qc()?;
        let mut q_k = BTreeMap::new();
        for k in 2..=kmax {
            q_k.insert(k, find_qk(k)?);
        }
        Ok(CriticalPoints { q_c, q_k })
    }
}
