//! Limiting integer moments M_k(q) of the normalised IPR from the exact
//! moment recursion
//!
//!   M_l = Σ_{j=1}^{l−1} C(l,j) M_j M_{l−j} I(j, l−j) / (T(lq) − l T(q)),
//!
//! with I(j,m) = ½∫₀^{π/4} sin^{2qj−2}θ cos^{2qm−2}θ dθ. No coupling b enters.

use crate::analytics::t_of_q;
use crate::error::{LabError, Result};
use crate::quadrature::{integrate_origin_singular, Tolerance};
use crate::scalar::Scalar;
use crate::special::ln_binomial;

fn check_q<F: Scalar>(q: F) -> Result<()> {
    if !(q > F::half()) {
        return Err(LabError::Domain(format!(
            "q must exceed 1/2 (got {})",
            q.to_f64_lossy()
        )));
    }
    Ok(())
}

/// I(j, m) = ½∫₀^{π/4} sin^{2qj−2}θ cos^{2qm−2}θ dθ.
pub fn pair_integral<F: Scalar>(q: F, j: usize, m: usize) -> Result<F> {
    check_q(q)?;
    if j == 0 || m == 0 {
        return Err(LabError::Domain("pair integral needs j, m >= 1".into()));
    }
    let a = F::two() * q * F::from_count(j) - F::two();
    let c = F::two() * q * F::from_count(m) - F::two();
    let tol = Tolerance::new(1e-300, 1e-12).with_max_intervals(4000);
    let r = integrate_origin_singular(
        |t: F| {
            let (s, co) = t.sin_cos();
            s.powf(a) * co.powf(c)
        },
        F::FRAC_PI_4(),
        a.min(F::zero()),
        &[],
        tol,
    );
    if !r.converged {
        return Err(LabError::Contract(format!("pair integral I({j},{m}) did not converge")));
    }
    Ok(F::half() * r.value)
}

#[derive(Debug, Clone)]
pub struct MomentTable<F> {
    pub q: F,
    pub kmax: usize,
    /// `m[k-1]` is M_k for k = 1..=valid_upto.
    pub m: Vec<F>,
    /// `denominators[k-1]` is T(kq) − kT(q); the k = 1 entry is zero.
    pub denominators: Vec<F>,
    pub valid_upto: usize,
}

impl<F: Scalar> MomentTable<F> {
    pub fn get(&self, k: usize) -> Option<F> {
        if k == 0 {
            None
        } else {
            self.m.get(k - 1).copied()
        }
    }

    pub fn truncated(&self) -> bool {
        self.valid_upto < self.kmax
    }
}

/// Fills M_1..M_kmax, stopping at the first non-positive denominator
/// (q at or beyond the threshold q_k).
pub fn moment_table<F: Scalar>(q: F, kmax: usize) -> Result<MomentTable<F>> {
    check_q(q)?;
    if kmax == 0 {
        return Err(LabError::Domain("kmax must be at least 1".into()));
    }
    let tq = t_of_q(q)?;
    let mut m = vec![F::one()];
    let mut denominators = vec![F::zero()];
    for l in 2..=kmax {
        let lf = F::from_count(l);
        let den = t_of_q(lf * q)? - lf * tq;
        if !(den > F::zero()) {
            break;
        }
        let mut sum = F::zero();
        for j in 1..l {
            let binom = ln_binomial::<F>(l, j).exp();
            sum = sum + binom * m[j - 1] * m[l - j - 1] * pair_integral(q, j, l - j)?;
        }
        m.push(sum / den);
        denominators.push(den);
    }
    Ok(MomentTable {
        q,
        kmax,
        valid_upto: m.len(),
        m,
        denominators,
    })
}

/// Constant C(q) of the factorial bound M_k <= C(q)^k k!.
#[derive(Debug, Clone)]
pub struct FactorialBound<F> {
    pub c: F,
    /// Least k at which the contraction factor drops below one.
    pub k0: usize,
    /// Whether M_k <= C^k k! holds for every tabulated k.
    pub holds: bool,
}

/// Contraction factor (k / (T(qk) − kT(q)))·½∫₀^{π/4} cos^{2qk−4}θ tan^{2q−2}θ dθ.
pub fn contraction_factor<F: Scalar>(q: F, k: usize) -> Result<F> {
    check_q(q)?;
    let kf = F::from_count(k);
    let den = t_of_q(q * kf)? - kf * t_of_q(q)?;
    let ce = F::two() * q * kf - F::lit(4.0);
    let te = F::two() * q - F::two();
    let tol = Tolerance::new(1e-300, 1e-11).with_max_intervals(4000);
    let r = integrate_origin_singular(
        |t: F| {
            let (s, c) = t.sin_cos();
            c.powf(ce) * (s / c).powf(te)
        },
        F::FRAC_PI_4(),
        te.min(F::zero()),
        &[],
        tol,
    );
    Ok(kf / den * F::half() * r.value)
}

pub fn factorial_bound_constant<F: Scalar>(q: F, table: &MomentTable<F>) -> Result<FactorialBound<F>> {
    if !(q > F::half() && q < F::one()) {
        return Err(LabError::Domain(format!(
            "factorial bound needs 1/2 < q < 1 (got {})",
            q.to_f64_lossy()
        )));
    }
    let mut k0 = None;
    for k in 2..=10_000 {
        if contraction_factor(q, k)? < F::one() {
            k0 = Some(k);
            break;
        }
    }
    let k0 = k0.ok_or_else(|| LabError::Contract("no k0 found below 10^4".into()))?;
    let extended;
    let tab = if table.valid_upto + 1 < k0 {
        extended = moment_table(q, k0 - 1)?;
        &extended
    } else {
        table
    };
    let mut c = F::zero();
    let mut ln_fact = F::zero();
    for j in 1..k0 {
        ln_fact = ln_fact + F::from_count(j).ln();
        let mj = tab.m[j - 1];
        c = c.max(((mj.ln() - ln_fact) / F::from_count(j)).exp());
    }
    let mut holds = true;
    let mut ln_fact = F::zero();
    for (i, &mk) in table.m.iter().enumerate() {
        let k = F::from_count(i + 1);
        ln_fact = ln_fact + k.ln();
        let bound = k * c.ln() + ln_fact;
        holds &= mk.ln() <= bound + F::lit(1e-12) * bound.abs().max(F::one());
    }
    Ok(FactorialBound { c, k0, holds })
}
