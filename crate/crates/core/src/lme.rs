//! Population-dynamics evolution of the LME recursion
//!
//!   Π_{n+1} = (sin^{2q}θ_n Π⁽¹⁾ + cos^{2q}θ_n Π⁽²⁾) / T_n(q),   θ_n ~ ThetaLaw(b/n),
//!
//! with T_n(q) = E[sin^{2q}θ_n + cos^{2q}θ_n] computed by quadrature, so that
//! E Π_n = 1 at every scale and log E P_n = Σ_{k<n} ln T_k.
//!
//! The pool is split into [`BLOCKS`] independent sub-populations. Each output
//! slot keeps its own value as the cos-branch parent and draws the sin-branch
//! parent uniformly from its block. Blocks never mix, so block-to-block
//! scatter gives honest standard errors for every pooled statistic.

use rayon::prelude::*;

use crate::analytics::{find_qc, one_minus_pair_power, t_of_q};
use crate::error::{LabError, Result};
use crate::quadrature::Tolerance;
use crate::rng::{derive_stream, index};
use crate::roots::golden_max;
use crate::scalar::Scalar;
use crate::special::ln_binomial;
use crate::stats::{jackknife, line_fit};
use crate::theta::ThetaLaw;

pub const BLOCKS: usize = 32;
const STREAM_TAG: u64 = 0x4c4d45;

#[derive(Debug, Clone, PartialEq)]
pub struct LmeParams {
    pub q: f64,
    pub b: f64,
    pub n_max: usize,
    pub pool_size: usize,
    pub seed: u64,
    pub track_powers: Vec<f64>,
    /// Explicit checkpoint scales; `None` means 1, 2, 4, ... plus n_max.
    pub checkpoints: Option<Vec<usize>>,
}

impl LmeParams {
    pub fn new(q: f64, b: f64) -> Self {
        LmeParams {
            q,
            b,
            n_max: 10_000,
            pool_size: 100_000,
            seed: 1,
            track_powers: vec![2.0, 3.0],
            checkpoints: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.5) {
            return Err(LabError::Config("q must exceed 1/2".into()));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(LabError::Config("b must be positive".into()));
        }
        if self.n_max < 1 {
            return Err(LabError::Config("n_max must be at least 1".into()));
        }
        if self.pool_size < 1000 {
            return Err(LabError::Config("pool_size must be at least 1000".into()));
        }
        if self.track_powers.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(LabError::Config("track_powers must be positive".into()));
        }
        Ok(())
    }

    pub fn checkpoint_list(&self) -> Vec<usize> {
        let mut cps: Vec<usize> = match &self.checkpoints {
            Some(c) => c.iter().copied().filter(|&n| n >= 1 && n <= self.n_max).collect(),
            None => std::iter::successors(Some(1usize), |n| n.checked_mul(2))
                .take_while(|&n| n < self.n_max)
                .collect(),
        };
        cps.push(self.n_max);
        cps.sort_unstable();
        cps.dedup();
        cps
    }
}

/// T_n(q) at one ε, together with 1 − T_n computed without cancellation.
#[derive(Debug, Clone, Copy)]
pub struct ExactTn<F> {
    pub tn: F,
    pub one_minus: F,
    pub abs_error: F,
    pub converged: bool,
}

/// T_n(q) = E[sin^{2q}θ + cos^{2q}θ] under the θ law at scale ε.
pub fn exact_tn<F: Scalar>(q: F, epsilon: F) -> Result<ExactTn<F>> {
    if !(q > F::half()) {
        return Err(LabError::Domain("q must exceed 1/2".into()));
    }
    let law = ThetaLaw::new(epsilon)?;
    if q == F::one() {
        return Ok(ExactTn {
            tn: F::one(),
            one_minus: F::zero(),
            abs_error: F::zero(),
            converged: true,
        });
    }
    let rel = 1e-12_f64.max(64.0 * F::epsilon().to_f64_lossy());
    let tol = Tolerance::new(1e-300, rel).with_max_intervals(4000);
    let r = law.expect_even_with(
        |t| {
            let s = t.sin();
            one_minus_pair_power(s * s, q)
        },
        tol,
    );
    Ok(ExactTn {
        tn: F::one() - r.value,
        one_minus: r.value,
        abs_error: r.abs_error,
        converged: r.converged,
    })
}

/// Cache of T_n for n = 1..=n_max at fixed (q, b).
#[derive(Debug, Clone)]
pub struct TnTable<F> {
    q: F,
    b: F,
    tn: Vec<F>,
    ln_tn: Vec<F>,
}

impl<F: Scalar> TnTable<F> {
    pub fn build(q: F, b: F, n_max: usize) -> Result<Self> {
        let entries: Result<Vec<ExactTn<F>>> = (1..=n_max)
            .into_par_iter()
            .map(|n| exact_tn(q, b / F::from_count(n)))
            .collect();
        let entries = entries?;
        if let Some(n) = entries.iter().position(|e| !e.converged) {
            return Err(LabError::Contract(format!("T_n quadrature failed at n = {}", n + 1)));
        }
        Ok(TnTable {
            q,
            b,
            tn: entries.iter().map(|e| e.tn).collect(),
            ln_tn: entries.iter().map(|e| (-e.one_minus).ln_1p()).collect(),
        })
    }

    pub fn q(&self) -> F {
        self.q
    }

    pub fn b(&self) -> F {
        self.b
    }

    pub fn n_max(&self) -> usize {
        self.tn.len()
    }

    pub fn tn(&self, n: usize) -> F {
        self.tn[n - 1]
    }

    pub fn ln_tn(&self, n: usize) -> F {
        self.ln_tn[n - 1]
    }

    /// Σ_{k=1}^{n-1} ln T_k.
    pub fn log_z(&self, n: usize) -> F {
        self.ln_tn[..n - 1].iter().fold(F::zero(), |s, &x| s + x)
    }
}

/// Empirical law of Π_n(q) held as independent blocks.
#[derive(Debug, Clone)]
pub struct SamplePool<F> {
    n: usize,
    log_z: F,
    blocks: Vec<Vec<F>>,
}

impl<F: Scalar> SamplePool<F> {
    /// All values one at n = 1.
    pub fn ones(pool_size: usize) -> Self {
        let base = pool_size / BLOCKS;
        let extra = pool_size % BLOCKS;
        let blocks = (0..BLOCKS)
            .map(|i| vec![F::one(); base + usize::from(i < extra)])
            .collect();
        SamplePool {
            n: 1,
            log_z: F::zero(),
            blocks,
        }
    }

    pub fn from_blocks(n: usize, log_z: F, blocks: Vec<Vec<F>>) -> Self {
        SamplePool { n, log_z, blocks }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn log_z(&self) -> F {
        self.log_z
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> &[Vec<F>] {
        &self.blocks
    }

    pub fn values(&self) -> impl Iterator<Item = F> + '_ {
        self.blocks.iter().flatten().copied()
    }

    /// Advances every block by `steps` scales. Streams are keyed by
    /// (seed, scale, block), so the result does not depend on thread count.
    pub fn advance(&mut self, table: &TnTable<F>, seed: u64, steps: usize) -> Result<()> {
        let end = self.n + steps;
        if end > table.n_max() + 1 {
            return Err(LabError::Domain(format!(
                "T_n table covers n <= {}, asked to reach {}",
                table.n_max(),
                end
            )));
        }
        let start = self.n;
        let q = table.q();
        let b = table.b();
        let laws: Result<Vec<ThetaLaw<F>>> = (start..end).map(|n| ThetaLaw::at_scale(b, n)).collect();
        let laws = laws?;
        self.blocks.par_iter_mut().enumerate().for_each(|(bi, block)| {
            let mut scratch = block.clone();
            for (k, law) in laws.iter().enumerate() {
                let n = start + k;
                let mut rng = derive_stream(seed, &[STREAM_TAG, n as u64, bi as u64]);
                let inv_t = table.tn(n).recip();
                let len = block.len();
                for (i, out) in scratch.iter_mut().enumerate() {
                    let pair = law.sample_pair(&mut rng);
                    let own = block[i];
                    let other = block[index(&mut rng, len)];
                    *out = if q == F::one() {
                        own + pair.sin2 * (other - own)
                    } else {
                        let ws = pair.sin2.powf(q);
                        let wc = cos_weight(pair.sin2, pair.cos2, q);
                        (wc * own + ws * other) * inv_t
                    };
                }
                std::mem::swap(block, &mut scratch);
            }
        });
        for n in start..end {
            self.log_z = self.log_z + table.ln_tn(n);
        }
        self.n = end;
        Ok(())
    }

    /// Per-block means of Π^p for each requested p (p = 1 first).
    pub fn block_power_means(&self, powers: &[F]) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .map(|blk| {
                let len = blk.len() as f64;
                std::iter::once(F::one())
                    .chain(powers.iter().copied())
                    .map(|p| {
                        let s: f64 = blk.iter().map(|&x| pow_f64(x, p)).sum();
                        s / len
                    })
                    .collect()
            })
            .collect()
    }
}

/// (1 − y)^q with y = sin²θ. Small y takes a Taylor path that is exact to
/// rounding and avoids a `powf` on the hot loop.
#[inline]
fn cos_weight<F: Scalar>(y: F, cos2: F, q: F) -> F {
    if y * q < F::lit(1e-3) {
        let l = -y
            * (F::one()
                + y * (F::half()
                    + y * (F::lit(1.0 / 3.0) + y * (F::lit(0.25) + y * (F::lit(0.2) + y * F::lit(1.0 / 6.0))))));
        let z = q * l;
        F::one()
            + z * (F::one()
                + z * (F::half()
                    + z * (F::lit(1.0 / 6.0)
                        + z * (F::lit(1.0 / 24.0) + z * (F::lit(1.0 / 120.0) + z * F::lit(1.0 / 720.0))))))
    } else {
        cos2.powf(q)
    }
}

fn pow_f64<F: Scalar>(x: F, p: F) -> f64 {
    let (x, p) = (x.to_f64_lossy(), p.to_f64_lossy());
    if p == 1.0 {
        x
    } else if p == 2.0 {
        x * x
    } else if p == 3.0 {
        x * x * x
    } else {
        x.powf(p)
    }
}

/// Pooled statistic with jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub n: usize,
    pub log_z: f64,
    pub mean: Estimate,
    /// One entry per tracked power, in the order given.
    pub moments: Vec<Estimate>,
    /// ln E Π^p, one entry per tracked power.
    pub log_moments: Vec<Estimate>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: LmeParams,
    pub checkpoints: Vec<Checkpoint>,
}

impl Trajectory {
    /// Least-squares slope of ln E Π^p against ln n over checkpoints with
    /// n in [n_lo, n_hi].
    pub fn log_moment_slope(&self, power_index: usize, n_lo: usize, n_hi: usize) -> Option<(f64, f64)> {
        let pts: Vec<&Checkpoint> = self.checkpoints.iter().filter(|c| c.n >= n_lo && c.n <= n_hi).collect();
        if pts.len() < 3 {
            return None;
        }
        let x: Vec<f64> = pts.iter().map(|c| (c.n as f64).ln()).collect();
        let y: Vec<f64> = pts.iter().map(|c| c.log_moments[power_index].value).collect();
        let f = line_fit(&x, &y);
        Some((f.slope, f.slope_se))
    }

    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.last().expect("trajectory has at least one checkpoint")
    }
}

fn summarize<F: Scalar>(pool: &SamplePool<F>, powers: &[f64]) -> Checkpoint {
    let pf: Vec<F> = powers.iter().map(|&p| F::lit(p)).collect();
    let blocks = pool.block_power_means(&pf);
    let (m, se) = jackknife(&blocks, |v| v[0]);
    let moments = (0..powers.len())
        .map(|k| {
            let (value, se) = jackknife(&blocks, |v| v[k + 1]);
            Estimate { value, se }
        })
        .collect();
    let log_moments = (0..powers.len())
        .map(|k| {
            let (value, se) = jackknife(&blocks, |v| v[k + 1].ln());
            Estimate { value, se }
        })
        .collect();
    Checkpoint {
        n: pool.n(),
        log_z: pool.log_z().to_f64_lossy(),
        mean: Estimate { value: m, se },
        moments,
        log_moments,
    }
}

/// Evolves a pool of ones from n = 1 to n_max, recording each checkpoint.
pub fn run<F: Scalar>(params: &LmeParams) -> Result<Trajectory> {
    params.validate()?;
    let table = TnTable::build(F::lit(params.q), F::lit(params.b), params.n_max)?;
    run_with_table(params, &table)
}

pub fn run_with_table<F: Scalar>(params: &LmeParams, table: &TnTable<F>) -> Result<Trajectory> {
    params.validate()?;
    let mut pool = SamplePool::<F>::ones(params.pool_size);
    let mut checkpoints = Vec::new();
    for cp in params.checkpoint_list() {
        pool.advance(table, params.seed, cp - pool.n())?;
        checkpoints.push(summarize(&pool, &params.track_powers));
    }
    Ok(Trajectory {
        params: params.clone(),
        checkpoints,
    })
}

/// The h in (1/(2q), 1) maximising T(qh) − hT(q), with the maximum value.
pub fn h_exponent<F: Scalar>(q: F) -> Result<(F, F)> {
    let qc: F = find_qc()?;
    if !(q > qc) {
        return Err(LabError::Domain(format!(
            "h exponent needs q > q_c (got {})",
            q.to_f64_lossy()
        )));
    }
    let tq = t_of_q(q)?;
    let lo = F::half() / q + F::lit(1e-9);
    let (h, g) = golden_max(
        |h| t_of_q(q * h).map(|t| t - h * tq).unwrap_or(F::neg_infinity()),
        lo,
        F::one(),
        F::lit(1e-10),
    );
    if !(g > F::zero()) {
        return Err(LabError::Contract("h exponent: maximum is not positive".into()));
    }
    Ok((h, g))
}

/// Markov upper bound on P(Π > 2) and the Paley–Zygmund lower bound on
/// P(Π >= 1/2), with the empirical frequencies.
#[derive(Debug, Clone, Copy)]
pub struct PaleyZygmund {
    pub markov_upper: f64,
    pub empirical_above_two: f64,
    pub pz_lower: f64,
    pub empirical_above_half: f64,
    pub moment_p: f64,
}

pub fn paley_zygmund_bounds<F: Scalar>(pool: &SamplePool<F>, p: f64) -> Result<PaleyZygmund> {
    if !(p > 1.0) {
        return Err(LabError::Domain("Paley–Zygmund bound needs p > 1".into()));
    }
    let n = pool.len() as f64;
    let mut above_two = 0usize;
    let mut above_half = 0usize;
    let mut mp = 0.0;
    for x in pool.values() {
        let x = x.to_f64_lossy();
        above_two += usize::from(x > 2.0);
        above_half += usize::from(x >= 0.5);
        mp += x.powf(p);
    }
    let moment_p = mp / n;
    Ok(PaleyZygmund {
        markov_upper: 0.5,
        empirical_above_two: above_two as f64 / n,
        pz_lower: (0.5 / moment_p.powf(1.0 / p)).powf(p / (p - 1.0)),
        empirical_above_half: above_half as f64 / n,
        moment_p,
    })
}

/// Exact integer moments E Π_n^k, k = 1..=kmax, of the recursion at finite n,
/// obtained by propagating the moment identities scale by scale.
pub fn finite_scale_moments(q: f64, b: f64, n_end: usize, kmax: usize) -> Result<Vec<f64>> {
    if !(q > 0.5) {
        return Err(LabError::Domain("q must exceed 1/2".into()));
    }
    let mut m = vec![1.0; kmax + 1];
    let tol = Tolerance::new(1e-300, 1e-13).with_max_intervals(4000);
    for n in 1..n_end {
        let law = ThetaLaw::new(b / n as f64)?;
        let tn = exact_tn(q, b / n as f64)?.tn;
        let mut next = m.clone();
        for k in 2..=kmax {
            let mut acc = 0.0;
            for j in 0..=k {
                let (a, c) = (2.0 * q * j as f64, 2.0 * q * (k - j) as f64);
                let w = law
                    .expect_even_with(
                        |t| {
                            let s2 = t.sin().powi(2);
                            s2.powf(0.5 * a) * (1.0 - s2).powf(0.5 * c)
                        },
                        tol,
                    )
                    .value;
                acc += ln_binomial::<f64>(k, j).exp() * w * m[j] * m[k - j];
            }
            next[k] = acc / tn.powi(k as i32);
        }
        m = next;
    }
    Ok(m[1..].to_vec())
}
