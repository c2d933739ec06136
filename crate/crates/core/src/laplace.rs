//! Laplace transform φ(t) = E e^{−tΠ} of the normalised IPR on a logarithmic grid.
//!
//! Values are interpolated through g = ln φ + κ₁t (κ₁ the mean) with cubic
//! Hermite segments in u = ln t and fourth-order difference slopes, which keeps
//! relative accuracy at small t where φ ≈ e^{−t}.

use rayon::prelude::*;

use crate::analytics::{one_minus_pair_power, t_of_q};
use crate::error::{LabError, Result};
use crate::linalg::{Lu, Matrix};
use crate::quadrature::{gauss_legendre, integrate, Tolerance};
use crate::stats::least_squares;
use crate::theta::ThetaLaw;

pub const T_MIN: f64 = 1e-4;
pub const T_MAX: f64 = 1e3;
pub const NODES: usize = 400;

/// Below this angle the stationary integrand is replaced by its leading expansion.
const THETA_TAIL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub t_grid: Vec<f64>,
    /// ln φ at the nodes; stored in log form so deep tails do not underflow.
    pub log_phi: Vec<f64>,
    /// Coefficients of 1, t, t², t³, t⁴ used below the grid:
    /// (1, −M₁, M₂/2, −M₃/6, M₄/24).
    pub series_head: [f64; 5],
}

pub fn log_grid(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (t_min.ln(), t_max.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn head_from_moments(m: &[f64]) -> [f64; 5] {
    let mut h = [1.0, 0.0, 0.0, 0.0, 0.0];
    let mut fact = 1.0;
    for k in 1..5 {
        fact *= k as f64;
        let mk = m.get(k - 1).copied().unwrap_or(0.0);
        h[k] = if k % 2 == 1 { -mk } else { mk } / fact;
    }
    h
}

impl GridFunction {
    pub fn from_fn<G: Fn(f64) -> f64>(t_grid: Vec<f64>, f: G, series_head: [f64; 5]) -> Self {
        Self::from_log_fn(t_grid, |t| f(t).ln(), series_head)
    }

    pub fn from_log_fn<G: Fn(f64) -> f64>(t_grid: Vec<f64>, f: G, series_head: [f64; 5]) -> Self {
        let log_phi = t_grid.iter().map(|&t| f(t)).collect();
        GridFunction {
            t_grid,
            log_phi,
            series_head,
        }
    }

    /// φ at the nodes.
    pub fn phi(&self) -> Vec<f64> {
        self.log_phi.iter().map(|l| l.exp()).collect()
    }

    /// φ₁(t) = e^{−t} on the default grid.
    pub fn exponential() -> Self {
        Self::from_log_fn(log_grid(T_MIN, T_MAX, NODES), |t| -t, head_from_moments(&[1.0; 4]))
    }

    /// 1/(1+t), the transform of a unit exponential.
    pub fn rational() -> Self {
        Self::from_log_fn(
            log_grid(T_MIN, T_MAX, NODES),
            |t| -t.ln_1p(),
            head_from_moments(&[1.0, 2.0, 6.0, 24.0]),
        )
    }

    pub fn len(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_grid.is_empty()
    }

    pub fn mean(&self) -> f64 {
        -self.series_head[1]
    }

    fn interp(&self) -> Interp {
        Interp::new(&self.t_grid, &self.log_phi, self.mean())
    }

    /// φ at any t ≥ 0.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        self.interp().phi(t)
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.log_phi
            .iter()
            .zip(&other.log_phi)
            .map(|(a, b)| (a.exp() - b.exp()).abs())
            .fold(0.0, f64::max)
    }

    /// Largest violation of |φ(t) − φ(s)| <= M₁|t − s| over adjacent nodes.
    pub fn lipschitz_excess(&self) -> f64 {
        let m1 = self.mean();
        self.t_grid
            .windows(2)
            .zip(self.phi().windows(2))
            .map(|(t, p)| (p[0] - p[1]).abs() - m1 * (t[1] - t[0]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest discrete second difference in t (convexity needs >= 0).
    pub fn min_second_difference(&self) -> f64 {
        let (t, p) = (&self.t_grid, &self.phi());
        (1..t.len() - 1)
            .map(|i| (p[i + 1] - p[i]) / (t[i + 1] - t[i]) - (p[i] - p[i - 1]) / (t[i] - t[i - 1]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_decreasing(&self) -> bool {
        self.log_phi.windows(2).all(|w| w[1] < w[0]) && self.log_phi.iter().all(|&l| l <= 0.0)
    }
}

/// Hermite interpolant of g = ln φ + κ₁t over u = ln t with linear weights
/// on the node values, so the solver can differentiate through it.
struct Interp {
    u0: f64,
    h: f64,
    kappa: f64,
    t0: f64,
    g: Vec<f64>,
    d: Vec<f64>,
}

/// At most 12 (node, weight) pairs describing ∂G/∂g_k.
struct Weights {
    len: usize,
    idx: [usize; 12],
    w: [f64; 12],
}

impl Weights {
    fn new() -> Self {
        Weights {
            len: 0,
            idx: [0; 12],
            w: [0.0; 12],
        }
    }

    fn push(&mut self, i: usize, w: f64) {
        self.idx[self.len] = i;
        self.w[self.len] = w;
        self.len += 1;
    }

    fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx[..self.len]
            .iter()
            .copied()
            .zip(self.w[..self.len].iter().copied())
    }
}

/// Fourth-order slope stencil at node i, already divided by h.
fn slope_stencil(i: usize, n: usize, h: f64) -> [(usize, f64); 5] {
    let c = 1.0 / (12.0 * h);
    let fwd0 = [-25.0, 48.0, -36.0, 16.0, -3.0];
    let fwd1 = [-3.0, -10.0, 18.0, -6.0, 1.0];
    let mid = [1.0, -8.0, 0.0, 8.0, -1.0];
    let mut out = [(0, 0.0); 5];
    if i == 0 || i == 1 {
        let coef = if i == 0 { fwd0 } else { fwd1 };
        for k in 0..5 {
            out[k] = (k, c * coef[k]);
        }
    } else if i + 2 >= n {
        let coef = if i == n - 1 { fwd0 } else { fwd1 };
        for k in 0..5 {
            out[k] = (n - 1 - k, -c * coef[k]);
        }
    } else {
        for k in 0..5 {
            out[k] = (i + k - 2, c * mid[k]);
        }
    }
    out
}

impl Interp {
    fn new(t_grid: &[f64], log_phi: &[f64], kappa: f64) -> Self {
        let g: Vec<f64> = t_grid.iter().zip(log_phi).map(|(&t, &l)| l + kappa * t).collect();
        Self::from_g(t_grid, g, kappa)
    }

    fn from_g(t_grid: &[f64], g: Vec<f64>, kappa: f64) -> Self {
        let n = t_grid.len();
        let u0 = t_grid[0].ln();
        let h = (t_grid[n - 1].ln() - u0) / (n - 1) as f64;
        let d = (0..n)
            .map(|i| slope_stencil(i, n, h).iter().map(|&(k, c)| c * g[k]).sum())
            .collect();
        Interp {
            u0,
            h,
            kappa,
            t0: t_grid[0],
            g,
            d,
        }
    }

    /// G(x) with its node weights when `wts` is given.
    fn g_at(&self, x: f64, mut wts: Option<&mut Weights>) -> f64 {
        let n = self.g.len();
        if x < self.t0 {
            // head: g ≈ g₀ (x/t₀)², the cumulant expansion with the mean fixed
            let r = (x / self.t0) * (x / self.t0);
            if let Some(w) = wts.as_deref_mut() {
                w.push(0, r);
            }
            return self.g[0] * r;
        }
        let s = (x.ln() - self.u0) / self.h;
        if s >= (n - 1) as f64 {
            let du = (s - (n - 1) as f64) * self.h;
            if let Some(w) = wts.as_deref_mut() {
                w.push(n - 1, 1.0);
                for (k, c) in slope_stencil(n - 1, n, self.h) {
                    w.push(k, du * c);
                }
            }
            return self.g[n - 1] + du * self.d[n - 1];
        }
        let i = (s.floor() as usize).min(n - 2);
        let z = s - i as f64;
        let z2 = z * z;
        let z3 = z2 * z;
        let h00 = 2.0 * z3 - 3.0 * z2 + 1.0;
        let h10 = z3 - 2.0 * z2 + z;
        let h01 = -2.0 * z3 + 3.0 * z2;
        let h11 = z3 - z2;
        if let Some(w) = wts {
            w.push(i, h00);
            w.push(i + 1, h01);
            for (k, c) in slope_stencil(i, n, self.h) {
                w.push(k, self.h * h10 * c);
            }
            for (k, c) in slope_stencil(i + 1, n, self.h) {
                w.push(k, self.h * h11 * c);
            }
        }
        h00 * self.g[i] + h01 * self.g[i + 1] + self.h * (h10 * self.d[i] + h11 * self.d[i + 1])
    }

    fn log_phi(&self, x: f64) -> f64 {
        self.g_at(x, None) - self.kappa * x
    }

    fn phi(&self, x: f64) -> f64 {
        self.log_phi(x).exp()
    }
}

/// Composite Gauss–Legendre rule for E over the θ law, symmetric half only.
/// Panels are geometric around ε; weights are renormalised to total mass 1.
fn theta_rule(law: &ThetaLaw<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let eps = law.epsilon();
    let top = std::f64::consts::FRAC_PI_4;
    let mut edges = vec![0.0];
    let mut x = eps * 2f64.powi(-10);
    while x < top {
        edges.push(x);
        x *= 2.0;
    }
    edges.push(top);
    let (gx, gw) = gauss_legendre::<f64>(8);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for e in edges.windows(2) {
        let (c, hw) = (0.5 * (e[0] + e[1]), 0.5 * (e[1] - e[0]));
        for (xi, wi) in gx.iter().zip(&gw) {
            let th = c + hw * xi;
            nodes.push(th);
            weights.push(hw * wi * law.density(th)?);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((nodes, weights))
}

/// Non-increasing isotonic projection of ln φ (pool adjacent violators);
/// returns the sup-norm distance moved in φ.
fn isotonic_decreasing(values: &mut [f64]) -> f64 {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values.iter() {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a >= b {
                break;
            }
            blocks.pop();
            let m = blocks.len() - 1;
            blocks[m] = ((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb);
        }
    }
    let mut k = 0;
    let mut dist = 0.0_f64;
    for (v, n) in blocks {
        for x in &mut values[k..k + n] {
            dist = dist.max((x.exp() - v.exp()).abs());
            *x = v;
        }
        k += n;
    }
    dist
}

#[derive(Debug, Clone)]
pub struct IterateOutcome {
    pub grid: GridFunction,
    pub steps: usize,
    /// Sup-norm change of the last step.
    pub last_change: f64,
    pub max_projection: f64,
}

/// φ_{n+1}(t) = E[φ_n(t sin^{2q}θ_n / T_n) φ_n(t cos^{2q}θ_n / T_n)] for n in [n_start, n_end).
///
/// T_n is the discrete mean of sin^{2q} + cos^{2q} under the same θ rule, so the
/// iteration conserves the mean exactly.
pub fn iterate_phi(q: f64, b: f64, n_start: usize, n_end: usize, grid: &GridFunction) -> Result<IterateOutcome> {
    if !(q > 0.5 && q < 1.0) {
        return Err(LabError::Domain("iteration needs 1/2 < q < 1".into()));
    }
    if !(b > 0.0) || n_start == 0 {
        return Err(LabError::Domain("need b > 0 and n_start >= 1".into()));
    }
    let mut cur = grid.clone();
    let kappa = cur.mean();
    let mut last_change = 0.0;
    let mut max_projection = 0.0_f64;
    for n in n_start..n_end {
        let law = ThetaLaw::at_scale(b, n)?;
        let (nodes, weights) = theta_rule(&law)?;
        let pairs: Vec<(f64, f64)> = nodes
            .iter()
            .map(|&th| {
                let u = th.sin().powi(2);
                ((q * u.ln()).exp(), (q * (-u).ln_1p()).exp())
            })
            .collect();
        let tn: f64 = weights.iter().zip(&pairs).map(|(w, (a, c))| w * (a + c)).sum();
        let ip = cur.interp();
        let mut next: Vec<f64> = cur
            .t_grid
            .par_iter()
            .map(|&t| {
                let tt = t / tn;
                let logs: Vec<f64> = pairs
                    .iter()
                    .map(|&(a, c)| ip.log_phi(tt * a) + ip.log_phi(tt * c))
                    .collect();
                let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = weights.iter().zip(&logs).map(|(w, l)| w * (l - top).exp()).sum();
                top + s.ln()
            })
            .collect();
        let proj = isotonic_decreasing(&mut next);
        max_projection = max_projection.max(proj);
        if proj > 1e-9 {
            return Err(LabError::Contract(format!(
                "isotonic projection moved the grid by {proj:.3e} at n = {n}"
            )));
        }
        last_change = next
            .iter()
            .zip(&cur.log_phi)
            .map(|(a, b)| (a.exp() - b.exp()).abs())
            .fold(0.0, f64::max);
        cur.log_phi = next;
    }
    let g0 = cur.log_phi[0] + kappa * cur.t_grid[0];
    let t0 = cur.t_grid[0];
    cur.series_head[2] = 0.5 * kappa * kappa + g0 / (t0 * t0);
    Ok(IterateOutcome {
        grid: cur,
        steps: n_end.saturating_sub(n_start),
        last_change,
        max_projection,
    })
}

/// Leading small-angle part of the stationary integral over [0, θ₀], given tφ′(t).
fn tail_term(q: f64, kappa: f64, t: f64, phi: f64, t_dphi: f64) -> f64 {
    let a = THETA_TAIL;
    0.5 * (-kappa * t * phi * a.powf(2.0 * q - 1.0) / (2.0 * q - 1.0) - q * t_dphi * a)
}

/// Integrand (φ(t s^{2q}) φ(t c^{2q}) − φ(t)) / (s² c²) from interpolated g values.
#[inline]
fn stationary_integrand(q: f64, kappa: f64, t: f64, theta: f64, ga: f64, gb: f64, gt: f64, phi_t: f64) -> f64 {
    let u = theta.sin().powi(2);
    // x_a + x_b − t = −t(1 − s^{2q} − c^{2q})
    let shift = -t * one_minus_pair_power(u, q);
    let delta = ga + (gb - gt) - kappa * shift;
    phi_t * delta.exp_m1() / (u * (1.0 - u))
}

/// T(q)tφ′(t) + ½∫_0^{π/4} [φ(t sin^{2q}θ)φ(t cos^{2q}θ) − φ(t)]/(sin²θ cos²θ) dθ.
///
/// tφ′ comes from centred differences in ln t; the θ integral is adaptive above
/// θ₀ = 1e-4 and uses the leading expansion below.
pub fn stationary_residual(q: f64, grid: &GridFunction, t: f64) -> Result<f64> {
    let tq = t_of_q(q)?;
    if !(t > 0.0) {
        return Err(LabError::Domain("residual needs t > 0".into()));
    }
    let ip = grid.interp();
    let kappa = grid.mean();
    let du: f64 = 1e-4;
    let t_dphi = (ip.phi(t * du.exp()) - ip.phi(t * (-du).exp())) / (2.0 * du);
    let gt = ip.g_at(t, None);
    let phi_t = (gt - kappa * t).exp();
    let r = integrate(
        |th: f64| {
            let u = th.sin().powi(2);
            let ga = ip.g_at(t * (q * u.ln()).exp(), None);
            let gb = ip.g_at(t * (q * (-u).ln_1p()).exp(), None);
            stationary_integrand(q, kappa, t, th, ga, gb, gt, phi_t)
        },
        &[THETA_TAIL, 1e-3, 1e-2, 0.1, std::f64::consts::FRAC_PI_4],
        Tolerance::new(1e-12, 1e-10),
    );
    if !r.converged {
        return Err(LabError::Contract(format!(
            "residual quadrature did not converge at t = {t}"
        )));
    }
    Ok(tq * t_dphi + 0.5 * r.value + tail_term(q, kappa, t, phi_t, t_dphi))
}

#[derive(Debug, Clone)]
pub struct MomentFit {
    /// M₁..M_kmax.
    pub moments: Vec<f64>,
    pub rms_residual: f64,
    pub ill_conditioned: bool,
}

/// Moments from a least-squares fit of ln φ = Σ κ_k (−t)^k / k! over the small-t nodes.
pub fn moments_from_phi(grid: &GridFunction, kmax: usize) -> Result<MomentFit> {
    if kmax == 0 || kmax > 4 {
        return Err(LabError::Domain("kmax must lie in 1..=4".into()));
    }
    const T_FIT: f64 = 0.5;
    const DEGREE: usize = 8;
    let sel: Vec<(f64, f64)> = grid
        .t_grid
        .iter()
        .zip(&grid.log_phi)
        .filter(|(&t, _)| t <= T_FIT)
        .map(|(&t, &l)| (t / T_FIT, l))
        .collect();
    if sel.len() < 2 * DEGREE {
        return Err(LabError::Domain("too few small-t nodes for the series fit".into()));
    }
    let columns: Vec<Vec<f64>> = (1..=DEGREE)
        .map(|k| sel.iter().map(|&(x, _)| x.powi(k as i32)).collect())
        .collect();
    let y: Vec<f64> = sel.iter().map(|&(_, v)| v).collect();
    let fit = least_squares(&columns, &y);
    let rms = (fit.residual_ss / sel.len() as f64).sqrt();
    let mut kappa = vec![0.0; kmax + 1];
    let mut fact = 1.0;
    for k in 1..=kmax {
        fact *= k as f64;
        let a = fit.coef[k - 1] / T_FIT.powi(k as i32);
        kappa[k] = if k % 2 == 1 { -a } else { a } * fact;
    }
    // M_n = Σ_{j=1}^{n} C(n−1, j−1) κ_j M_{n−j}
    let mut m = vec![1.0; kmax + 1];
    for n in 1..=kmax {
        let mut s = 0.0;
        let mut binom = 1.0;
        for j in 1..=n {
            s += binom * kappa[j] * m[n - j];
            binom = binom * (n - j) as f64 / j as f64;
        }
        m[n] = s;
    }
    Ok(MomentFit {
        moments: m[1..].to_vec(),
        rms_residual: rms,
        ill_conditioned: rms > 1e-6,
    })
}

#[derive(Debug, Clone)]
pub struct StationarySolution {
    pub grid: GridFunction,
    pub newton_steps: usize,
    /// Sup norm of the discrete node residuals divided by φ(t_i).
    pub discrete_residual: f64,
}

/// Angular rule on [θ₀, π/4] after θ = (π/4)v², geometric panels in v.
fn stationary_theta_rule() -> (Vec<f64>, Vec<f64>) {
    let quarter = std::f64::consts::FRAC_PI_4;
    let v0 = (THETA_TAIL / quarter).sqrt();
    let mut edges = vec![v0];
    let mut v = v0 * 2.0;
    while v < 1.0 {
        edges.push(v);
        v *= 2.0;
    }
    edges.push(1.0);
    let (gx, gw) = gauss_legendre::<f64>(16);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for e in edges.windows(2) {
        let (c, hw) = (0.5 * (e[0] + e[1]), 0.5 * (e[1] - e[0]));
        for (xi, wi) in gx.iter().zip(&gw) {
            let v = c + hw * xi;
            nodes.push(quarter * v * v);
            weights.push(hw * wi * 2.0 * quarter * v);
        }
    }
    (nodes, weights)
}

/// Node residuals divided by φ(t_i) and, optionally, their Jacobian in g.
/// The scaling keeps rows well conditioned where φ is tiny.
fn discrete_system(
    q: f64,
    tq: f64,
    t_grid: &[f64],
    g: &[f64],
    rule: &(Vec<f64>, Vec<f64>),
    jac: bool,
) -> (Vec<f64>, Option<Vec<Vec<f64>>>) {
    let n = t_grid.len();
    let ip = Interp::from_g(t_grid, g.to_vec(), 1.0);
    let coef_d = tq - 0.5 * q * THETA_TAIL;
    let tail_rel = 0.5 * THETA_TAIL.powf(2.0 * q - 1.0) / (2.0 * q - 1.0);
    let rows: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let t = t_grid[i];
            let mut row = if jac { vec![0.0; n] } else { Vec::new() };
            // (T − qθ₀/2)·tφ′/φ − tθ₀^{2q−1}/(2(2q−1))
            let mut r = coef_d * (ip.d[i] - t) - t * tail_rel;
            if jac {
                for (k, c) in slope_stencil(i, n, ip.h) {
                    row[k] += coef_d * c;
                }
            }
            let mut wa = Weights::new();
            let mut wb = Weights::new();
            for (&th, &w) in rule.0.iter().zip(&rule.1) {
                let u = th.sin().powi(2);
                let xa = t * (q * u.ln()).exp();
                let xb = t * (q * (-u).ln_1p()).exp();
                wa.len = 0;
                wb.len = 0;
                let ga = ip.g_at(xa, jac.then_some(&mut wa));
                let gb = ip.g_at(xb, jac.then_some(&mut wb));
                let f = stationary_integrand(q, 1.0, t, th, ga, gb, g[i], 1.0);
                r += 0.5 * w * f;
                if jac {
                    let scale = 0.5 * w / (u * (1.0 - u));
                    let e = 1.0 + f * u * (1.0 - u);
                    for (k, c) in wa.iter().chain(wb.iter()) {
                        row[k] += scale * e * c;
                    }
                    row[i] -= scale * e;
                }
            }
            (r, row)
        })
        .collect();
    let res = rows.iter().map(|(r, _)| *r).collect();
    let j = jac.then(|| rows.into_iter().map(|(_, row)| row).collect());
    (res, j)
}

/// Newton solve of the stationary equation on the grid of `init`, mean fixed to 1.
pub fn solve_stationary(q: f64, init: &GridFunction) -> Result<StationarySolution> {
    if !(q > 0.5 && q < 1.0) {
        return Err(LabError::Domain("stationary solver needs 1/2 < q < 1".into()));
    }
    if (init.mean() - 1.0).abs() > 1e-12 {
        return Err(LabError::Domain("initial grid must have mean 1".into()));
    }
    let tq = t_of_q(q)?;
    let rule = stationary_theta_rule();
    let t_grid = init.t_grid.clone();
    let n = t_grid.len();
    let mut g: Vec<f64> = t_grid.iter().zip(&init.log_phi).map(|(&t, &l)| l + t).collect();
    let norm = |r: &[f64]| r.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let (mut res, _) = discrete_system(q, tq, &t_grid, &g, &rule, false);
    let mut steps = 0;
    while norm(&res) > 1e-11 && steps < 40 {
        let (_, jac) = discrete_system(q, tq, &t_grid, &g, &rule, true);
        let jac = jac.unwrap_or_default();
        let lu = Lu::factor(Matrix::from_fn(n, |r, c| jac[r][c]))?;
        let rhs: Vec<f64> = res.iter().map(|x| -x).collect();
        let delta = lu.solve(&rhs);
        let mut lambda = 1.0;
        let improved = loop {
            let trial: Vec<f64> = g.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
            let (r_trial, _) = discrete_system(q, tq, &t_grid, &trial, &rule, false);
            if norm(&r_trial) < norm(&res) {
                g = trial;
                res = r_trial;
                break true;
            }
            if lambda < 1e-3 {
                break false;
            }
            lambda *= 0.5;
        };
        steps += 1;
        if !improved {
            break;
        }
    }
    if norm(&res) > 1e-8 {
        return Err(LabError::Contract(format!(
            "stationary Newton stalled at residual {:.3e}",
            norm(&res)
        )));
    }
    let log_phi: Vec<f64> = t_grid.iter().zip(&g).map(|(&t, &gi)| gi - t).collect();
    let mut grid = GridFunction {
        t_grid,
        log_phi,
        series_head: [1.0, -1.0, 0.5 + g[0] / (T_MIN * T_MIN), 0.0, 0.0],
    };
    if let Ok(fit) = moments_from_phi(&grid, 4) {
        grid.series_head = head_from_moments(&fit.moments);
        grid.series_head[1] = -1.0;
    }
    Ok(StationarySolution {
        grid,
        newton_steps: steps,
        discrete_residual: norm(&res),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_round_trip() {
        let g = GridFunction::exponential();
        for t in [1e-5, 3e-4, 0.37, 12.0, 999.0] {
            assert!((g.eval(t) - (-t).exp()).abs() < 1e-15, "{t}");
        }
        let m = moments_from_phi(&g, 4).unwrap();
        for v in m.moments {
            assert!((v - 1.0).abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn rational_interpolates_accurately() {
        let g = GridFunction::rational();
        for t in [2e-4, 0.0123, 0.77, 33.3] {
            assert!(
                (g.eval(t) - 1.0 / (1.0 + t)).abs() < 5e-8,
                "{t} {}",
                g.eval(t) - 1.0 / (1.0 + t)
            );
        }
        let m = moments_from_phi(&g, 4).unwrap();
        assert!((m.moments[1] - 2.0).abs() < 1e-4, "{:?}", m.moments);
    }

    #[test]
    fn constant_has_zero_residual() {
        let g = GridFunction::from_fn(log_grid(T_MIN, T_MAX, NODES), |_| 1.0, [1.0, 0.0, 0.0, 0.0, 0.0]);
        for t in [0.01, 1.0, 100.0] {
            assert_eq!(stationary_residual(0.75, &g, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn isotonic_projection() {
        let mut v = vec![0.0, -1.0, -0.5, -2.0];
        let d = isotonic_decreasing(&mut v);
        assert_eq!(v, vec![0.0, -0.75, -0.75, -2.0]);
        assert!((d - ((-0.5f64).exp() - (-0.75f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn iteration_keeps_shape() {
        let out = iterate_phi(0.75, 0.5, 1, 20, &GridFunction::exponential()).unwrap();
        assert!(out.grid.is_decreasing());
        assert!(out.grid.lipschitz_excess() <= 1e-12);
        assert!(out.grid.min_second_difference() >= -1e-8);
        assert!(iterate_phi(1.5, 0.5, 1, 2, &GridFunction::exponential()).is_err());
    }
}
