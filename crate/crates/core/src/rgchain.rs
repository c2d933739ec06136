//! RG flow of the LME approximation on a periodic chain.
//!
//! At scale m the pairs (i, i+m) are coupled by a fresh h ~ N(0, (b/m)²). Pairs
//! with |E_i − E_j| <= (b/m)^a are resonant; a disjoint subset is rotated
//! exactly by the 2×2 diagonalisation, tan 2θ = −h/δE, δE = (E_i − E_j)/2.

use rayon::prelude::*;

use crate::analytics::t_of_q;
use crate::error::{LabError, Result};
use crate::rng::{derive_stream, index, std_normal, Stream};
use crate::stats::{kde_at, line_fit};
use crate::theta::ThetaLaw;

const STREAM_TAG: u64 = 0x5247;
const PATH_TAG: u64 = 0x5053;

/// Unit vector stored as (site, amplitude) pairs sorted by site.
pub type SparseVec = Vec<(u32, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct RgParams {
    pub n_sites: usize,
    pub b: f64,
    pub a: f64,
    pub n_max: usize,
    pub q_list: Vec<f64>,
    pub seed: u64,
    pub replicas: usize,
}

impl RgParams {
    pub fn new(n_sites: usize, b: f64) -> Self {
        RgParams {
            n_sites,
            b,
            a: 0.4,
            n_max: 128,
            q_list: vec![0.75, 2.0],
            seed: 1,
            replicas: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 16 {
            return Err(LabError::Config("chain needs at least 16 sites".into()));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(LabError::Config("b must be positive".into()));
        }
        if !(self.a > 0.0 && 2.0 * (1.0 - self.a) > 1.0) {
            return Err(LabError::Config("resonance exponent needs 0 < a < 1/2".into()));
        }
        if self.n_max == 0 || 2 * self.n_max > self.n_sites {
            return Err(LabError::Config("n_max must lie in 1..=N/2".into()));
        }
        if self.q_list.iter().any(|&q| !(q > 0.5)) {
            return Err(LabError::Config("q must exceed 1/2".into()));
        }
        if self.replicas == 0 {
            return Err(LabError::Config("replicas must be positive".into()));
        }
        Ok(())
    }
}

/// One rotation applied at some scale.
#[derive(Debug, Clone)]
pub struct Resonance {
    pub scale: usize,
    pub i: usize,
    pub j: usize,
    pub theta: f64,
    pub delta_e: f64,
    pub h: f64,
    /// |E_i − E_j| after the rotation.
    pub gap_after: f64,
    pub overlap: bool,
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub n: usize,
    pub energies: Vec<f64>,
    pub vectors: Vec<SparseVec>,
    pub resonance_log: Vec<Resonance>,
}

/// Fresh chain: standard normal levels, canonical basis vectors.
pub fn init_chain(n_sites: usize, rng: &mut Stream) -> Result<ChainState> {
    if n_sites < 16 {
        return Err(LabError::Domain("chain needs at least 16 sites".into()));
    }
    Ok(ChainState {
        n: 0,
        energies: (0..n_sites).map(|_| std_normal(rng)).collect(),
        vectors: (0..n_sites).map(|i| vec![(i as u32, 1.0)]).collect(),
        resonance_log: Vec::new(),
    })
}

/// Σ|ψ_s|^{2q}.
pub fn ipr(v: &[(u32, f64)], q: f64) -> f64 {
    v.iter().map(|&(_, x)| (x * x).powf(q)).sum()
}

pub fn norm(v: &[(u32, f64)]) -> f64 {
    v.iter().map(|&(_, x)| x * x).sum::<f64>().sqrt()
}

pub fn dot(u: &[(u32, f64)], v: &[(u32, f64)]) -> f64 {
    let (mut a, mut b, mut s) = (0, 0, 0.0);
    while a < u.len() && b < v.len() {
        match u[a].0.cmp(&v[b].0) {
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
            std::cmp::Ordering::Equal => {
                s += u[a].1 * v[b].1;
                a += 1;
                b += 1;
            }
        }
    }
    s
}

fn supports_overlap(u: &[(u32, f64)], v: &[(u32, f64)]) -> bool {
    let (mut a, mut b) = (0, 0);
    while a < u.len() && b < v.len() {
        match u[a].0.cmp(&v[b].0) {
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// (c·u − s·v, s·u + c·v) over the union of supports.
fn rotate(u: &[(u32, f64)], v: &[(u32, f64)], c: f64, s: f64) -> (SparseVec, SparseVec) {
    let mut x = Vec::with_capacity(u.len() + v.len());
    let mut y = Vec::with_capacity(u.len() + v.len());
    let (mut a, mut b) = (0, 0);
    while a < u.len() || b < v.len() {
        let (site, ua, vb) = match (u.get(a), v.get(b)) {
            (Some(&(su, xu)), Some(&(sv, xv))) if su == sv => {
                a += 1;
                b += 1;
                (su, xu, xv)
            }
            (Some(&(su, xu)), Some(&(sv, _))) if su < sv => {
                a += 1;
                (su, xu, 0.0)
            }
            (Some(&(su, xu)), None) => {
                a += 1;
                (su, xu, 0.0)
            }
            (_, Some(&(sv, xv))) => {
                b += 1;
                (sv, 0.0, xv)
            }
            (None, None) => unreachable!(),
        };
        x.push((site, c * ua - s * vb));
        y.push((site, s * ua + c * vb));
    }
    (x, y)
}

/// Statistics gathered at one scale.
#[derive(Debug, Clone, Copy)]
pub struct ScaleStats {
    pub m: usize,
    pub pairs: usize,
    pub resonant: usize,
    pub selected: usize,
    /// resonant / pairs
    pub density: f64,
    /// 2ρ̂_{δE}(0)·E|v| with the kernel density of δE over all pairs.
    pub beta_emp: f64,
    pub overlap_fraction: f64,
}

/// Advances the chain from scale n to n+1.
pub fn step_scale(state: &mut ChainState, params: &RgParams, rng: &mut Stream) -> Result<ScaleStats> {
    let n_sites = state.energies.len();
    let m = state.n + 1;
    if 2 * m > n_sites {
        return Err(LabError::Domain("scale exceeds N/2".into()));
    }
    let pairs = if 2 * m == n_sites { n_sites / 2 } else { n_sites };
    let sd_h = params.b / m as f64;
    let thresh = sd_h.powf(params.a);
    let h: Vec<f64> = (0..pairs).map(|_| sd_h * std_normal(rng)).collect();
    let half_gaps: Vec<f64> = (0..pairs)
        .map(|i| 0.5 * (state.energies[i] - state.energies[(i + m) % n_sites]))
        .collect();
    let resonant = half_gaps.iter().filter(|g| 2.0 * g.abs() <= thresh).count();
    let beta_emp = 2.0 * kde_at(&half_gaps, 0.0) * (2.0 / std::f64::consts::PI).sqrt();

    let origin = index(rng, pairs);
    let mut used = vec![false; n_sites];
    let mut selected = 0;
    let mut overlaps = 0;
    for k in 0..pairs {
        let i = (origin + k) % pairs;
        let j = (i + m) % n_sites;
        let de = half_gaps[i];
        if 2.0 * de.abs() > thresh || used[i] || used[j] {
            continue;
        }
        used[i] = true;
        used[j] = true;
        selected += 1;
        let hij = h[i];
        let theta = if de == 0.0 {
            -hij.signum() * std::f64::consts::FRAC_PI_4
        } else {
            0.5 * (-hij / de).atan()
        };
        let (s, c) = theta.sin_cos();
        let overlap = supports_overlap(&state.vectors[i], &state.vectors[j]);
        overlaps += usize::from(overlap);
        let (vi, vj) = rotate(&state.vectors[i], &state.vectors[j], c, s);
        state.vectors[i] = vi;
        state.vectors[j] = vj;
        let mean = 0.5 * (state.energies[i] + state.energies[j]);
        let split = de.hypot(hij);
        let sign = if de >= 0.0 { 1.0 } else { -1.0 };
        state.energies[i] = mean + sign * split;
        state.energies[j] = mean - sign * split;
        state.resonance_log.push(Resonance {
            scale: m,
            i,
            j,
            theta,
            delta_e: de,
            h: hij,
            gap_after: (state.energies[i] - state.energies[j]).abs(),
            overlap,
        });
    }
    state.n = m;
    Ok(ScaleStats {
        m,
        pairs,
        resonant,
        selected,
        density: resonant as f64 / pairs as f64,
        beta_emp,
        overlap_fraction: if selected > 0 {
            overlaps as f64 / selected as f64
        } else {
            0.0
        },
    })
}

#[derive(Debug, Clone)]
pub struct FlowCheckpoint {
    pub n: usize,
    /// Site averages of ln P(q, ψ_i), one per q.
    pub mean_ln_p: Vec<f64>,
    /// Site averages of P(q, ψ_i), one per q.
    pub mean_p: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FlowRecord {
    pub params: RgParams,
    pub checkpoints: Vec<FlowCheckpoint>,
    /// Replica-averaged statistics per scale m = 1..=n_max.
    pub scales: Vec<ScaleStats>,
    pub rotations: usize,
    pub max_norm_error: f64,
    pub max_gap_error: f64,
    /// Worst relative gap between exact IPR and the disjoint-support update.
    pub max_disjoint_ipr_error: f64,
    pub max_orthogonality_error: f64,
}

impl FlowRecord {
    /// Slope of ln(mean P(q)) against ln n over checkpoints in [n_lo, n_hi].
    pub fn ipr_slope(&self, q_index: usize, n_lo: usize, n_hi: usize) -> Option<f64> {
        let pts: Vec<&FlowCheckpoint> = self.checkpoints.iter().filter(|c| c.n >= n_lo && c.n <= n_hi).collect();
        if pts.len() < 3 {
            return None;
        }
        let x: Vec<f64> = pts.iter().map(|c| (c.n as f64).ln()).collect();
        let y: Vec<f64> = pts.iter().map(|c| c.mean_p[q_index].ln()).collect();
        Some(line_fit(&x, &y).slope)
    }

    /// Mean β_emp over scales in [m_lo, m_hi].
    pub fn mean_beta(&self, m_lo: usize, m_hi: usize) -> f64 {
        let sel: Vec<f64> = self
            .scales
            .iter()
            .filter(|s| s.m >= m_lo && s.m <= m_hi)
            .map(|s| s.beta_emp)
            .collect();
        sel.iter().sum::<f64>() / sel.len() as f64
    }

    /// −b_eff T(q) with b_eff = β_emp·b.
    pub fn predicted_slope(&self, q: f64, m_lo: usize, m_hi: usize) -> Result<f64> {
        Ok(-self.mean_beta(m_lo, m_hi) * self.params.b * t_of_q(q)?)
    }
}

struct ReplicaOutcome {
    checkpoints: Vec<FlowCheckpoint>,
    scales: Vec<ScaleStats>,
    rotations: usize,
    norm_err: f64,
    gap_err: f64,
    ipr_err: f64,
    orth_err: f64,
}

fn checkpoint(state: &ChainState, q_list: &[f64]) -> FlowCheckpoint {
    let n = state.vectors.len() as f64;
    let mut mean_ln_p = vec![0.0; q_list.len()];
    let mut mean_p = vec![0.0; q_list.len()];
    for v in &state.vectors {
        for (k, &q) in q_list.iter().enumerate() {
            let p = ipr(v, q);
            mean_ln_p[k] += p.ln() / n;
            mean_p[k] += p / n;
        }
    }
    FlowCheckpoint {
        n: state.n,
        mean_ln_p,
        mean_p,
    }
}

fn run_replica(params: &RgParams, replica: usize) -> Result<ReplicaOutcome> {
    let mut init_rng = derive_stream(params.seed, &[STREAM_TAG, replica as u64, 0]);
    let mut state = init_chain(params.n_sites, &mut init_rng)?;
    let checkpoints_at: Vec<usize> = std::iter::successors(Some(1usize), |n| Some(n * 2))
        .take_while(|&n| n < params.n_max)
        .chain(std::iter::once(params.n_max))
        .collect();
    let mut checkpoints = vec![checkpoint(&state, &params.q_list)];
    let mut scales = Vec::with_capacity(params.n_max);
    let (mut norm_err, mut gap_err, mut ipr_err, mut orth_err) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut rotations = 0;
    let mut probe = derive_stream(params.seed, &[STREAM_TAG, replica as u64, u64::MAX]);
    while state.n < params.n_max {
        let before: Vec<Vec<f64>> = state
            .vectors
            .iter()
            .map(|v| params.q_list.iter().map(|&q| ipr(v, q)).collect())
            .collect();
        let log_start = state.resonance_log.len();
        let mut rng = derive_stream(params.seed, &[STREAM_TAG, replica as u64, state.n as u64 + 1]);
        scales.push(step_scale(&mut state, params, &mut rng)?);
        for r in &state.resonance_log[log_start..] {
            rotations += 1;
            for idx in [r.i, r.j] {
                norm_err = norm_err.max((norm(&state.vectors[idx]) - 1.0).abs());
            }
            gap_err = gap_err.max((r.gap_after - 2.0 * r.delta_e.hypot(r.h)).abs());
            if !r.overlap {
                let (s, c) = r.theta.sin_cos();
                for (k, &q) in params.q_list.iter().enumerate() {
                    let want = (c * c).powf(q) * before[r.i][k] + (s * s).powf(q) * before[r.j][k];
                    let got = ipr(&state.vectors[r.i], q);
                    ipr_err = ipr_err.max((got - want).abs() / want);
                }
            }
        }
        for _ in 0..8 {
            let i = index(&mut probe, params.n_sites);
            let j = index(&mut probe, params.n_sites);
            let d = dot(&state.vectors[i], &state.vectors[j]);
            let target = if i == j { 1.0 } else { 0.0 };
            orth_err = orth_err.max((d - target).abs());
        }
        state.resonance_log.clear();
        if checkpoints_at.contains(&state.n) {
            checkpoints.push(checkpoint(&state, &params.q_list));
        }
    }
    Ok(ReplicaOutcome {
        checkpoints,
        scales,
        rotations,
        norm_err,
        gap_err,
        ipr_err,
        orth_err,
    })
}

/// Runs all replicas to n_max and averages their records.
pub fn run_flow(params: &RgParams) -> Result<FlowRecord> {
    params.validate()?;
    let outs: Result<Vec<ReplicaOutcome>> = (0..params.replicas)
        .into_par_iter()
        .map(|r| run_replica(params, r))
        .collect();
    let outs = outs?;
    let nr = outs.len() as f64;
    let mut checkpoints = outs[0].checkpoints.clone();
    for (k, cp) in checkpoints.iter_mut().enumerate() {
        for (qi, _) in params.q_list.iter().enumerate() {
            cp.mean_ln_p[qi] = outs.iter().map(|o| o.checkpoints[k].mean_ln_p[qi]).sum::<f64>() / nr;
            cp.mean_p[qi] = outs.iter().map(|o| o.checkpoints[k].mean_p[qi]).sum::<f64>() / nr;
        }
    }
    let mut scales = outs[0].scales.clone();
    for (k, s) in scales.iter_mut().enumerate() {
        let avg = |f: fn(&ScaleStats) -> f64| outs.iter().map(|o| f(&o.scales[k])).sum::<f64>() / nr;
        s.density = avg(|x| x.density);
        s.beta_emp = avg(|x| x.beta_emp);
        s.overlap_fraction = avg(|x| x.overlap_fraction);
        s.resonant = outs.iter().map(|o| o.scales[k].resonant).sum();
        s.selected = outs.iter().map(|o| o.scales[k].selected).sum();
        s.pairs = outs.iter().map(|o| o.scales[k].pairs).sum();
    }
    Ok(FlowRecord {
        params: params.clone(),
        checkpoints,
        scales,
        rotations: outs.iter().map(|o| o.rotations).sum(),
        max_norm_error: outs.iter().map(|o| o.norm_err).fold(0.0, f64::max),
        max_gap_error: outs.iter().map(|o| o.gap_err).fold(0.0, f64::max),
        max_disjoint_ipr_error: outs.iter().map(|o| o.ipr_err).fold(0.0, f64::max),
        max_orthogonality_error: outs.iter().map(|o| o.orth_err).fold(0.0, f64::max),
    })
}

/// One entry of the random environment of the path-sum model.
#[derive(Debug, Clone, Copy)]
pub struct PathStep {
    pub sigma: bool,
    pub theta_plus: f64,
    pub theta_minus: f64,
}

/// ψ_site after n_max scales of
///   ψ_i^{n+1} = (σcosθ⁺ + (1−σ)cosθ⁻)ψ_i^n + σ sinθ⁺ ψ_{i+n+1}^n + (1−σ) sinθ⁻ ψ_{i−n−1}^n,
/// as a dense amplitude vector over sites, for a given environment.
///
/// The vector family evolves by a sparse label-mixing matrix A_n, so the
/// amplitudes of ψ_site are row `site` of A_{n_max−1}···A_0 and are obtained by
/// pulling a row vector from the last scale back to the first.
pub fn path_sum_with<E: FnMut(usize) -> Vec<PathStep>>(
    n_sites: usize,
    n_max: usize,
    site: usize,
    mut environment: E,
) -> Result<Vec<f64>> {
    if site >= n_sites || 2 * n_max > n_sites {
        return Err(LabError::Domain("path sum needs site < N and n_max <= N/2".into()));
    }
    let mut row = vec![0.0; n_sites];
    row[site] = 1.0;
    for n in (0..n_max).rev() {
        let env = environment(n);
        let shift = n + 1;
        let mut next = vec![0.0; n_sites];
        for (i, st) in env.iter().enumerate() {
            let r = row[i];
            if r == 0.0 {
                continue;
            }
            let (diag, up, down) = if st.sigma {
                (st.theta_plus.cos(), st.theta_plus.sin(), 0.0)
            } else {
                (st.theta_minus.cos(), 0.0, st.theta_minus.sin())
            };
            next[i] += r * diag;
            next[(i + shift) % n_sites] += r * up;
            next[(i + n_sites - shift % n_sites) % n_sites] += r * down;
        }
        row = next;
    }
    Ok(row)
}

/// Environment drawn from the θ law at ε = b/(n+1); a pure function of (seed, n).
pub fn path_environment(seed: u64, b: f64, n_sites: usize, n: usize) -> Result<Vec<PathStep>> {
    let law = ThetaLaw::new(b / (n + 1) as f64)?;
    let mut rng = derive_stream(seed, &[PATH_TAG, n as u64]);
    Ok((0..n_sites)
        .map(|_| PathStep {
            sigma: crate::rng::open01(&mut rng) < 0.5,
            theta_plus: law.sample(&mut rng),
            theta_minus: law.sample(&mut rng),
        })
        .collect())
}

/// Random path-sum eigenvector, normalised to unit length.
pub fn path_sum_eigenvector(params: &RgParams, site: usize, seed: u64) -> Result<Vec<f64>> {
    if params.n_sites > 8192 {
        return Err(LabError::Domain("path sum limited to N <= 8192".into()));
    }
    let mut err = None;
    let row = path_sum_with(params.n_sites, params.n_max, site, |n| {
        path_environment(seed, params.b, params.n_sites, n).unwrap_or_else(|e| {
            err = Some(e);
            vec![
                PathStep {
                    sigma: true,
                    theta_plus: 0.0,
                    theta_minus: 0.0
                };
                params.n_sites
            ]
        })
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let nrm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(row.into_iter().map(|x| x / nrm).collect())
}

/// Σ|ψ_s|^{2q} of a dense unit vector.
pub fn dense_ipr(v: &[f64], q: f64) -> f64 {
    v.iter().map(|x| (x * x).powf(q)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn initial_chain() {
        let mut rng = derive_stream(1, &[]);
        let st = init_chain(4096, &mut rng).unwrap();
        assert!(st.vectors.iter().all(|v| ipr(v, 0.75) == 1.0 && ipr(v, 2.0) == 1.0));
        let m = st.energies.iter().sum::<f64>() / 4096.0;
        let var = st.energies.iter().map(|e| (e - m).powi(2)).sum::<f64>() / 4095.0;
        assert!((var - 1.0).abs() < 5.0 * (2.0 / 4096.0f64).sqrt());
        assert!(init_chain(8, &mut rng).is_err());
    }

    #[test]
    fn ipr_reference_values() {
        let k = 9;
        let v: SparseVec = (0..k).map(|i| (i as u32, 1.0 / (k as f64).sqrt())).collect();
        assert!((ipr(&v, 2.0) - (k as f64).powf(-1.0)).abs() < 1e-15);
        assert!((ipr(&v, 0.75) - (k as f64).powf(0.25)).abs() < 1e-14);
        assert!((ipr(&v, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_resonance_gap_and_ipr() {
        let params = RgParams::new(16, 0.5);
        let mut rng = derive_stream(2, &[]);
        let mut st = init_chain(16, &mut rng).unwrap();
        // only sites 0 and 1 are resonant at scale 1
        st.energies = (0..16).map(|i| 10.0 * i as f64).collect();
        st.energies[1] = 0.01;
        step_scale(&mut st, &params, &mut rng).unwrap();
        assert_eq!(st.resonance_log.len(), 1);
        let r = &st.resonance_log[0];
        assert!((r.gap_after - 2.0 * r.delta_e.hypot(r.h)).abs() < 1e-12);
        let (s, c) = r.theta.sin_cos();
        assert!((ipr(&st.vectors[0], 2.0) - (c.powi(4) + s.powi(4))).abs() < 1e-15);
        assert!((norm(&st.vectors[0]) - 1.0).abs() < 1e-15);
        // the slot keeps the level on its own side
        assert!(st.energies[0] < st.energies[1]);
    }

    #[test]
    fn no_coupling_no_rotation() {
        let mut params = RgParams::new(256, 1e-6);
        params.n_max = 32;
        params.q_list = vec![0.75];
        let rec = run_flow(&params).unwrap();
        assert!(rec.rotations < 20);
        let last = rec.checkpoints.last().unwrap();
        assert!((last.mean_p[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn flow_invariants_small_chain() {
        let mut params = RgParams::new(512, 0.3);
        params.n_max = 32;
        let rec = run_flow(&params).unwrap();
        assert!(rec.rotations > 100);
        assert!(rec.max_norm_error <= 1e-12);
        assert!(rec.max_gap_error <= 1e-12);
        assert!(rec.max_disjoint_ipr_error <= 1e-12);
        assert!(rec.max_orthogonality_error <= 1e-10);
    }

    #[test]
    fn path_sum_forced_environment() {
        let zero = |_: usize| {
            vec![
                PathStep {
                    sigma: true,
                    theta_plus: 0.0,
                    theta_minus: 0.0
                };
                32
            ]
        };
        let v = path_sum_with(32, 8, 5, zero).unwrap();
        assert_eq!(v[5], 1.0);
        assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);

        let one = |_: usize| {
            vec![
                PathStep {
                    sigma: true,
                    theta_plus: PI / 6.0,
                    theta_minus: 0.0
                };
                32
            ]
        };
        let v = path_sum_with(32, 1, 3, one).unwrap();
        assert!((v[3] - (PI / 6.0).cos()).abs() < 1e-15);
        assert!((v[4] - (PI / 6.0).sin()).abs() < 1e-15);
        let want = 1.0 - 0.5 * (PI / 3.0).sin().powi(2);
        assert!((dense_ipr(&v, 2.0) - want).abs() < 1e-15);
    }

    #[test]
    fn path_sum_is_deterministic_and_normalised() {
        let mut params = RgParams::new(256, 0.3);
        params.n_max = 64;
        let a = path_sum_eigenvector(&params, 17, 9).unwrap();
        let b = path_sum_eigenvector(&params, 17, 9).unwrap();
        assert_eq!(a, b);
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
