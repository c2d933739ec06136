//! Gaussian branching random walk on the binary tree, used as a calibration
//! target with rigorously known behaviour.
//!
//! Normalised cascade:  M' = ½e^{βV₁−β²/2} M⁽¹⁾ + ½e^{βV₂−β²/2} M⁽²⁾
//! Derivative:          D' = Σᵢ ½e^{β_cVᵢ−β_c²/2} [(β_c − Vᵢ) M⁽ⁱ⁾ + D⁽ⁱ⁾]
//! Maximum:             X' = max(V₁ + X⁽¹⁾, V₂ + X⁽²⁾)
//!
//! Pools are split into independent blocks exactly as in the LME engine.

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::lme::{Estimate, BLOCKS};
use crate::rng::{derive_stream, index, std_normal, Stream};
use crate::stats::{jackknife, least_squares, median};

/// β_c = √(2 ln 2).
pub const BETA_C: f64 = 1.177_410_022_515_474_7;
const STREAM_TAG: u64 = 0x425257;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrwMode {
    Cascade,
    Derivative,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrwParams {
    pub beta: f64,
    pub depth: usize,
    pub replicas: usize,
    pub seed: u64,
}

impl BrwParams {
    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(LabError::Config("beta must be finite and non-negative".into()));
        }
        if self.depth > 40 {
            return Err(LabError::Config("depth must not exceed 40".into()));
        }
        if self.replicas < 2 * BLOCKS {
            return Err(LabError::Config(format!("replicas must be at least {}", 2 * BLOCKS)));
        }
        Ok(())
    }
}

/// One block of paired samples; unused components stay empty.
#[derive(Debug, Clone, Default)]
struct Block {
    m: Vec<f64>,
    d: Vec<f64>,
    x: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BrwPool {
    n: usize,
    mode: BrwMode,
    blocks: Vec<Block>,
}

impl BrwPool {
    /// Depth-zero pool: M = 1, D = 0, X = 0.
    pub fn new(mode: BrwMode, replicas: usize) -> Self {
        let base = replicas / BLOCKS;
        let extra = replicas % BLOCKS;
        let blocks = (0..BLOCKS)
            .map(|i| {
                let len = base + usize::from(i < extra);
                match mode {
                    BrwMode::Cascade => Block {
                        m: vec![1.0; len],
                        ..Block::default()
                    },
                    BrwMode::Derivative => Block {
                        m: vec![1.0; len],
                        d: vec![0.0; len],
                        ..Block::default()
                    },
                    BrwMode::Max => Block {
                        x: vec![0.0; len],
                        ..Block::default()
                    },
                }
            })
            .collect();
        BrwPool { n: 0, mode, blocks }
    }

    pub fn depth(&self) -> usize {
        self.n
    }

    pub fn m_values(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.m.iter().copied()).collect()
    }

    pub fn d_values(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.d.iter().copied()).collect()
    }

    pub fn x_max_values(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.x.iter().copied()).collect()
    }

    /// One generation. `beta` is used by the cascade only; the derivative
    /// pool always runs at β_c.
    pub fn step(&mut self, beta: f64, seed: u64) {
        let n = self.n as u64;
        let mode = self.mode;
        self.blocks.par_iter_mut().enumerate().for_each(|(bi, blk)| {
            let mut rng = derive_stream(seed, &[STREAM_TAG, n, bi as u64]);
            match mode {
                BrwMode::Cascade => step_cascade_block(&mut blk.m, beta, &mut rng),
                BrwMode::Derivative => step_derivative_block(&mut blk.m, &mut blk.d, &mut rng),
                BrwMode::Max => step_max_block(&mut blk.x, &mut rng),
            }
        });
        self.n += 1;
    }

    /// Block-jackknife estimate of E f(sample) over the primary component.
    pub fn estimate<G: Fn(f64) -> f64 + Sync>(&self, f: G) -> Estimate {
        let per_block: Vec<Vec<f64>> = self
            .blocks
            .iter()
            .map(|b| {
                let v = match self.mode {
                    BrwMode::Cascade => &b.m,
                    BrwMode::Derivative => &b.d,
                    BrwMode::Max => &b.x,
                };
                vec![v.iter().map(|&x| f(x)).sum::<f64>() / v.len() as f64]
            })
            .collect();
        let (value, se) = jackknife(&per_block, |v| v[0]);
        Estimate { value, se }
    }

    pub fn mean_m(&self) -> Estimate {
        let per_block: Vec<Vec<f64>> = self
            .blocks
            .iter()
            .map(|b| vec![b.m.iter().sum::<f64>() / b.m.len() as f64])
            .collect();
        let (value, se) = jackknife(&per_block, |v| v[0]);
        Estimate { value, se }
    }
}

fn step_cascade_block(m: &mut Vec<f64>, beta: f64, rng: &mut Stream) {
    let len = m.len();
    let shift = 0.5 * beta * beta;
    let out: Vec<f64> = (0..len)
        .map(|i| {
            let a = index(rng, len);
            let w1 = 0.5 * (beta * std_normal(rng) - shift).exp();
            let w2 = 0.5 * (beta * std_normal(rng) - shift).exp();
            w1 * m[i] + w2 * m[a]
        })
        .collect();
    *m = out;
}

fn step_derivative_block(m: &mut Vec<f64>, d: &mut Vec<f64>, rng: &mut Stream) {
    let len = m.len();
    let bc = BETA_C;
    let shift = 0.5 * bc * bc;
    let mut nm = Vec::with_capacity(len);
    let mut nd = Vec::with_capacity(len);
    for i in 0..len {
        let a = index(rng, len);
        let v1 = std_normal(rng);
        let v2 = std_normal(rng);
        let w1 = 0.5 * (bc * v1 - shift).exp();
        let w2 = 0.5 * (bc * v2 - shift).exp();
        nm.push(w1 * m[i] + w2 * m[a]);
        nd.push(w1 * ((bc - v1) * m[i] + d[i]) + w2 * ((bc - v2) * m[a] + d[a]));
    }
    *m = nm;
    *d = nd;
}

fn step_max_block(x: &mut Vec<f64>, rng: &mut Stream) {
    let len = x.len();
    let out: Vec<f64> = (0..len)
        .map(|i| {
            let a = index(rng, len);
            (std_normal(rng) + x[i]).max(std_normal(rng) + x[a])
        })
        .collect();
    *x = out;
}

/// Summary of one generation.
#[derive(Debug, Clone)]
pub struct BrwRecord {
    pub n: usize,
    pub mean: Estimate,
    pub median: f64,
    pub m2: Estimate,
}

/// Runs a pool to `params.depth`, recording every generation from 0.
pub fn run_brw(params: &BrwParams, mode: BrwMode) -> Result<Vec<BrwRecord>> {
    params.validate()?;
    let mut pool = BrwPool::new(mode, params.replicas);
    let mut out = Vec::with_capacity(params.depth + 1);
    loop {
        let mut values = match mode {
            BrwMode::Cascade => pool.m_values(),
            BrwMode::Derivative => pool.d_values(),
            BrwMode::Max => pool.x_max_values(),
        };
        out.push(BrwRecord {
            n: pool.depth(),
            mean: pool.estimate(|x| x),
            median: median(&mut values),
            m2: pool.estimate(|x| x * x),
        });
        if pool.depth() == params.depth {
            break;
        }
        pool.step(params.beta, params.seed);
    }
    Ok(out)
}

/// Exact E M_n² of the normalised cascade: m_{n+1} = ½e^{β²} m_n + ½, m_0 = 1.
pub fn cascade_second_moment(beta: f64, n: usize) -> f64 {
    let a = 0.5 * (beta * beta).exp();
    (0..n).fold(1.0, |m, _| a * m + 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Growing,
}

#[derive(Debug, Clone, Copy)]
pub struct BlowupReport {
    pub verdict: Verdict,
    pub moment_20: f64,
    pub moment_40: f64,
    /// β_c²/β², the critical moment order.
    pub threshold: f64,
}

/// GROWING when the empirical p-th moment of the cascade at least doubles
/// between depths 20 and 40.
pub fn moment_blowup_check(beta: f64, p: f64, replicas: usize, seed: u64) -> Result<BlowupReport> {
    if !(beta > 0.0 && beta < BETA_C) {
        return Err(LabError::Domain("blow-up check needs 0 < β < β_c".into()));
    }
    let params = BrwParams {
        beta,
        depth: 40,
        replicas,
        seed,
    };
    params.validate()?;
    let mut pool = BrwPool::new(BrwMode::Cascade, replicas);
    let mut moment_20 = f64::NAN;
    while pool.depth() < 40 {
        pool.step(beta, seed);
        if pool.depth() == 20 {
            moment_20 = pool.estimate(|x| x.powf(p)).value;
        }
    }
    let moment_40 = pool.estimate(|x| x.powf(p)).value;
    Ok(BlowupReport {
        verdict: if moment_40 >= 2.0 * moment_20 {
            Verdict::Growing
        } else {
            Verdict::Stable
        },
        moment_20,
        moment_40,
        threshold: BETA_C * BETA_C / (beta * beta),
    })
}

/// Fit of median(X_n) = v n + c ln n + a over the given depths.
#[derive(Debug, Clone, Copy)]
pub struct MaxFit {
    pub velocity: f64,
    pub velocity_se: f64,
    pub log_coefficient: f64,
    pub log_coefficient_se: f64,
}

pub fn fit_max_medians(records: &[BrwRecord], n_lo: usize, n_hi: usize) -> MaxFit {
    let sel: Vec<&BrwRecord> = records.iter().filter(|r| r.n >= n_lo && r.n <= n_hi).collect();
    let n: Vec<f64> = sel.iter().map(|r| r.n as f64).collect();
    let y: Vec<f64> = sel.iter().map(|r| r.median).collect();
    let ls = least_squares(&[vec![1.0; n.len()], n.clone(), n.iter().map(|v| v.ln()).collect()], &y);
    MaxFit {
        velocity: ls.coef[1],
        velocity_se: ls.stderr[1],
        log_coefficient: ls.coef[2],
        log_coefficient_se: ls.stderr[2],
    }
}

/// M_depth of one explicitly generated binary tree with 2^depth leaves.
pub fn explicit_tree_cascade(beta: f64, depth: usize, rng: &mut Stream) -> Result<f64> {
    if depth > 20 {
        return Err(LabError::Domain("explicit trees are capped at depth 20".into()));
    }
    let mut level = vec![0.0_f64];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(level.len() * 2);
        for &x in &level {
            next.push(x + std_normal(rng));
            next.push(x + std_normal(rng));
        }
        level = next;
    }
    let shift = 0.5 * beta * beta * depth as f64;
    let total: f64 = level.iter().map(|&x| (beta * x - shift).exp()).sum();
    Ok(total / level.len() as f64)
}
