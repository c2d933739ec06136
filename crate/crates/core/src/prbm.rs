//! Critical power-law random band matrices at α = 1 and their IPR scaling.

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::linalg::{symmetric_eig, Matrix};
use crate::rng::{derive_stream, std_normal, Stream};
use crate::stats::{line_fit, mean_se};

const STREAM_TAG: u64 = 0x5052;

#[derive(Debug, Clone, PartialEq)]
pub struct PrbmEnsemble {
    pub n: usize,
    pub b: f64,
    pub realizations: usize,
    pub seed: u64,
}

/// Distance on the ring Z_N.
pub fn ring_distance(n: usize, i: usize, j: usize) -> usize {
    let d = i.abs_diff(j);
    d.min(n - d)
}

/// Entry variance: 1 when d(i,j) < b, else (b/d)².
pub fn variance_profile(n: usize, b: f64, i: usize, j: usize) -> f64 {
    let d = ring_distance(n, i, j) as f64;
    if d < b {
        1.0
    } else {
        (b / d).powi(2)
    }
}

/// Gaussian symmetric matrix with the power-law variance profile.
pub fn build_matrix(n: usize, b: f64, rng: &mut Stream) -> Result<Matrix<f64>> {
    if n < 2 || !(b > 0.0) {
        return Err(LabError::Domain("need N >= 2 and b > 0".into()));
    }
    let mut upper = vec![0.0; n * (n + 1) / 2];
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            upper[k] = variance_profile(n, b, i, j).sqrt() * std_normal(rng);
            k += 1;
        }
    }
    // offset of (i, i) in the packed upper triangle
    let mut starts = Vec::with_capacity(n);
    let mut acc = 0;
    for r in 0..n {
        starts.push(acc);
        acc += n - r;
    }
    Ok(Matrix::from_fn(n, |r, c| {
        let (i, j) = if r <= c { (r, c) } else { (c, r) };
        upper[starts[i] + (j - i)]
    }))
}

/// Σ|ψ_s|^{2q} / (Σ|ψ_s|²)^q, exactly 1 at q = 1.
pub fn ipr(v: &[f64], q: f64) -> f64 {
    let norm2: f64 = v.iter().map(|x| x * x).sum();
    if q == 1.0 {
        // 1 for any non-null vector, NaN for a null one
        return if norm2 > 0.0 && norm2.is_finite() { 1.0 } else { f64::NAN };
    }
    v.iter().map(|x| (x * x / norm2).powf(q)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeStats {
    pub n: usize,
    pub q: f64,
    /// Mean over realizations of the central-half average of ln P(q, ψ).
    pub mean_ln_p: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqFit {
    pub q: f64,
    /// Slope of mean ln P against ln N, an estimate of −d(q)(q−1).
    pub slope: f64,
    pub stderr: f64,
    pub d: f64,
    pub n_list: Vec<usize>,
    pub sizes: Vec<SizeStats>,
    /// mean ln P minus the fitted line, per size.
    pub residuals: Vec<f64>,
}

/// Worst eigensolver contract values seen while estimating.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EigenDiagnostics {
    /// max ‖HV − VΛ‖_max / (‖H‖_max N)
    pub scaled_reconstruction: f64,
    pub orthonormality: f64,
}

/// Central-half averages of ln P(q, ψ) for every q, one realization.
fn realization(ens: &PrbmEnsemble, r: usize, q_list: &[f64]) -> Result<(Vec<f64>, EigenDiagnostics)> {
    let mut rng = derive_stream(ens.seed, &[STREAM_TAG, ens.n as u64, r as u64]);
    let h = build_matrix(ens.n, ens.b, &mut rng)?;
    let eig = symmetric_eig(&h)?;
    let diag = EigenDiagnostics {
        scaled_reconstruction: eig.reconstruction_error(&h) / (h.max_abs() * ens.n as f64),
        orthonormality: eig.orthonormality_error(),
    };
    let (lo, hi) = (ens.n / 4, ens.n - ens.n / 4);
    let mut out = vec![0.0; q_list.len()];
    for k in lo..hi {
        let v = eig.vectors.column(k);
        for (o, &q) in out.iter_mut().zip(q_list) {
            *o += ipr(v, q).ln();
        }
    }
    out.iter_mut().for_each(|o| *o /= (hi - lo) as f64);
    Ok((out, diag))
}

/// Per-size statistics for all q; realizations run in parallel.
pub fn size_stats(ens: &PrbmEnsemble, q_list: &[f64]) -> Result<(Vec<SizeStats>, EigenDiagnostics)> {
    if ens.n < 64 || ens.realizations < 2 {
        return Err(LabError::Domain("need N >= 64 and at least two realizations".into()));
    }
    let runs: Result<Vec<_>> = (0..ens.realizations)
        .into_par_iter()
        .map(|r| realization(ens, r, q_list))
        .collect();
    let runs = runs?;
    let mut diag = EigenDiagnostics::default();
    for (_, d) in &runs {
        diag.scaled_reconstruction = diag.scaled_reconstruction.max(d.scaled_reconstruction);
        diag.orthonormality = diag.orthonormality.max(d.orthonormality);
    }
    let stats = q_list
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            let xs: Vec<f64> = runs.iter().map(|(v, _)| v[k]).collect();
            let (mean_ln_p, se) = mean_se(&xs);
            SizeStats {
                n: ens.n,
                q,
                mean_ln_p,
                se,
            }
        })
        .collect();
    Ok((stats, diag))
}

/// Regression of mean ln P on ln N over `n_list` for each q.
pub fn estimate_dq(
    b: f64,
    n_list: &[usize],
    realizations: usize,
    seed: u64,
    q_list: &[f64],
) -> Result<(Vec<DqFit>, EigenDiagnostics)> {
    if n_list.len() < 3 {
        return Err(LabError::Domain("d(q) fit needs at least three sizes".into()));
    }
    let mut per_size = Vec::with_capacity(n_list.len());
    let mut diag = EigenDiagnostics::default();
    for &n in n_list {
        let ens = PrbmEnsemble {
            n,
            b,
            realizations,
            seed,
        };
        let (s, d) = size_stats(&ens, q_list)?;
        diag.scaled_reconstruction = diag.scaled_reconstruction.max(d.scaled_reconstruction);
        diag.orthonormality = diag.orthonormality.max(d.orthonormality);
        per_size.push(s);
    }
    let x: Vec<f64> = n_list.iter().map(|&n| (n as f64).ln()).collect();
    let fits = q_list
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            let sizes: Vec<SizeStats> = per_size.iter().map(|s| s[k]).collect();
            let y: Vec<f64> = sizes.iter().map(|s| s.mean_ln_p).collect();
            let fit = line_fit(&x, &y);
            let residuals = x
                .iter()
                .zip(&y)
                .map(|(xi, yi)| yi - (fit.intercept + fit.slope * xi))
                .collect();
            let d = if q == 1.0 { 0.0 } else { -fit.slope / (q - 1.0) };
            DqFit {
                q,
                slope: fit.slope,
                stderr: fit.slope_se,
                d,
                n_list: n_list.to_vec(),
                sizes,
                residuals,
            }
        })
        .collect();
    Ok((fits, diag))
}
