//! Small statistics toolkit: block jackknife, least squares, order
//! statistics, Kolmogorov–Smirnov distance.

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Delete-one jackknife over equally weighted blocks.
///
/// `blocks[b]` holds the per-block means of some observables; `stat` maps a
/// vector of pooled means to the quantity of interest. Returns the full-sample
/// estimate and its jackknife standard error.
pub fn jackknife<G: Fn(&[f64]) -> f64>(blocks: &[Vec<f64>], stat: G) -> (f64, f64) {
    let nb = blocks.len();
    assert!(nb >= 2, "jackknife needs at least two blocks");
    let dim = blocks[0].len();
    let mut total = vec![0.0; dim];
    for b in blocks {
        for (t, x) in total.iter_mut().zip(b) {
            *t += x;
        }
    }
    let full: Vec<f64> = total.iter().map(|t| t / nb as f64).collect();
    let est = stat(&full);
    let loo: Vec<f64> = blocks
        .iter()
        .map(|b| {
            let m: Vec<f64> = total.iter().zip(b).map(|(t, x)| (t - x) / (nb - 1) as f64).collect();
            stat(&m)
        })
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / nb as f64;
    let var = loo.iter().map(|x| (x - loo_mean).powi(2)).sum::<f64>() * (nb - 1) as f64 / nb as f64;
    (est, var.sqrt())
}

/// Ordinary least squares with coefficient standard errors.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: Vec<f64>,
    pub stderr: Vec<f64>,
    pub residual_ss: f64,
}

/// Solves min |X β − y|² for a design given column by column, by Householder QR.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> LeastSquares {
    let m = y.len();
    let p = columns.len();
    assert!(m >= p && p > 0, "underdetermined fit");
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut rhs = y.to_vec();
    for k in 0..p {
        let norm = a[k][k..].iter().map(|x| x * x).sum::<f64>().sqrt();
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let reflect = |col: &mut [f64]| {
            let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= f * vi;
            }
        };
        for col in a.iter_mut().skip(k) {
            reflect(&mut col[k..]);
        }
        reflect(&mut rhs[k..]);
    }
    // R is upper triangular with R[i][j] = a[j][i] (i < j) and R[k][k] = a[k][k]
    let mut coef = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = rhs[i];
        for j in i + 1..p {
            s -= a[j][i] * coef[j];
        }
        coef[i] = s / a[i][i];
    }
    let residual_ss: f64 = rhs[p..].iter().map(|x| x * x).sum();
    // (RᵀR)⁻¹ diagonal via R⁻¹
    let mut rinv = vec![vec![0.0; p]; p];
    for j in 0..p {
        rinv[j][j] = 1.0 / a[j][j];
        for i in (0..j).rev() {
            let mut s = 0.0;
            for k in i + 1..=j {
                s += a[k][i] * rinv[k][j];
            }
            rinv[i][j] = -s / a[i][i];
        }
    }
    let sigma2 = if m > p { residual_ss / (m - p) as f64 } else { f64::NAN };
    let stderr = (0..p)
        .map(|i| (sigma2 * (i..p).map(|j| rinv[i][j] * rinv[i][j]).sum::<f64>()).sqrt())
        .collect();
    LeastSquares {
        coef,
        stderr,
        residual_ss,
    }
}

/// Straight-line fit y = intercept + slope·x.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

pub fn line_fit(x: &[f64], y: &[f64]) -> LineFit {
    let ls = least_squares(&[vec![1.0; x.len()], x.to_vec()], y);
    LineFit {
        slope: ls.coef[1],
        intercept: ls.coef[0],
        slope_se: ls.stderr[1],
    }
}

/// Median by selection; the slice is reordered.
pub fn median(xs: &mut [f64]) -> f64 {
    let n = xs.len();
    assert!(n > 0);
    let (_, &mut hi, _) = xs.select_nth_unstable_by(n / 2, |a, b| a.total_cmp(b));
    if n % 2 == 1 {
        hi
    } else {
        let lo = xs[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// sup |F_n − F| for a sample against a continuous distribution function.
pub fn ks_distance<G: Fn(f64) -> f64>(samples: &mut [f64], cdf: G) -> f64 {
    samples.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Gaussian kernel density estimate at `x` with Silverman's bandwidth.
pub fn kde_at(xs: &[f64], x: f64) -> f64 {
    let (m, _) = mean_se(xs);
    let n = xs.len() as f64;
    let sd = (xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let bw = 1.06 * sd * n.powf(-0.2);
    let norm = 1.0 / (n * bw * (2.0 * std::f64::consts::PI).sqrt());
    norm * xs.iter().map(|v| (-0.5 * ((x - v) / bw).powi(2)).exp()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, std_normal};
    use proptest::prelude::*;

    #[test]
    fn exact_line_recovered() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = line_fit(&x, &y);
        assert!((f.slope + 0.5).abs() < 1e-13);
        assert!((f.intercept - 2.0).abs() < 1e-13);
    }

    #[test]
    fn three_term_fit() {
        let n: Vec<f64> = (10..=40).map(|i| i as f64).collect();
        let y: Vec<f64> = n.iter().map(|v| 1.17 * v - 1.27 * v.ln() + 0.3).collect();
        let ls = least_squares(&[vec![1.0; n.len()], n.clone(), n.iter().map(|v| v.ln()).collect()], &y);
        assert!((ls.coef[1] - 1.17).abs() < 1e-10);
        assert!((ls.coef[2] + 1.27).abs() < 1e-9);
    }

    #[test]
    fn slope_stderr_matches_textbook() {
        let mut rng = derive_stream(2, &[]);
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v + std_normal(&mut rng)).collect();
        let f = line_fit(&x, &y);
        let xm = x.iter().sum::<f64>() / 200.0;
        let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
        let resid: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (b - f.intercept - f.slope * a).powi(2))
            .sum();
        let want = (resid / 198.0 / sxx).sqrt();
        assert!((f.slope_se - want).abs() < 1e-12);
    }

    #[test]
    fn jackknife_of_mean_is_block_se() {
        let blocks: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 * 0.3]).collect();
        let flat: Vec<f64> = blocks.iter().map(|b| b[0]).collect();
        let (m, se) = jackknife(&blocks, |v| v[0]);
        let (m2, se2) = mean_se(&flat);
        assert!((m - m2).abs() < 1e-14 && (se - se2).abs() < 1e-14);
    }

    #[test]
    fn median_and_ks() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        let mut u: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_distance(&mut u, |x| x) - 0.005).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn median_splits_sample(xs in proptest::collection::vec(-1e3f64..1e3, 1..60)) {
            let m = median(&mut xs.clone());
            let below = xs.iter().filter(|&&x| x < m).count();
            let above = xs.iter().filter(|&&x| x > m).count();
            prop_assert!(below <= xs.len() / 2 && above <= xs.len() / 2);
        }

        #[test]
        fn line_fit_is_affine_equivariant(a in -5.0f64..5.0, c in -5.0f64..5.0) {
            let x: Vec<f64> = (0..12).map(|i| (i * i) as f64 * 0.1).collect();
            let y: Vec<f64> = x.iter().map(|v| (v * 1.3).sin()).collect();
            let base = line_fit(&x, &y);
            let y2: Vec<f64> = y.iter().zip(&x).map(|(v, u)| v + a * u + c).collect();
            let f = line_fit(&x, &y2);
            prop_assert!((f.slope - base.slope - a).abs() < 1e-9);
            prop_assert!((f.slope_se - base.slope_se).abs() < 1e-9);
        }
    }
}
