//! Dense linear algebra: symmetric eigendecomposition (Householder
//! tridiagonalisation followed by implicit-shift QL) and LU solves.
//!
//! Matrices are column-major so that the inner loops of both phases run over
//! contiguous memory.

use crate::error::{LabError, Result};
use crate::scalar::Scalar;

/// Square column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    n: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![F::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut m = Self::zeros(n);
        for c in 0..n {
            for r in 0..n {
                m.data[c * n + r] = f(r, c);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn column(&self, c: usize) -> &[F] {
        &self.data[c * self.n..(c + 1) * self.n]
    }

    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |m, x| m.max(x.abs()))
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|c| (0..c).all(|r| self[(r, c)] == self[(c, r)]))
    }

    pub fn mul_vec(&self, x: &[F]) -> Vec<F> {
        let mut y = vec![F::zero(); self.n];
        for (c, &xc) in x.iter().enumerate() {
            for (yr, &a) in y.iter_mut().zip(self.column(c)) {
                *yr = *yr + a * xc;
            }
        }
        y
    }
}

impl<F> std::ops::Index<(usize, usize)> for Matrix<F> {
    type Output = F;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &F {
        &self.data[c * self.n + r]
    }
}

impl<F> std::ops::IndexMut<(usize, usize)> for Matrix<F> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut F {
        &mut self.data[c * self.n + r]
    }
}

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<F> {
    pub values: Vec<F>,
    pub vectors: Matrix<F>,
}

impl<F: Scalar> SymmetricEigen<F> {
    /// max |H v_j − λ_j v_j| over all entries.
    pub fn reconstruction_error(&self, h: &Matrix<F>) -> F {
        let mut worst = F::zero();
        for (j, &lam) in self.values.iter().enumerate() {
            let v = self.vectors.column(j);
            let hv = h.mul_vec(v);
            for (a, &b) in hv.iter().zip(v) {
                worst = worst.max((*a - lam * b).abs());
            }
        }
        worst
    }

    /// max |VᵀV − I|.
    pub fn orthonormality_error(&self) -> F {
        let n = self.values.len();
        let mut worst = F::zero();
        for i in 0..n {
            for j in 0..=i {
                let dot = self
                    .vectors
                    .column(i)
                    .iter()
                    .zip(self.vectors.column(j))
                    .fold(F::zero(), |s, (&a, &b)| s + a * b);
                let target = if i == j { F::one() } else { F::zero() };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Full eigendecomposition of a real symmetric matrix.
pub fn symmetric_eig<F: Scalar>(h: &Matrix<F>) -> Result<SymmetricEigen<F>> {
    let n = h.dim();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: vec![],
            vectors: Matrix::zeros(0),
        });
    }
    if h.data.iter().any(|x| !x.is_finite()) {
        return Err(LabError::Domain("eigensolver input is not finite".into()));
    }
    let mut v = h.clone();
    let mut d = vec![F::zero(); n];
    let mut e = vec![F::zero(); n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Matrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.data[dst * n..(dst + 1) * n].copy_from_slice(v.column(src));
    }
    Ok(SymmetricEigen { values, vectors })
}

fn tred2<F: Scalar>(v: &mut Matrix<F>, d: &mut [F], e: &mut [F]) {
    let n = v.n;
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = F::zero();
        let mut h = F::zero();
        for &dk in &d[..i] {
            scale = scale + dk.abs();
        }
        if scale == F::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = F::zero();
                v[(j, i)] = F::zero();
            }
        } else {
            for dk in &mut d[..i] {
                *dk = *dk / scale;
                h = h + *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > F::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for ej in &mut e[..i] {
                *ej = F::zero();
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                let col = &v.data[j * n..j * n + i];
                let mut g = e[j] + col[j] * f;
                for k in j + 1..i {
                    g = g + col[k] * d[k];
                    e[k] = e[k] + col[k] * f;
                }
                e[j] = g;
            }
            f = F::zero();
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                let col = &mut v.data[j * n..j * n + i];
                for k in j..i {
                    col[k] = col[k] - (f * e[k] + g * d[k]);
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = F::zero();
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = F::one();
        let h = d[i + 1];
        if h != F::zero() {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let (head, tail) = v.data.split_at_mut((i + 1) * n);
                let src = &tail[..=i];
                let dst = &mut head[j * n..j * n + i + 1];
                let g = src.iter().zip(dst.iter()).fold(F::zero(), |s, (&a, &b)| s + a * b);
                for (x, &dk) in dst.iter_mut().zip(&d[..=i]) {
                    *x = *x - g * dk;
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = F::zero();
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = F::zero();
    }
    v[(n - 1, n - 1)] = F::one();
    e[0] = F::zero();
}

fn tql2<F: Scalar>(v: &mut Matrix<F>, d: &mut [F], e: &mut [F]) -> Result<()> {
    let n = v.n;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = F::zero();
    let mut f = F::zero();
    let mut tst1 = F::zero();
    let eps = F::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(LabError::Contract(format!(
                        "QL iteration did not converge for eigenvalue {l}"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (F::two() * e[l]);
                let mut r = p.hypot(F::one());
                if p < F::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[l + 2..] {
                    *di = *di - h;
                }
                f = f + h;

                p = d[m];
                let mut c = F::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = F::zero();
                let mut s2 = F::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (left, right) = v.data.split_at_mut((i + 1) * n);
                    let vi = &mut left[i * n..];
                    let vi1 = &mut right[..n];
                    for (a, b) in vi.iter_mut().zip(vi1.iter_mut()) {
                        let hb = *b;
                        *b = s * *a + c * hb;
                        *a = c * *a - s * hb;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = F::zero();
    }
    Ok(())
}

/// LU factorisation with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<F> {
    lu: Matrix<F>,
    perm: Vec<usize>,
}

impl<F: Scalar> Lu<F> {
    pub fn factor(mut a: Matrix<F>) -> Result<Self> {
        let n = a.n;
        if a.data.iter().any(|x| !x.is_finite()) {
            return Err(LabError::Contract("non-finite entry in LU input".into()));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| {
                    a[(x, k)]
                        .abs()
                        .partial_cmp(&a[(y, k)].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(k);
            if a[(p, k)] == F::zero() || !a[(p, k)].is_finite() {
                return Err(LabError::Contract("singular matrix in LU".into()));
            }
            if p != k {
                perm.swap(p, k);
                for c in 0..n {
                    a.data.swap(c * n + p, c * n + k);
                }
            }
            let piv = a[(k, k)];
            for r in k + 1..n {
                a[(r, k)] = a[(r, k)] / piv;
            }
            for c in k + 1..n {
                let akc = a[(k, c)];
                if akc == F::zero() {
                    continue;
                }
                let (head, tail) = a.data.split_at_mut(c * n);
                let lcol = &head[k * n + k + 1..k * n + n];
                let col = &mut tail[k + 1..n];
                for (x, &l) in col.iter_mut().zip(lcol) {
                    *x = *x - l * akc;
                }
            }
        }
        Ok(Lu { lu: a, perm })
    }

    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let n = self.lu.n;
        let mut x: Vec<F> = self.perm.iter().map(|&p| b[p]).collect();
        for c in 0..n {
            let xc = x[c];
            for r in c + 1..n {
                x[r] = x[r] - self.lu[(r, c)] * xc;
            }
        }
        for c in (0..n).rev() {
            x[c] = x[c] / self.lu[(c, c)];
            let xc = x[c];
            for r in 0..c {
                x[r] = x[r] - self.lu[(r, c)] * xc;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, std_normal};

    fn random_symmetric(n: usize, seed: u64) -> Matrix<f64> {
        let mut rng = derive_stream(seed, &[]);
        let mut m = Matrix::zeros(n);
        for c in 0..n {
            for r in 0..=c {
                let x = std_normal(&mut rng);
                m[(r, c)] = x;
                m[(c, r)] = x;
            }
        }
        m
    }

    #[test]
    fn diagonal_input() {
        let h = Matrix::from_fn(4, |r, c| if r == c { [3.0_f64, -1.0, 2.0, 0.5][r] } else { 0.0 });
        let eig = symmetric_eig(&h).unwrap();
        assert_eq!(eig.values, vec![-1.0, 0.5, 2.0, 3.0]);
        for (j, &src) in [1, 3, 2, 0].iter().enumerate() {
            assert_eq!(eig.vectors.column(j)[src].abs(), 1.0);
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        let (e1, e2, h) = (0.3_f64, -0.7, 0.2);
        let m = Matrix::from_fn(2, |r, c| match (r, c) {
            (0, 0) => e1,
            (1, 1) => e2,
            _ => h,
        });
        let eig = symmetric_eig(&m).unwrap();
        let mean = 0.5 * (e1 + e2);
        let half = (0.25 * (e1 - e2) * (e1 - e2) + h * h).sqrt();
        assert!((eig.values[0] - (mean - half)).abs() < 1e-15);
        assert!((eig.values[1] - (mean + half)).abs() < 1e-15);
    }

    /// Counts eigenvalues below x via Sylvester inertia of H − xI.
    fn count_below(h: &Matrix<f64>, x: f64) -> usize {
        let n = h.dim();
        let mut a = Matrix::from_fn(n, |r, c| h[(r, c)] - if r == c { x } else { 0.0 });
        let mut neg = 0;
        for k in 0..n {
            let p = a[(k, k)];
            if p < 0.0 {
                neg += 1;
            }
            for r in k + 1..n {
                let l = a[(r, k)] / p;
                for c in k + 1..n {
                    a[(r, c)] -= l * a[(k, c)];
                }
            }
        }
        neg
    }

    #[test]
    fn eigenvalues_match_inertia_bisection() {
        let h = random_symmetric(8, 3);
        let eig = symmetric_eig(&h).unwrap();
        for (k, &lam) in eig.values.iter().enumerate() {
            let (mut lo, mut hi) = (-20.0, 20.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(&h, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert!((lam - 0.5 * (lo + hi)).abs() < 1e-8);
        }
    }

    #[test]
    fn decomposition_contracts() {
        for &n in &[1, 2, 17, 64] {
            let h = random_symmetric(n, n as u64);
            let eig = symmetric_eig(&h).unwrap();
            let scale = 1e-9 * h.max_abs() * n as f64;
            assert!(eig.reconstruction_error(&h) <= scale);
            assert!(eig.orthonormality_error() <= 1e-10);
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn works_in_single_precision() {
        let h = Matrix::from_fn(6, |r, c| 1.0_f32 / (1 + r + c) as f32);
        let eig = symmetric_eig(&h).unwrap();
        assert!(eig.orthonormality_error() < 1e-5);
        assert!(eig.reconstruction_error(&h) < 1e-5);
    }

    #[test]
    fn lu_solves_random_system() {
        let n = 30;
        let mut rng = derive_stream(8, &[]);
        let a = Matrix::from_fn(n, |_, _| std_normal(&mut rng));
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 7.0).collect();
        let b = a.mul_vec(&x);
        let sol = Lu::factor(a).unwrap().solve(&b);
        for (s, t) in sol.iter().zip(&x) {
            assert!((s - t).abs() < 1e-10);
        }
        assert!(Lu::factor(Matrix::<f64>::zeros(3)).is_err());
    }
}
