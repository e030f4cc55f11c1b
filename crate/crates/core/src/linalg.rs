//! Dense complex linear algebra on top of `nalgebra`.
//!
//! Large complex products are evaluated as four real products on the split
//! real/imaginary parts. `nalgebra` routes real `f32`/`f64` products through
//! its blocked kernels, which are several times faster than its generic
//! complex path at the sizes used here (64x64 and wider).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Relative pivot threshold below which a Hermitian matrix is treated as
/// not positive definite.
pub const PD_TOLERANCE: f64 = 1e-12;

#[inline]
pub fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Splits a complex matrix into its real and imaginary parts.
pub fn split<T: Real>(a: &CMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

pub fn join<T: Real>(re: &DMatrix<T>, im: &DMatrix<T>) -> CMatrix<T> {
    re.zip_map(im, |r, i| Complex::new(r, i))
}

/// Product `a * b` of already split operands.
pub fn matmul_split<T: Real>(
    (ar, ai): (&DMatrix<T>, &DMatrix<T>),
    (br, bi): (&DMatrix<T>, &DMatrix<T>),
) -> (DMatrix<T>, DMatrix<T>) {
    let mut re = DMatrix::zeros(ar.nrows(), br.ncols());
    let mut im = DMatrix::zeros(ar.nrows(), br.ncols());
    re.gemm(T::one(), ar, br, T::zero());
    re.gemm(-T::one(), ai, bi, T::one());
    im.gemm(T::one(), ar, bi, T::zero());
    im.gemm(T::one(), ai, br, T::one());
    (re, im)
}

/// Complex product `a * b`.
pub fn matmul<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    assert_eq!(a.ncols(), b.nrows(), "matmul: inner dimensions differ");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let (re, im) = matmul_split((&ar, &ai), (&br, &bi));
    join(&re, &im)
}

/// Complex product `a^H * b`.
pub fn adjoint_mul<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    assert_eq!(a.nrows(), b.nrows(), "adjoint_mul: row counts differ");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let mut re = DMatrix::zeros(a.ncols(), b.ncols());
    let mut im = DMatrix::zeros(a.ncols(), b.ncols());
    re.gemm_tr(T::one(), &ar, &br, T::zero());
    re.gemm_tr(T::one(), &ai, &bi, T::one());
    im.gemm_tr(T::one(), &ar, &bi, T::zero());
    im.gemm_tr(-T::one(), &ai, &br, T::one());
    join(&re, &im)
}

/// Gram matrix `h * h^H`, returned exactly Hermitian.
pub fn gram<T: Real>(h: &CMatrix<T>) -> CMatrix<T> {
    let (hr, hi) = split(h);
    gram_split(&hr, &hi)
}

/// [`gram`] of an already split matrix.
///
/// The imaginary part is `X - X^T` with `X = hi hr^T`, so three real
/// products suffice.
pub fn gram_split<T: Real>(hr: &DMatrix<T>, hi: &DMatrix<T>) -> CMatrix<T> {
    let m = hr.nrows();
    let mut re = DMatrix::zeros(m, m);
    let mut x = DMatrix::zeros(m, m);
    let hr_t = hr.transpose();
    re.gemm(T::one(), hr, &hr_t, T::zero());
    re.gemm(T::one(), hi, &hi.transpose(), T::one());
    x.gemm(T::one(), hi, &hr_t, T::zero());
    CMatrix::from_fn(m, m, |a, b| {
        let r = (re[(a, b)] + re[(b, a)]) * T::lit(0.5);
        Complex::new(r, x[(a, b)] - x[(b, a)])
    })
}

/// `(a + a^H) / 2`.
pub fn hermitian_part<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    let half = T::lit(0.5);
    let n = a.nrows();
    CMatrix::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()).scale(half))
}

/// Adds `s` to every diagonal entry.
pub fn add_scaled_identity<T: Real>(a: &mut CMatrix<T>, s: T) {
    for i in 0..a.nrows().min(a.ncols()) {
        a[(i, i)].re += s;
    }
}

pub fn trace<T: Real>(a: &CMatrix<T>) -> Complex<T> {
    (0..a.nrows().min(a.ncols())).fold(czero(), |acc, i| acc + a[(i, i)])
}

/// `tr(a * b^H)`, the Frobenius inner product.
pub fn frobenius_inner<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Complex<T> {
    a.iter()
        .zip(b.iter())
        .fold(czero(), |acc, (x, y)| acc + *x * y.conj())
}

pub fn frobenius_norm<T: Real>(a: &CMatrix<T>) -> T {
    a.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
}

/// Cholesky factorization of a Hermitian matrix, rejecting matrices whose
/// smallest pivot is below [`PD_TOLERANCE`] relative to the largest diagonal
/// entry.
pub fn cholesky<T: Real>(a: &CMatrix<T>) -> Result<Cholesky<Complex<T>, Dyn>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Structural(format!(
            "cholesky of non-square {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = (0..a.nrows()).fold(T::zero(), |m, i| m.max(a[(i, i)].re.abs()));
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))?;
    let tol = T::lit(PD_TOLERANCE) * scale;
    let l = chol.l_dirty();
    for i in 0..a.nrows() {
        let pivot = l[(i, i)].re;
        if !(pivot * pivot > tol) {
            return Err(Error::Numeric(format!(
                "matrix is numerically singular (pivot {i})"
            )));
        }
    }
    Ok(chol)
}

/// Inverse of a Hermitian positive definite matrix, exactly Hermitian.
pub fn hpd_inverse<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    Ok(hermitian_part(&cholesky(a)?.inverse()))
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen<T: Real>(a: &CMatrix<T>) -> (Vec<T>, CMatrix<T>) {
    let eig = hermitian_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[x]
            .partial_cmp(&eig.eigenvalues[y])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(a.nrows(), a.ncols(), |r, col| {
        eig.eigenvectors[(r, order[col])]
    });
    (values, vectors)
}

/// PSD square root `U diag(sqrt(λ)) U^H`.
///
/// Eigenvalues below `n * eps * λ_max` are rounding noise of a rank-deficient
/// matrix and are treated as zero.
pub fn hermitian_sqrt<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    let (values, vectors) = hermitian_eigen(a);
    let n = a.nrows();
    let top = values.last().copied().unwrap_or_else(T::zero).max(T::zero());
    let floor = top * T::epsilon() * T::lit(n as f64);
    let mut scaled = vectors.clone();
    for (j, &lambda) in values.iter().enumerate() {
        let s = if lambda > floor { lambda.sqrt() } else { T::zero() };
        for i in 0..n {
            scaled[(i, j)] = scaled[(i, j)].scale(s);
        }
    }
    let root = scaled * vectors.adjoint();
    hermitian_part(&root)
}

/// Vector of i.i.d. `CN(0, 1)` entries.
pub fn complex_gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R, len: usize) -> CVector<T> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_fn(len, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(T::lit(re * s), T::lit(im * s))
    })
}

/// Hermitian Toeplitz matrix stored by its first column.
///
/// Entry `(m, n)` is `col[m - n]` for `m >= n` and `conj(col[n - m])`
/// otherwise. Correlation matrices of a uniform linear array have this
/// structure, so an `M x M` matrix costs `M` complex numbers to keep around.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianToeplitz<T: Real> {
    col: Vec<Complex<T>>,
}

impl<T: Real> HermitianToeplitz<T> {
    /// The imaginary part of `col[0]` is dropped so the matrix is Hermitian.
    pub fn new(mut col: Vec<Complex<T>>) -> Self {
        if let Some(d) = col.first_mut() {
            d.im = T::zero();
        }
        Self { col }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![czero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.col.len()
    }

    pub fn first_column(&self) -> &[Complex<T>] {
        &self.col
    }

    #[inline]
    pub fn entry(&self, m: usize, n: usize) -> Complex<T> {
        if m >= n {
            self.col[m - n]
        } else {
            self.col[n - m].conj()
        }
    }

    pub fn to_matrix(&self) -> CMatrix<T> {
        let n = self.dim();
        CMatrix::from_fn(n, n, |m, k| self.entry(m, k))
    }

    /// Writes the dense matrix into columns `offset..offset + dim` of `re`/`im`.
    pub fn write_split(&self, re: &mut DMatrix<T>, im: &mut DMatrix<T>, offset: usize) {
        let n = self.dim();
        for k in 0..n {
            for m in 0..n {
                let z = self.entry(m, k);
                re[(m, offset + k)] = z.re;
                im[(m, offset + k)] = z.im;
            }
        }
    }

    pub fn trace(&self) -> T {
        self.col
            .first()
            .map_or(T::zero(), |d| d.re * T::lit(self.dim() as f64))
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &CVector<T>) -> CVector<T> {
        let n = self.dim();
        let mut out = CVector::from_element(n, czero());
        for m in 0..n {
            let mut acc = czero();
            for k in 0..=m {
                acc += self.col[m - k] * x[k];
            }
            for k in m + 1..n {
                acc += self.col[k - m].conj() * x[k];
            }
            out[m] = acc;
        }
        out
    }

    /// `Re tr(self * other^H)` in `O(M)`.
    pub fn inner(&self, other: &Self) -> T {
        let n = self.dim();
        let mut acc = T::lit(n as f64) * (self.col[0] * other.col[0].conj()).re;
        for d in 1..n {
            let w = T::lit(2.0 * (n - d) as f64);
            acc += w * (self.col[d] * other.col[d].conj()).re;
        }
        acc
    }

    pub fn frobenius_norm(&self) -> T {
        self.inner(self).max(T::zero()).sqrt()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.col.iter_mut().zip(&other.col) {
            *a += *b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix<f64> {
        let v = complex_gaussian::<f64, _>(rng, r * c);
        CMatrix::from_iterator(r, c, v.iter().copied())
    }

    fn max_abs_diff(a: &CMatrix<f64>, b: &CMatrix<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn split_products_match_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 7, 5);
        let b = random_matrix(&mut rng, 5, 9);
        let d = random_matrix(&mut rng, 7, 4);
        assert!(max_abs_diff(&matmul(&a, &b), &(&a * &b)) < 1e-12);
        assert!(max_abs_diff(&adjoint_mul(&a, &d), &(a.adjoint() * &d)) < 1e-12);
        assert!(max_abs_diff(&gram(&a), &(&a * a.adjoint())) < 1e-12);
    }

    #[test]
    fn toeplitz_dense_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let col: Vec<_> = complex_gaussian::<f64, _>(&mut rng, 6).iter().copied().collect();
        let t = HermitianToeplitz::new(col);
        let dense = t.to_matrix();
        assert!(max_abs_diff(&dense, &dense.adjoint()) == 0.0);
        let x = complex_gaussian::<f64, _>(&mut rng, 6);
        let y = t.mul_vec(&x);
        assert!((y - &dense * &x).norm() < 1e-12);
        let col2: Vec<_> = complex_gaussian::<f64, _>(&mut rng, 6).iter().copied().collect();
        let u = HermitianToeplitz::new(col2);
        let direct = frobenius_inner(&dense, &u.to_matrix());
        assert!((t.inner(&u) - direct.re).abs() < 1e-12);
        assert!(direct.im.abs() < 1e-12);
        assert!((t.trace() - trace(&dense).re).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite_and_singular() {
        let mut a = CMatrix::<f64>::identity(3, 3);
        a[(2, 2)] = c(-1.0, 0.0);
        assert!(matches!(cholesky(&a), Err(Error::Numeric(_))));
        let mut s = CMatrix::<f64>::identity(3, 3);
        s[(1, 1)] = c(1e-14, 0.0);
        assert!(matches!(cholesky(&s), Err(Error::Numeric(_))));
        assert!(cholesky(&CMatrix::<f64>::identity(3, 3)).is_ok());
    }

    #[test]
    fn sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_matrix(&mut rng, 5, 3);
        let r = gram(&h);
        let s = hermitian_sqrt(&r);
        assert!(max_abs_diff(&(&s * &s), &r) < 1e-10);
        let (values, _) = hermitian_eigen(&r);
        assert!(values[0].abs() < 1e-10 && values[1].abs() < 1e-10);
        assert!(values[2] > 0.0);
    }

    #[test]
    fn inverse_is_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_matrix(&mut rng, 4, 6);
        let mut a = gram(&h);
        add_scaled_identity(&mut a, 0.1);
        let inv = hpd_inverse(&a).unwrap();
        assert!(max_abs_diff(&(&a * &inv), &CMatrix::identity(4, 4)) < 1e-12);
    }

    #[test]
    fn runs_in_single_precision() {
        let t = HermitianToeplitz::<f32>::new(vec![c(2.0, 0.0), c(0.5, 0.25), c(0.1, 0.0)]);
        let dense = t.to_matrix();
        let chol = cholesky(&dense).unwrap();
        let x = CVector::<f32>::from_element(3, c(1.0, 0.0));
        let y = chol.solve(&t.mul_vec(&x));
        assert!((y - x).norm() < 1e-5);
    }
}
