//! Small dense linear algebra layer: a scalar abstraction over real and
//! complex entries, a row-major matrix, Gram products and Cholesky solves.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Field scalar: `f64` for β = 1, `Complex64` for β = 2.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const BETA: u8;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_real(x: f64) -> Self;
    /// Builds `re + i·im`; real scalars drop the imaginary part.
    fn from_parts(re: f64, im: f64) -> Self;
    fn re(self) -> f64;
    fn im(self) -> f64;
    fn conj(self) -> Self;
    fn abs_sq(self) -> f64;

    #[inline]
    fn abs(self) -> f64 {
        self.abs_sq().sqrt()
    }

    /// Unit-modulus factor `z/|z|`, or one at zero.
    #[inline]
    fn phase(self) -> Self {
        let a = self.abs();
        if a == 0.0 {
            Self::one()
        } else {
            self * Self::from_real(1.0 / a)
        }
    }

    #[inline]
    fn scale(self, s: f64) -> Self {
        self * Self::from_real(s)
    }
}

impl Scalar for f64 {
    const BETA: u8 = 1;

    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn from_real(x: f64) -> Self {
        x
    }
    #[inline]
    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn im(self) -> f64 {
        0.0
    }
    #[inline]
    fn conj(self) -> Self {
        self
    }
    #[inline]
    fn abs_sq(self) -> f64 {
        self * self
    }
    #[inline]
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    #[inline]
    fn phase(self) -> Self {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
    #[inline]
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

impl Scalar for Complex64 {
    const BETA: u8 = 2;

    #[inline]
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    #[inline]
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    #[inline]
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    #[inline]
    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    #[inline]
    fn im(self) -> f64 {
        self.im
    }
    #[inline]
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    #[inline]
    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }
    #[inline]
    fn scale(self, s: f64) -> Self {
        Complex64::new(self.re * s, self.im * s)
    }
}

/// `Σ conj(a_i) b_i`
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc
}

#[inline]
pub fn norm_sq<S: Scalar>(a: &[S]) -> f64 {
    a.iter().map(|x| x.abs_sq()).sum()
}

#[inline]
pub fn norm<S: Scalar>(a: &[S]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

/// `Σ a_j b_j` with eight interleaved partial sums.
fn row_dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = [S::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = S::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7])) + tail
}

impl<S: Scalar> DenseMatrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn diagonal(diag: &[S]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<S> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn conj_transpose(&self) -> Self {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    /// `y = A x`
    pub fn matvec_into(&self, x: &[S], y: &mut [S]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = row_dot(self.row(i), x);
        }
    }

    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        let mut y = vec![S::zero(); self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = A* x`
    pub fn adjoint_matvec_into(&self, x: &[S], y: &mut [S]) {
        assert_eq!(x.len(), self.rows);
        assert_eq!(y.len(), self.cols);
        y.iter_mut().for_each(|v| *v = S::zero());
        for (i, &xi) in x.iter().enumerate() {
            let row = self.row(i);
            for (yj, &a) in y.iter_mut().zip(row) {
                *yj += a.conj() * xi;
            }
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for (k, &a) in self.row(i).iter().enumerate() {
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> S {
        (0..self.rows.min(self.cols)).fold(S::zero(), |acc, i| acc + self[(i, i)])
    }

    /// Largest `|A_ij - conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).abs());
            }
        }
        worst
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(i)) {
                *s += v.abs();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }
}

impl<S> std::ops::Index<(usize, usize)> for DenseMatrix<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for DenseMatrix<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

/// Householder vector `v`, factor `τ` and image `α` with `(I − τvv*)u = αe₁`.
/// `None` when `u` is already a nonnegative multiple of `e₁`.
pub(crate) fn householder<S: Scalar>(u: &[S]) -> Option<(Vec<S>, f64, S)> {
    let nrm = norm(u);
    let tail = norm_sq(&u[1..]);
    if nrm == 0.0 || (tail == 0.0 && u[0].im() == 0.0 && u[0].re() >= 0.0) {
        return None;
    }
    let alpha = -u[0].phase().scale(nrm);
    let mut v = u.to_vec();
    v[0] -= alpha;
    let tau = 2.0 / norm_sq(&v);
    Some((v, tau, alpha))
}

/// Real product `A Bᵀ` for row-major `a` (n×m) and `b` (p×m), scaled by `alpha`
/// and accumulated into `c` (n×p) with weight `beta`.
fn gemm_abt(alpha: f64, a: &[f64], b: &[f64], n: usize, p: usize, m: usize, beta: f64, c: &mut [f64]) {
    debug_assert_eq!(a.len(), n * m);
    debug_assert_eq!(b.len(), p * m);
    debug_assert_eq!(c.len(), n * p);
    // SAFETY: slice lengths match the dimensions and strides passed below.
    unsafe {
        matrixmultiply::dgemm(
            n,
            m,
            p,
            alpha,
            a.as_ptr(),
            m as isize,
            1,
            b.as_ptr(),
            1,
            m as isize,
            beta,
            c.as_mut_ptr(),
            p as isize,
            1,
        );
    }
}

/// Gram matrix `X Xᵀ / scale` for a real `X`.
pub fn gram_real(x: &DenseMatrix<f64>, scale: f64) -> DenseMatrix<f64> {
    let (n, m) = (x.rows, x.cols);
    let mut c = vec![0.0; n * n];
    gemm_abt(1.0 / scale, &x.data, &x.data, n, n, m, 0.0, &mut c);
    symmetrize(&mut c, n, false);
    DenseMatrix { rows: n, cols: n, data: c }
}

/// Gram matrix `X X* / scale` for a complex `X` given as separate real and
/// imaginary parts: `(A + iB)(Aᵀ - iBᵀ) = AAᵀ + BBᵀ + i(BAᵀ - ABᵀ)`.
pub fn gram_complex(re: &DenseMatrix<f64>, im: &DenseMatrix<f64>, scale: f64) -> DenseMatrix<Complex64> {
    let (n, m) = (re.rows, re.cols);
    assert_eq!((im.rows, im.cols), (n, m));
    let s = 1.0 / scale;
    let mut real = vec![0.0; n * n];
    gemm_abt(s, &re.data, &re.data, n, n, m, 0.0, &mut real);
    gemm_abt(s, &im.data, &im.data, n, n, m, 1.0, &mut real);
    let mut imag = vec![0.0; n * n];
    gemm_abt(s, &im.data, &re.data, n, n, m, 0.0, &mut imag);
    gemm_abt(-s, &re.data, &im.data, n, n, m, 1.0, &mut imag);
    symmetrize(&mut real, n, false);
    symmetrize(&mut imag, n, true);
    for i in 0..n {
        imag[i * n + i] = 0.0;
    }
    let data = real
        .into_iter()
        .zip(imag)
        .map(|(r, i)| Complex64::new(r, i))
        .collect();
    DenseMatrix { rows: n, cols: n, data }
}

/// Forces exact symmetry (or antisymmetry) by averaging mirrored entries.
fn symmetrize(c: &mut [f64], n: usize, antisymmetric: bool) {
    let sign = if antisymmetric { -1.0 } else { 1.0 };
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (c[i * n + j] + sign * c[j * n + i]);
            c[i * n + j] = v;
            c[j * n + i] = sign * v;
        }
    }
}

/// Lower Cholesky factor `L` with `A = L L*`.
#[derive(Clone, Debug)]
pub struct Cholesky<S> {
    factor: DenseMatrix<S>,
}

impl<S: Scalar> Cholesky<S> {
    pub fn new(a: &DenseMatrix<S>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Shape(format!("Cholesky of {}x{} matrix", a.rows, a.cols)));
        }
        let n = a.rows;
        let mut l = DenseMatrix::<S>::zeros(n, n);
        for j in 0..n {
            let diag = a[(j, j)].re() - norm_sq(&l.row(j)[..j]);
            if !(diag > 0.0 && diag.is_finite()) {
                return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
            }
            let djj = diag.sqrt();
            l[(j, j)] = S::from_real(djj);
            // column j below the diagonal, computed row by row
            for i in (j + 1)..n {
                let (top, bottom) = l.data.split_at_mut(i * n);
                let lj = &top[j * n..j * n + j];
                let li = &mut bottom[..n];
                let mut acc = a[(i, j)];
                for (&x, &y) in li[..j].iter().zip(lj) {
                    acc -= x * y.conj();
                }
                li[j] = acc.scale(1.0 / djj);
            }
        }
        Ok(Cholesky { factor: l })
    }

    pub fn factor(&self) -> &DenseMatrix<S> {
        &self.factor
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.factor.rows;
        assert_eq!(b.len(), n);
        let l = &self.factor;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = l.row(i);
            let mut acc = y[i];
            for (&lik, &yk) in row[..i].iter().zip(&y[..i]) {
                acc -= lik * yk;
            }
            y[i] = acc.scale(1.0 / row[i].re());
        }
        // back substitution with L*
        for i in (0..n).rev() {
            let yi = y[i].scale(1.0 / l[(i, i)].re());
            y[i] = yi;
            let row = l.row(i);
            for (yk, &lik) in y[..i].iter_mut().zip(&row[..i]) {
                *yk -= lik.conj() * yi;
            }
        }
        y
    }
}
