//! Krylov iterations: conjugate gradient with trajectory capture, Lanczos
//! tridiagonalization and Householder bidiagonalization.

use serde::{Deserialize, Serialize};

use crate::dense::{axpy, dot, householder, norm, norm_sq, DenseMatrix, Scalar};
use crate::ensembles::BidiagonalChi;
use crate::error::{Error, Result};
use crate::spectral::{eigen_dense, EigenDecomposition};

/// CG stops once `‖r_k‖₂ < RESIDUAL_FLOOR · ‖b‖₂`; below this level
/// round-off dominates and exact-arithmetic statements no longer apply.
pub const RESIDUAL_FLOOR: f64 = 1e-13;

/// Relative Lanczos breakdown threshold against a norm estimate of `W`.
pub const LANCZOS_BREAKDOWN: f64 = 1e-12;

/// A Hermitian positive (semi)definite operator applied matrix-free.
pub trait LinearOperator<S: Scalar>: Sync {
    fn dim(&self) -> usize;

    /// `out = W x`
    fn apply(&self, x: &[S], out: &mut [S]);

    /// Cheap upper estimate of `‖W‖`, when available.
    fn norm_estimate(&self) -> Option<f64> {
        None
    }
}

/// Operators that also admit a direct solve and a full eigendecomposition.
pub trait ExactSolver<S: Scalar>: LinearOperator<S> {
    fn solve(&self, b: &[S]) -> Result<Vec<S>>;
    fn eigen(&self) -> Result<EigenDecomposition<S>>;
}

impl<S: Scalar> LinearOperator<S> for DenseMatrix<S> {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[S], out: &mut [S]) {
        self.matvec_into(x, out);
    }

    fn norm_estimate(&self) -> Option<f64> {
        Some(self.norm_one())
    }
}

impl<S: Scalar> ExactSolver<S> for DenseMatrix<S> {
    fn solve(&self, b: &[S]) -> Result<Vec<S>> {
        Ok(crate::dense::Cholesky::new(self)?.solve(b))
    }

    fn eigen(&self) -> Result<EigenDecomposition<S>> {
        eigen_dense(self)
    }
}

/// `W = X X* / scale` applied without forming `W`.
#[derive(Clone, Debug)]
pub struct GramOperator<S> {
    x: DenseMatrix<S>,
    scale: f64,
}

impl<S: Scalar> GramOperator<S> {
    pub fn new(x: DenseMatrix<S>, scale: f64) -> Self {
        GramOperator { x, scale }
    }

    pub fn factor(&self) -> &DenseMatrix<S> {
        &self.x
    }
}

impl<S: Scalar> LinearOperator<S> for GramOperator<S> {
    fn dim(&self) -> usize {
        self.x.rows()
    }

    fn apply(&self, v: &[S], out: &mut [S]) {
        let mut tmp = vec![S::zero(); self.x.cols()];
        self.x.adjoint_matvec_into(v, &mut tmp);
        self.x.matvec_into(&tmp, out);
        let s = 1.0 / self.scale;
        out.iter_mut().for_each(|o| *o = o.scale(s));
    }
}

/// Symmetric tridiagonal (Jacobi) matrix with diagonal `alpha` and
/// off-diagonal `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricTridiagonal {
    alpha: Vec<f64>,
    b: Vec<f64>,
}

impl SymmetricTridiagonal {
    pub fn new(alpha: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if b.len() + 1 != alpha.len() && !(alpha.is_empty() && b.is_empty()) {
            return Err(Error::Shape(format!(
                "tridiagonal with {} diagonal and {} off-diagonal entries",
                alpha.len(),
                b.len()
            )));
        }
        Ok(SymmetricTridiagonal { alpha, b })
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.alpha
    }

    pub fn off_diagonal(&self) -> &[f64] {
        &self.b
    }

    /// Upper-left `k × k` block `T_k`.
    pub fn leading(&self, k: usize) -> SymmetricTridiagonal {
        let k = k.min(self.dim());
        SymmetricTridiagonal {
            alpha: self.alpha[..k].to_vec(),
            b: self.b[..k.saturating_sub(1)].to_vec(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix<f64> {
        let n = self.dim();
        let mut t = DenseMatrix::zeros(n, n);
        for i in 0..n {
            t[(i, i)] = self.alpha[i];
            if i + 1 < n {
                t[(i, i + 1)] = self.b[i];
                t[(i + 1, i)] = self.b[i];
            }
        }
        t
    }

    /// `det(T − λI)` by the three-term recurrence.
    pub fn char_poly(&self, lambda: f64) -> f64 {
        let mut prev = 1.0;
        let mut cur = 1.0;
        for (i, &a) in self.alpha.iter().enumerate() {
            let next = if i == 0 {
                a - lambda
            } else {
                (a - lambda) * cur - self.b[i - 1].powi(2) * prev
            };
            prev = cur;
            cur = next;
        }
        cur
    }

    /// Gershgorin bound on the spectral radius.
    pub fn gershgorin_norm(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                let left = if i > 0 { self.b[i - 1].abs() } else { 0.0 };
                let right = self.b.get(i).map_or(0.0, |v| v.abs());
                self.alpha[i].abs() + left + right
            })
            .fold(0.0, f64::max)
    }
}

impl LinearOperator<f64> for SymmetricTridiagonal {
    fn dim(&self) -> usize {
        self.alpha.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.alpha.len();
        for i in 0..n {
            let mut acc = self.alpha[i] * x[i];
            if i > 0 {
                acc += self.b[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.b[i] * x[i + 1];
            }
            out[i] = acc;
        }
    }

    fn norm_estimate(&self) -> Option<f64> {
        Some(self.gershgorin_norm())
    }
}

impl ExactSolver<f64> for SymmetricTridiagonal {
    /// LDLᵀ solve without pivoting; valid for positive definite `T`.
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::Shape(format!("rhs of length {} for dimension {n}", rhs.len())));
        }
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        for i in 0..n {
            d[i] = self.alpha[i] - if i > 0 { l[i - 1] * l[i - 1] * d[i - 1] } else { 0.0 };
            if !(d[i] > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: i, value: d[i] });
            }
            if i + 1 < n {
                l[i] = self.b[i] / d[i];
            }
        }
        let mut y = rhs.to_vec();
        for i in 1..n {
            y[i] -= l[i - 1] * y[i - 1];
        }
        for i in 0..n {
            y[i] /= d[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            y[i] -= l[i] * y[i + 1];
        }
        Ok(y)
    }

    fn eigen(&self) -> Result<EigenDecomposition<f64>> {
        crate::spectral::eigen_tridiagonal_full(self)
    }
}

impl LinearOperator<f64> for BidiagonalChi {
    fn dim(&self) -> usize {
        self.n()
    }

    /// `H Hᵀ x / scale` with `H` lower bidiagonal.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n();
        // t = Hᵀ x
        let mut t = vec![0.0; n];
        for j in 0..n {
            t[j] = self.diag[j] * x[j] + if j + 1 < n { self.subdiag[j] * x[j + 1] } else { 0.0 };
        }
        let s = 1.0 / self.scale;
        for i in 0..n {
            out[i] = (self.diag[i] * t[i] + if i > 0 { self.subdiag[i - 1] * t[i - 1] } else { 0.0 }) * s;
        }
    }
}

/// One conjugate gradient iterate.
#[derive(Clone, Debug)]
pub struct CgState<S> {
    pub k: usize,
    pub x: Vec<S>,
    pub r: Vec<S>,
    pub p: Vec<S>,
    /// Step `a_{k−1}` (zero at k = 0).
    pub a: f64,
    /// Coefficient `b_{k−1}` (zero at k = 0).
    pub bcoef: f64,
    pub residual_norm: f64,
}

/// Iterator over CG states `k = 0, 1, …` starting from `x₀ = 0`.
///
/// Stops after `kmax` steps, at the first `k` with `‖r_k‖₂ < eps`, or when the
/// residual vanishes exactly. Non-positive curvature yields one error item.
pub struct ConjugateGradient<'a, S: Scalar, A: ?Sized> {
    op: &'a A,
    state: Option<CgState<S>>,
    w_p: Vec<S>,
    rr: f64,
    started: bool,
    kmax: usize,
    eps: Option<f64>,
    done: bool,
}

impl<'a, S: Scalar, A: LinearOperator<S> + ?Sized> Iterator for ConjugateGradient<'a, S, A> {
    type Item = Result<CgState<S>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let state = self.state.as_mut()?;
        if !self.started {
            self.started = true;
            let out = state.clone();
            self.done = self.should_stop(&out);
            return Some(Ok(out));
        }
        let k = state.k + 1;
        self.op.apply(&state.p, &mut self.w_p);
        let curvature = dot(&state.p, &self.w_p).re();
        if !(curvature > 0.0) {
            self.done = true;
            return Some(Err(Error::Breakdown { iteration: k, curvature }));
        }
        // (a) a_{k-1} = r*r / r*Wp
        let denom = dot(&state.r, &self.w_p).re();
        let a = self.rr / denom;
        // (b), (c)
        axpy(S::from_real(a), &state.p, &mut state.x);
        axpy(S::from_real(-a), &self.w_p, &mut state.r);
        // (d) b_{k-1} = -r_k*r_k / r_{k-1}*r_{k-1}
        let rr_new = norm_sq(&state.r);
        let bcoef = -rr_new / self.rr;
        // (e) p_k = r_k - b_{k-1} p_{k-1}
        for (p, &r) in state.p.iter_mut().zip(&state.r) {
            *p = r - p.scale(bcoef);
        }
        self.rr = rr_new;
        state.k = k;
        state.a = a;
        state.bcoef = bcoef;
        state.residual_norm = rr_new.sqrt();
        let out = state.clone();
        self.done = self.should_stop(&out);
        Some(Ok(out))
    }
}

impl<'a, S: Scalar, A: LinearOperator<S> + ?Sized> ConjugateGradient<'a, S, A> {
    fn should_stop(&self, s: &CgState<S>) -> bool {
        s.k >= self.kmax || s.residual_norm == 0.0 || self.eps.is_some_and(|e| s.residual_norm < e)
    }
}

/// Conjugate gradient for `W x = b` from `x₀ = 0`.
pub fn conjugate_gradient<'a, S: Scalar, A: LinearOperator<S> + ?Sized>(
    op: &'a A,
    b: &[S],
    kmax: usize,
    eps: Option<f64>,
) -> Result<ConjugateGradient<'a, S, A>> {
    if b.len() != op.dim() {
        return Err(Error::Shape(format!("rhs of length {} for dimension {}", b.len(), op.dim())));
    }
    if let Some(e) = eps {
        if !(e >= 0.0) {
            return Err(Error::param(format!("tolerance must be nonnegative, got {e}")));
        }
    }
    let n = b.len();
    let rr = norm_sq(b);
    Ok(ConjugateGradient {
        op,
        state: Some(CgState {
            k: 0,
            x: vec![S::zero(); n],
            r: b.to_vec(),
            p: b.to_vec(),
            a: 0.0,
            bcoef: 0.0,
            residual_norm: rr.sqrt(),
        }),
        w_p: vec![S::zero(); n],
        rr,
        started: false,
        kmax,
        eps,
        done: false,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    pub kmax: usize,
    /// Full reorthogonalization against all previous Lanczos vectors.
    pub reorthogonalize: bool,
}

impl LanczosOptions {
    pub fn new(kmax: usize) -> Self {
        LanczosOptions { kmax, reorthogonalize: false }
    }
}

/// Lanczos tridiagonalization started at the unit vector `y1`.
///
/// Returns `T_K` with `K = min(kmax, n, breakdown index)`; breakdown is the
/// first `k` with `β_k < 1e-12 · ‖W‖`.
pub fn lanczos<S: Scalar, A: LinearOperator<S> + ?Sized>(
    op: &A,
    y1: &[S],
    opts: LanczosOptions,
) -> Result<SymmetricTridiagonal> {
    let n = op.dim();
    if y1.len() != n {
        return Err(Error::Shape(format!("start vector of length {} for dimension {n}", y1.len())));
    }
    if (norm(y1) - 1.0).abs() > 1e-12 {
        return Err(Error::param(format!("start vector must have unit norm, got {}", norm(y1))));
    }
    let kmax = opts.kmax.min(n);
    let mut alpha = Vec::with_capacity(kmax);
    let mut betas: Vec<f64> = Vec::with_capacity(kmax);
    let mut basis: Vec<Vec<S>> = Vec::new();
    let mut prev = vec![S::zero(); n];
    let mut cur = y1.to_vec();
    let mut w = vec![S::zero(); n];
    let mut beta_prev = 0.0;
    let mut scale = op.norm_estimate().unwrap_or(0.0);
    for k in 1..=kmax {
        op.apply(&cur, &mut w);
        // α_k = (W y_k − β_{k−1} y_{k−1})* y_k
        axpy(S::from_real(-beta_prev), &prev, &mut w);
        let a = dot(&w, &cur).re();
        alpha.push(a);
        axpy(S::from_real(-a), &cur, &mut w);
        if opts.reorthogonalize {
            basis.push(cur.clone());
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    axpy(-c, q, &mut w);
                }
            }
        }
        if k == kmax {
            break;
        }
        let beta = norm(&w);
        scale = scale.max(a.abs() + beta + beta_prev);
        if beta < LANCZOS_BREAKDOWN * scale {
            break;
        }
        betas.push(beta);
        let inv = 1.0 / beta;
        std::mem::swap(&mut prev, &mut cur);
        for (c, &wi) in cur.iter_mut().zip(&w) {
            *c = wi.scale(inv);
        }
        beta_prev = beta;
    }
    SymmetricTridiagonal::new(alpha, betas)
}

/// Householder bidiagonalization of an `n × m` matrix (`m ≥ n`):
/// `[B 0] = Q X P` with `B` lower bidiagonal and nonnegative entries.
/// The result is returned with unit scale.
pub fn householder_bidiagonalize<S: Scalar>(x: &DenseMatrix<S>) -> Result<BidiagonalChi> {
    let (n, m) = (x.rows(), x.cols());
    if m < n {
        return Err(Error::Shape(format!("bidiagonalization needs m >= n, got {n}x{m}")));
    }
    let mut a = x.clone();
    let mut diag = Vec::with_capacity(n);
    let mut subdiag = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n {
        // Right reflection: annihilate row i beyond column i.
        let u: Vec<S> = a.row(i)[i..].iter().map(|v| v.conj()).collect();
        if let Some((v, tau, alpha)) = householder(&u) {
            for r in i..n {
                let row = &mut a.row_mut(r)[i..];
                let mut s = S::zero();
                for (&aj, &vj) in row.iter().zip(&v) {
                    s += aj * vj;
                }
                let s = s.scale(tau);
                for (aj, &vj) in row.iter_mut().zip(&v) {
                    *aj -= s * vj.conj();
                }
            }
            // Row i is now conj(alpha) e₁; rotate column i so it is |alpha|.
            let c = alpha.phase();
            for r in i..n {
                a[(r, i)] *= c;
            }
        }
        diag.push(a[(i, i)].re().max(0.0));
        a[(i, i)] = S::from_real(diag[i]);
        if i + 1 == n {
            break;
        }
        // Left reflection: annihilate column i below row i+1.
        let u: Vec<S> = (i + 1..n).map(|r| a[(r, i)]).collect();
        if let Some((w, tau, delta)) = householder(&u) {
            let mut s = vec![S::zero(); m - i];
            for (wi, r) in w.iter().zip(i + 1..n) {
                let wc = wi.conj();
                for (sj, &arj) in s.iter_mut().zip(&a.row(r)[i..]) {
                    *sj += wc * arj;
                }
            }
            for (&wi, r) in w.iter().zip(i + 1..n) {
                let f = wi.scale(tau);
                for (arj, &sj) in a.row_mut(r)[i..].iter_mut().zip(&s) {
                    *arj -= f * sj;
                }
            }
            let c = delta.phase().conj();
            for v in a.row_mut(i + 1)[i..].iter_mut() {
                *v *= c;
            }
        }
        subdiag.push(a[(i + 1, i)].re().max(0.0));
    }
    Ok(BidiagonalChi { diag, subdiag, scale: 1.0 })
}

/// Per-iteration error norms of one CG run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTrajectory {
    pub ell_list: Vec<i32>,
    /// `norms[i][k] = ‖e_k‖_{W^ℓ}` for `ℓ = ell_list[i]`.
    pub norms: Vec<Vec<f64>>,
    /// `‖r_k‖₂` from the CG recurrence.
    pub residual_norms: Vec<f64>,
    pub kmax: usize,
}

impl ErrorTrajectory {
    pub fn norm(&self, ell: i32) -> Option<&[f64]> {
        self.ell_list.iter().position(|&l| l == ell).map(|i| self.norms[i].as_slice())
    }

    /// Last iteration index reached.
    pub fn iterations(&self) -> usize {
        self.residual_norms.len().saturating_sub(1)
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryOptions {
    pub kmax: usize,
    pub ell_list: Vec<i32>,
    /// Aspect ratio of the ensemble, used to reject `ℓ < 2` at `d = 1`.
    pub aspect_ratio: Option<f64>,
}

/// CG trajectory recording only residual norms; works for any operator.
pub fn cg_residual_trajectory<S: Scalar, A: LinearOperator<S> + ?Sized>(
    op: &A,
    b: &[S],
    kmax: usize,
) -> Result<ErrorTrajectory> {
    let floor = RESIDUAL_FLOOR * norm(b);
    let mut residual_norms = Vec::with_capacity(kmax + 1);
    for state in conjugate_gradient(op, b, kmax, Some(floor))? {
        residual_norms.push(state?.residual_norm);
    }
    Ok(ErrorTrajectory {
        ell_list: Vec::new(),
        norms: Vec::new(),
        residual_norms,
        kmax,
    })
}

/// CG trajectory with `‖e_k‖_{W^ℓ}` for each requested `ℓ`.
///
/// `e_k = x − x_k` uses a direct solve for `x`. Nonnegative `ℓ` are evaluated
/// with matrix powers; negative `ℓ` go through the eigendecomposition of `W`.
pub fn cg_error_trajectory<S: Scalar, A: ExactSolver<S> + ?Sized>(
    op: &A,
    b: &[S],
    opts: &TrajectoryOptions,
) -> Result<ErrorTrajectory> {
    if let Some(d) = opts.aspect_ratio {
        if let Some(&ell) = opts.ell_list.iter().find(|&&l| l < 2) {
            crate::theory::check_ell_for_aspect(ell, d)?;
        }
    }
    let x_true = op.solve(b)?;
    let eigen = if opts.ell_list.iter().any(|&l| l < 0) {
        Some(op.eigen()?)
    } else {
        None
    };
    let max_power = opts.ell_list.iter().filter(|&&l| l > 0).map(|&l| (l as usize).div_ceil(2)).max().unwrap_or(0);
    let n = b.len();
    let floor = RESIDUAL_FLOOR * norm(b);
    let mut norms = vec![Vec::with_capacity(opts.kmax + 1); opts.ell_list.len()];
    let mut residual_norms = Vec::with_capacity(opts.kmax + 1);
    let mut powers: Vec<Vec<S>> = vec![vec![S::zero(); n]; max_power + 1];
    for state in conjugate_gradient(op, b, opts.kmax, Some(floor))? {
        let state = state?;
        residual_norms.push(state.residual_norm);
        for (p0, (&xt, &xk)) in powers[0].iter_mut().zip(x_true.iter().zip(&state.x)) {
            *p0 = xt - xk;
        }
        for j in 1..=max_power {
            let (lo, hi) = powers.split_at_mut(j);
            op.apply(&lo[j - 1], &mut hi[0]);
        }
        let coeffs = eigen.as_ref().map(|e| e.vectors.conj_transpose().matvec(&powers[0]));
        for (slot, &ell) in norms.iter_mut().zip(&opts.ell_list) {
            let sq = if ell >= 0 {
                let lo = ell as usize / 2;
                let hi = (ell as usize).div_ceil(2);
                dot(&powers[lo], &powers[hi]).re()
            } else {
                let e = eigen.as_ref().expect("computed for negative powers");
                let c = coeffs.as_ref().expect("computed with eigen");
                e.values.iter().zip(c).map(|(&lam, ci)| lam.powi(ell) * ci.abs_sq()).sum()
            };
            slot.push(sq.max(0.0).sqrt());
        }
    }
    Ok(ErrorTrajectory {
        ell_list: opts.ell_list.clone(),
        norms,
        residual_norms,
        kmax: opts.kmax,
    })
}

/// First `k` with the tracked norm strictly below `eps`; `None` if no
/// recorded iteration qualifies. `ℓ = 2` reads the CG residual norms.
pub fn halting_time(trajectory: &ErrorTrajectory, ell: i32, eps: f64) -> Result<Option<usize>> {
    if !(eps > 0.0) {
        return Err(Error::param(format!("halting tolerance must be positive, got {eps}")));
    }
    let series = if ell == 2 {
        trajectory.residual_norms.as_slice()
    } else {
        trajectory
            .norm(ell)
            .ok_or_else(|| Error::param(format!("trajectory does not track ell = {ell}")))?
    };
    Ok(series.iter().position(|&v| v < eps))
}

/// `p_k†(λ) = det(T_k − λI) / det(T_k)` built from a Lanczos matrix started at
/// `r₀/‖r₀‖`.
#[derive(Clone, Debug)]
pub struct MinimizingPolynomial {
    tk: SymmetricTridiagonal,
    det0: f64,
}

impl MinimizingPolynomial {
    pub fn new(t: &SymmetricTridiagonal, k: usize) -> Result<Self> {
        if k > t.dim() {
            return Err(Error::param(format!("degree {k} exceeds Lanczos dimension {}", t.dim())));
        }
        let tk = t.leading(k);
        let det0 = tk.char_poly(0.0);
        if det0 == 0.0 {
            return Err(Error::Validation("T_k is singular".into()));
        }
        Ok(MinimizingPolynomial { tk, det0 })
    }

    pub fn degree(&self) -> usize {
        self.tk.dim()
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        self.tk.char_poly(lambda) / self.det0
    }

    /// `Σ_j λ_j^{ℓ−2} p(λ_j)² ω_j`
    pub fn spectral_error_sq(&self, eigenvalues: &[f64], weights: &[f64], ell: i32) -> f64 {
        eigenvalues
            .iter()
            .zip(weights)
            .map(|(&lam, &w)| lam.powi(ell - 2) * self.eval(lam).powi(2) * w)
            .sum()
    }
}
