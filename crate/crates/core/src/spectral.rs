//! Hermitian eigensolvers, spectral measures and Kolmogorov–Smirnov distances.

use serde::{Deserialize, Serialize};

use crate::dense::{householder, norm_sq, DenseMatrix, Scalar};
use crate::ensembles::pairwise_sum;
use crate::error::{Error, Result};
use crate::krylov::SymmetricTridiagonal;

/// Relative tolerance for the Hermitian check on dense input.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Eigenvalues in ascending order; column `j` of `vectors` belongs to `values[j]`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition<S> {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix<S>,
}

/// Implicit QL on a real symmetric tridiagonal (`d`, `e` with `e[n-1] = 0`),
/// applying the rotations to the columns of the `r × n` block `v`.
fn tql2<S: Scalar>(d: &mut [f64], e: &mut [f64], v: &mut [S], r: usize) -> Result<()> {
    let n = d.len();
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
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
                if iter > 100 {
                    return Err(Error::Validation(format!("QL iteration did not converge at index {l}")));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut rr = p.hypot(1.0);
                if p < 0.0 {
                    rr = -rr;
                }
                d[l] = e[l] / (p + rr);
                d[l + 1] = e[l] * (p + rr);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    rr = p.hypot(e[i]);
                    e[i + 1] = s * rr;
                    s = e[i] / rr;
                    c = p / rr;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..r {
                        let row = &mut v[k * n..(k + 1) * n];
                        let hv = row[i + 1];
                        row[i + 1] = row[i].scale(s) + hv.scale(c);
                        row[i] = row[i].scale(c) - hv.scale(s);
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
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Sorts eigenvalues ascending and permutes the columns of the `r × n` block.
fn sort_pairs<S: Scalar>(d: &mut Vec<f64>, v: &mut Vec<S>, r: usize) {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    *d = order.iter().map(|&i| d[i]).collect();
    if r > 0 {
        let mut out = Vec::with_capacity(r * n);
        for k in 0..r {
            out.extend(order.iter().map(|&j| v[k * n + j]));
        }
        *v = out;
    }
}

fn tridiagonal_parts(t: &SymmetricTridiagonal) -> (Vec<f64>, Vec<f64>) {
    let mut e = t.off_diagonal().to_vec();
    e.push(0.0);
    (t.diagonal().to_vec(), e)
}

/// Eigenvalues of `T` with the squared first components of the normalized
/// eigenvectors, both in ascending eigenvalue order.
pub fn eigen_tridiagonal(t: &SymmetricTridiagonal) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = t.dim();
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let (mut d, mut e) = tridiagonal_parts(t);
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    tql2(&mut d, &mut e, &mut v, 1)?;
    sort_pairs(&mut d, &mut v, 1);
    Ok((d, v.iter().map(|x| x * x).collect()))
}

pub fn eigenvalues_tridiagonal(t: &SymmetricTridiagonal) -> Result<Vec<f64>> {
    let (mut d, mut e) = tridiagonal_parts(t);
    let mut v: Vec<f64> = Vec::new();
    if !d.is_empty() {
        tql2(&mut d, &mut e, &mut v, 0)?;
    }
    sort_pairs(&mut d, &mut v, 0);
    Ok(d)
}

pub fn eigen_tridiagonal_full(t: &SymmetricTridiagonal) -> Result<EigenDecomposition<f64>> {
    let n = t.dim();
    let (mut d, mut e) = tridiagonal_parts(t);
    let mut v = DenseMatrix::<f64>::identity(n).as_slice().to_vec();
    if n > 0 {
        tql2(&mut d, &mut e, &mut v, n)?;
    }
    sort_pairs(&mut d, &mut v, n);
    Ok(EigenDecomposition {
        values: d,
        vectors: DenseMatrix::from_row_major(n, n, v)?,
    })
}

/// Householder reduction `A = Q D T Dᴴ Qᴴ` with `T` real tridiagonal and `D`
/// a diagonal unitary. Returns the diagonal and off-diagonal of `T` and, when
/// requested, the product `Q D`.
fn tridiagonalize<S: Scalar>(a: &DenseMatrix<S>, want_q: bool) -> Result<(Vec<f64>, Vec<f64>, Option<Vec<S>>)> {
    if !a.is_square() {
        return Err(Error::Shape(format!("eigensolver needs a square matrix, got {}x{}", a.rows(), a.cols())));
    }
    let defect = a.hermitian_defect();
    if defect > HERMITIAN_TOL * a.max_abs().max(1.0) {
        return Err(Error::Validation(format!("matrix is not Hermitian (defect {defect:e})")));
    }
    let n = a.rows();
    let mut w = a.clone();
    let mut off: Vec<S> = vec![S::zero(); n.saturating_sub(1)];
    let mut reflectors: Vec<(usize, Vec<S>, f64)> = Vec::new();
    let mut p = vec![S::zero(); n];
    for k in 0..n.saturating_sub(1) {
        let s = k + 1;
        let u: Vec<S> = (s..n).map(|i| w[(i, k)]).collect();
        let Some((v, tau, alpha)) = householder(&u) else {
            off[k] = u[0];
            continue;
        };
        off[k] = alpha;
        let m = n - s;
        // p = τ B v on the trailing block B, reading only its lower triangle
        p[..m].iter_mut().for_each(|x| *x = S::zero());
        for i in 0..m {
            let row = &w.row(s + i)[s..s + i + 1];
            let vi = v[i];
            let mut acc = row[i] * vi;
            for (j, &bij) in row[..i].iter().enumerate() {
                acc += bij * v[j];
                p[j] += bij.conj() * vi;
            }
            p[i] += acc;
        }
        p[..m].iter_mut().for_each(|x| *x = x.scale(tau));
        let mut vp = S::zero();
        for (&vi, &pi) in v.iter().zip(&p[..m]) {
            vp += vi.conj() * pi;
        }
        let kk = vp.scale(0.5 * tau);
        for (pi, &vi) in p[..m].iter_mut().zip(&v) {
            *pi -= kk * vi;
        }
        // B -= v w* + w v*, lower triangle
        for i in 0..m {
            let (vi, wi) = (v[i], p[i]);
            let row = &mut w.row_mut(s + i)[s..s + i + 1];
            for ((bij, &vj), &wj) in row.iter_mut().zip(&v).zip(&p[..m]) {
                *bij -= vi * wj.conj() + wi * vj.conj();
            }
        }
        if want_q {
            reflectors.push((s, v, tau));
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| w[(i, i)].re()).collect();
    let mut phases = vec![S::one(); n];
    for k in 0..n.saturating_sub(1) {
        phases[k + 1] = phases[k] * off[k].phase();
    }
    let e: Vec<f64> = off.iter().map(|z| z.abs()).collect();
    let q = want_q.then(|| {
        let mut q = DenseMatrix::<S>::identity(n);
        let mut t = vec![S::zero(); n];
        for (s, v, tau) in reflectors.iter().rev() {
            // Q[s.., :] -= τ v (v* Q[s.., :])
            t.iter_mut().for_each(|x| *x = S::zero());
            for (i, &vi) in v.iter().enumerate() {
                let vc = vi.conj();
                for (tj, &qij) in t.iter_mut().zip(q.row(s + i)) {
                    *tj += vc * qij;
                }
            }
            for (i, &vi) in v.iter().enumerate() {
                let f = vi.scale(*tau);
                for (qij, &tj) in q.row_mut(s + i).iter_mut().zip(&t) {
                    *qij -= f * tj;
                }
            }
        }
        for i in 0..n {
            for (qij, &ph) in q.row_mut(i).iter_mut().zip(&phases) {
                *qij *= ph;
            }
        }
        q.as_slice().to_vec()
    });
    Ok((diag, e, q))
}

/// Full eigendecomposition of a Hermitian matrix.
pub fn eigen_dense<S: Scalar>(a: &DenseMatrix<S>) -> Result<EigenDecomposition<S>> {
    let n = a.rows();
    let (mut d, mut e, q) = tridiagonalize(a, true)?;
    let mut v = q.expect("requested");
    e.push(0.0);
    e.truncate(n);
    if n > 0 {
        tql2(&mut d, &mut e, &mut v, n)?;
    }
    sort_pairs(&mut d, &mut v, n);
    Ok(EigenDecomposition {
        values: d,
        vectors: DenseMatrix::from_row_major(n, n, v)?,
    })
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigenvalues_dense<S: Scalar>(a: &DenseMatrix<S>) -> Result<Vec<f64>> {
    let n = a.rows();
    let (mut d, mut e, _) = tridiagonalize(a, false)?;
    e.push(0.0);
    e.truncate(n);
    let mut v: Vec<S> = Vec::new();
    if n > 0 {
        tql2(&mut d, &mut e, &mut v, 0)?;
    }
    sort_pairs(&mut d, &mut v, 0);
    Ok(d)
}

/// Eigenvalues together with `|u_j[0]|²` for each normalized eigenvector.
pub fn eigen_dense_first_weights<S: Scalar>(a: &DenseMatrix<S>) -> Result<(Vec<f64>, Vec<f64>)> {
    // Q fixes e₁ and D₀₀ = 1, so first components come from T alone.
    let (d, e, _) = tridiagonalize(a, false)?;
    let t = SymmetricTridiagonal::new(d, e)?;
    eigen_tridiagonal(&t)
}

/// Condition number `λ_max / λ_min` from eigenvalues in ascending order.
pub fn condition_number(values: &[f64]) -> Result<f64> {
    match (values.first(), values.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => Ok(hi / lo),
        (Some(&lo), Some(_)) => Err(Error::NotPositiveDefinite { pivot: 0, value: lo }),
        _ => Err(Error::Shape("empty spectrum".into())),
    }
}

/// Atomic probability measure on the real line with sorted, distinct atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl SpectralMeasure {
    /// Sorts atoms, merges those closer than `1e-12` times the spectral
    /// diameter, and checks that the weights are nonnegative with unit sum.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::Shape(format!("{} atoms but {} weights", atoms.len(), weights.len())));
        }
        if atoms.is_empty() {
            return Err(Error::Validation("spectral measure without atoms".into()));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::Validation("non-finite atom".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::Validation(format!("negative weight {w}")));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("weights sum to {total}, not 1")));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let tol = 1e-12 * (pairs[pairs.len() - 1].0 - pairs[0].0);
        let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (a, w) in pairs {
            match atoms.last() {
                Some(&last) if a - last <= tol => *weights.last_mut().expect("nonempty") += w,
                _ => {
                    atoms.push(a);
                    weights.push(w);
                }
            }
        }
        Ok(SpectralMeasure { atoms, weights })
    }

    /// Empirical spectral distribution: uniform mass on each value.
    pub fn empirical(values: &[f64]) -> Result<Self> {
        let w = 1.0 / values.len().max(1) as f64;
        Self::new(values.to_vec(), vec![w; values.len()])
    }

    /// `Σ_j ω_j δ_{λ_j}` with `ω_j = |u_j* b|² / ‖b‖²`.
    pub fn weighted<S: Scalar>(eigen: &EigenDecomposition<S>, b: &[S]) -> Result<Self> {
        let bn = norm_sq(b);
        if bn == 0.0 {
            return Err(Error::param("zero right-hand side"));
        }
        let c = eigen.vectors.conj_transpose().matvec(b);
        let mut w: Vec<f64> = c.iter().map(|z| z.abs_sq() / bn).collect();
        let total = pairwise_sum(&w);
        w.iter_mut().for_each(|x| *x /= total);
        Self::new(eigen.values.clone(), w)
    }

    /// Spectral measure of a Jacobi matrix at `e₁`.
    pub fn from_tridiagonal(t: &SymmetricTridiagonal) -> Result<Self> {
        let (values, mut w) = eigen_tridiagonal(t)?;
        let total = pairwise_sum(&w);
        w.iter_mut().for_each(|x| *x /= total);
        Self::new(values, w)
    }

    /// Equal-weight mixture of several measures.
    pub fn pooled(parts: &[SpectralMeasure]) -> Result<Self> {
        let f = 1.0 / parts.len().max(1) as f64;
        let atoms = parts.iter().flat_map(|p| p.atoms.iter().copied()).collect();
        let weights = parts.iter().flat_map(|p| p.weights.iter().map(move |w| w * f)).collect::<Vec<_>>();
        let total = pairwise_sum(&weights);
        Self::new(atoms, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let idx = self.atoms.partition_point(|&a| a <= x);
        pairwise_sum(&self.weights[..idx]).min(1.0)
    }

    pub fn moment(&self, k: i32) -> f64 {
        let terms: Vec<f64> = self.atoms.iter().zip(&self.weights).map(|(a, w)| a.powi(k) * w).collect();
        pairwise_sum(&terms)
    }
}

/// `sup_x |F_μ(x) − F_ν(x)|` for two atomic measures.
pub fn ks_distance(mu: &SpectralMeasure, nu: &SpectralMeasure) -> f64 {
    let (a, b) = (&mu, &nu);
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut sup: f64 = 0.0;
    while i < a.atoms.len() || j < b.atoms.len() {
        let x = match (a.atoms.get(i), b.atoms.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        while i < a.atoms.len() && a.atoms[i] == x {
            fa += a.weights[i];
            i += 1;
        }
        while j < b.atoms.len() && b.atoms[j] == x {
            fb += b.weights[j];
            j += 1;
        }
        sup = sup.max((fa - fb).abs());
    }
    sup.min(1.0)
}

/// `sup_x |F_μ(x) − F(x)|` for an atomic `μ` and a continuous CDF `F`.
pub fn ks_distance_cdf(mu: &SpectralMeasure, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut below = 0.0;
    let mut sup: f64 = 0.0;
    for (&x, &w) in mu.atoms.iter().zip(&mu.weights) {
        let f = cdf(x);
        let above = below + w;
        sup = sup.max((f - below).abs()).max((f - above).abs());
        below = above;
    }
    sup.min(1.0)
}
