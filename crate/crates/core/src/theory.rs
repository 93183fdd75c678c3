//! Deterministic limit objects: the Marchenko–Pastur law, the limiting Jacobi
//! matrix, limit error norms, limit halting times and the classical bound.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::SymmetricTridiagonal;

fn check_d(d: f64) -> Result<()> {
    if d > 0.0 && d <= 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("aspect ratio d must lie in (0, 1], got {d}")))
    }
}

/// Limits with `ℓ < 2` do not exist at `d = 1`.
pub fn check_ell_for_aspect(ell: i32, d: f64) -> Result<()> {
    check_d(d)?;
    if ell < 2 && d == 1.0 {
        return Err(Error::UndefinedLimit(format!("d=1 requires ell>=2, got ell = {ell}")));
    }
    Ok(())
}

/// Marchenko–Pastur law with ratio `d`, supported on `[d₋, d₊]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpLaw {
    pub d: f64,
    pub d_minus: f64,
    pub d_plus: f64,
}

impl MpLaw {
    pub fn new(d: f64) -> Result<Self> {
        check_d(d)?;
        let s = d.sqrt();
        Ok(MpLaw { d, d_minus: (1.0 - s).powi(2), d_plus: (1.0 + s).powi(2) })
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= self.d_minus || x >= self.d_plus {
            return 0.0;
        }
        ((self.d_plus - x) * (x - self.d_minus)).sqrt() / (2.0 * PI * self.d * x)
    }

    /// Closed-form distribution function, from the antiderivative of
    /// `(2/π) sin²θ / (1 + d + 2√d cos θ)` in `λ = 1 + d + 2√d cos θ`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.d_minus {
            return 0.0;
        }
        if x >= self.d_plus {
            return 1.0;
        }
        let d = self.d;
        let s = d.sqrt();
        let theta = ((x - 1.0 - d) / (2.0 * s)).clamp(-1.0, 1.0).acos();
        let q = (1.0 - s) / (1.0 + s);
        let g = -theta.sin() / (2.0 * s) + (1.0 + d) * theta / (4.0 * d)
            - (1.0 - d) / (2.0 * d) * (q * (theta / 2.0).tan()).atan();
        (1.0 - 2.0 / PI * g).clamp(0.0, 1.0)
    }
}

pub fn mp_density(x: f64, d: f64) -> Result<f64> {
    Ok(MpLaw::new(d)?.density(x))
}

pub fn mp_cdf(x: f64, d: f64) -> Result<f64> {
    Ok(MpLaw::new(d)?.cdf(x))
}

/// Second-kind Chebyshev polynomial `U_k(x)`.
pub fn chebyshev_u(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for _ in 0..k {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `(U_{k−1}(y), U_k(y))`
fn chebyshev_pair(k: usize, y: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for _ in 0..k {
        let next = 2.0 * y * cur - prev;
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

/// `det(𝕋_{k,d} − λI) = d^{k/2} [U_k(−x) − √d U_{k−1}(−x)]`, `x = (λ−1−d)/(2√d)`.
pub fn limit_char_poly(k: usize, d: f64, lambda: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let s = d.sqrt();
    let x = (lambda - 1.0 - d) / (2.0 * s);
    let (um1, u) = chebyshev_pair(k, -x);
    d.powf(k as f64 / 2.0) * (u - s * um1)
}

/// The `k × k` leading block of the limiting Jacobi matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitJacobi {
    pub k: usize,
    pub d: f64,
}

impl LimitJacobi {
    pub fn new(k: usize, d: f64) -> Result<Self> {
        check_d(d)?;
        Ok(LimitJacobi { k, d })
    }

    pub fn tridiagonal(&self) -> SymmetricTridiagonal {
        let mut alpha = vec![1.0 + self.d; self.k];
        if let Some(a) = alpha.first_mut() {
            *a = 1.0;
        }
        let off = vec![self.d.sqrt(); self.k.saturating_sub(1)];
        SymmetricTridiagonal::new(alpha, off).expect("consistent lengths")
    }

    pub fn char_poly(&self, lambda: f64) -> f64 {
        limit_char_poly(self.k, self.d, lambda)
    }
}

/// Gauss–Chebyshev (second kind) sum of `f(x)` against `√(1−x²)` on `N` nodes.
fn gauss_chebyshev_u(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = PI / (n + 1) as f64;
    let terms: Vec<f64> = (1..=n)
        .map(|i| {
            let t = i as f64 * h;
            h * t.sin().powi(2) * f(t.cos())
        })
        .collect();
    crate::ensembles::pairwise_sum(&terms)
}

const QUADRATURE_TOL: f64 = 1e-12;
const QUADRATURE_MAX_NODES: usize = 1 << 22;

/// `𝔢²_{ℓ,k,d}` by Gauss–Chebyshev quadrature of
/// `(2/π) ∫ λ^{ℓ−3} det(𝕋_{k,d} − λI)² √(1−x²) dx`, `λ = 1 + d + 2√d x`.
///
/// Polynomial integrands (`ℓ ≥ 3`) use an exact rule; otherwise the node
/// count doubles until successive values agree to `1e-12`.
pub fn limit_error_quadrature(ell: i32, k: usize, d: f64) -> Result<f64> {
    check_ell_for_aspect(ell, d)?;
    let s = d.sqrt();
    let integrand = |x: f64| {
        let lambda = 1.0 + d + 2.0 * s * x;
        lambda.powi(ell - 3) * limit_char_poly(k, d, lambda).powi(2)
    };
    let base = 2 * (k + 2);
    if ell >= 3 {
        let degree = 2 * k + (ell as usize - 3);
        let n = base.max(degree / 2 + 1);
        return Ok(2.0 / PI * gauss_chebyshev_u(n, integrand));
    }
    let mut n = base;
    let mut prev = gauss_chebyshev_u(n, integrand);
    loop {
        n = 2 * n + 1;
        let cur = gauss_chebyshev_u(n, integrand);
        if (cur - prev).abs() <= QUADRATURE_TOL * cur.abs().max(f64::MIN_POSITIVE) {
            return Ok(2.0 / PI * cur);
        }
        if n > QUADRATURE_MAX_NODES {
            return Err(Error::Validation(format!("quadrature did not converge for ell = {ell}, k = {k}, d = {d}")));
        }
        prev = cur;
    }
}

/// `𝔢²_{ℓ,k,d}`: closed forms for `ℓ ∈ {1, 2, 3}`, quadrature otherwise.
pub fn limit_error_sq(ell: i32, k: usize, d: f64) -> Result<f64> {
    check_ell_for_aspect(ell, d)?;
    let dk = d.powi(k as i32);
    match ell {
        1 => Ok(dk / (1.0 - d)),
        2 => Ok(dk),
        3 if k == 0 => Ok(1.0),
        3 => Ok(dk * (1.0 + d)),
        _ => limit_error_quadrature(ell, k, d),
    }
}

/// `𝔢_{ℓ,k,d}`, the almost-sure limit of `‖e_k‖_{W^ℓ}`.
pub fn limit_error(ell: i32, k: usize, d: f64) -> Result<f64> {
    Ok(limit_error_sq(ell, k, d)?.sqrt())
}

/// `∫ λ^k dμ_MP`.
pub fn mp_moment(k: i32, d: f64) -> Result<f64> {
    check_d(d)?;
    if k < 0 && d == 1.0 {
        return Err(Error::UndefinedLimit(format!("negative moment {k} at d = 1")));
    }
    limit_error_quadrature(k + 2, 0, d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HaltingPrediction {
    pub tau: usize,
    /// `ε` coincides with a limit error value; the halting time may then
    /// take either of `tau` and `tau + 1`.
    pub exceptional: bool,
}

const EXCEPTIONAL_TOL: f64 = 1e-9;

/// Limit halting time `τ^(ℓ)_ε` from the ceiling formula.
pub fn predict_halting(ell: i32, eps: f64, d: f64) -> Result<HaltingPrediction> {
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::param(format!("d must lie in (0, 1), got {d}")));
    }
    if !(eps > 0.0) {
        return Err(Error::param(format!("eps must be positive, got {eps}")));
    }
    let raw = match ell {
        1 => {
            if eps * eps >= 1.0 / (1.0 - d) {
                return Err(Error::param(format!("ell = 1 needs eps^2 < 1/(1-d), got eps = {eps}")));
            }
            (2.0 * eps.ln() + (1.0 - d).ln()) / d.ln()
        }
        2 => {
            if eps >= 1.0 {
                return Err(Error::param(format!("ell = 2 needs eps < 1, got {eps}")));
            }
            2.0 * eps.ln() / d.ln()
        }
        _ => return Err(Error::param(format!("halting times are defined for ell in {{1, 2}}, got {ell}"))),
    };
    let nearest = raw.round();
    let exceptional = (raw - nearest).abs() <= EXCEPTIONAL_TOL;
    let tau = if exceptional { nearest } else { raw.ceil() };
    Ok(HaltingPrediction { tau: tau.max(0.0) as usize, exceptional })
}

/// `{𝔢_{ℓ,k,d} : 0 ≤ k ≤ k_max}`, in decreasing order.
pub fn exceptional_set(ell: i32, d: f64, k_max: usize) -> Result<Vec<f64>> {
    if !(ell == 1 || ell == 2) {
        return Err(Error::param(format!("exceptional sets are defined for ell in {{1, 2}}, got {ell}")));
    }
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::param(format!("d must lie in (0, 1), got {d}")));
    }
    (0..=k_max).map(|k| limit_error(ell, k, d)).collect()
}

/// `2 / (ρ^k + ρ^{−k})` with `ρ = (√κ − 1)/(√κ + 1)`.
pub fn classical_cg_bound(kappa: f64, k: usize) -> Result<f64> {
    if !(kappa >= 1.0) {
        return Err(Error::param(format!("condition number must be at least 1, got {kappa}")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    let s = kappa.sqrt();
    let rho = (s - 1.0) / (s + 1.0);
    let rk = rho.powi(k as i32);
    Ok(2.0 * rk / (1.0 + rk * rk))
}
