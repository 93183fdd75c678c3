//! Random objects: chi variates, Gaussian and Bernoulli Wishart matrices,
//! the chi-bidiagonal model and normalized chi-squared spectral weights.
//!
//! Every sampler takes an explicit RNG. Experiments obtain that RNG from
//! [`sample_rng`], so the draws for sample `i` depend only on `(seed, i)`.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dense::{gram_complex, gram_real, norm, DenseMatrix, Scalar};
use crate::error::{Error, Result};
use crate::krylov::SymmetricTridiagonal;

/// Field parameter β.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Beta {
    Real,
    Complex,
}

impl Beta {
    pub fn value(self) -> u8 {
        match self {
            Beta::Real => 1,
            Beta::Complex => 2,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.value())
    }
}

impl TryFrom<u8> for Beta {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Beta::Real),
            2 => Ok(Beta::Complex),
            _ => Err(Error::param(format!("beta must be 1 or 2, got {v}"))),
        }
    }
}

impl From<Beta> for u8 {
    fn from(b: Beta) -> u8 {
        b.value()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnsembleKind {
    GaussianWishart,
    BernoulliWishart,
    ChiBidiagonal,
}

impl EnsembleKind {
    pub fn label(self) -> &'static str {
        match self {
            EnsembleKind::GaussianWishart => "gaussian",
            EnsembleKind::BernoulliWishart => "bernoulli",
            EnsembleKind::ChiBidiagonal => "chi-bidiagonal",
        }
    }
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "gaussianwishart" | "gw" => Ok(EnsembleKind::GaussianWishart),
            "bernoulli" | "bernoulliwishart" | "be" => Ok(EnsembleKind::BernoulliWishart),
            "chi-bidiagonal" | "chibidiagonal" | "bidiagonal" | "chi" => Ok(EnsembleKind::ChiBidiagonal),
            other => Err(Error::param(format!("unknown ensemble '{other}'"))),
        }
    }
}

/// Right-hand side used for the linear system `W x = b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RhsKind {
    FirstBasisVector,
    /// Haar-uniform unit vector, drawn as normalized iid Gaussians.
    RandomUnit,
}

impl std::str::FromStr for RhsKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e1" | "first" | "firstbasisvector" => Ok(RhsKind::FirstBasisVector),
            "random" | "randomunit" | "haar" => Ok(RhsKind::RandomUnit),
            other => Err(Error::param(format!("unknown right-hand side '{other}'"))),
        }
    }
}

/// Parameters of one random linear-system distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n: usize,
    pub d: f64,
    pub beta: Beta,
    pub kind: EnsembleKind,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(n: usize, d: f64, beta: Beta, kind: EnsembleKind, seed: u64) -> Result<Self> {
        let spec = EnsembleSpec { n, d, beta, kind, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n must be positive"));
        }
        if !(self.d > 0.0 && self.d <= 1.0) {
            return Err(Error::param(format!("d must lie in (0, 1], got {}", self.d)));
        }
        if self.kind == EnsembleKind::BernoulliWishart && self.beta == Beta::Complex {
            return Err(Error::Unsupported("the Bernoulli ensemble is real (beta = 1) only".into()));
        }
        if self.m() < self.n {
            return Err(Error::param(format!("m = {} < n = {}", self.m(), self.n)));
        }
        Ok(())
    }

    /// `m = floor(n / d)`. Ratios within a few ulps of an integer snap to it,
    /// so that e.g. `n = 800, d = 0.2` gives exactly 4000.
    pub fn m(&self) -> usize {
        let ratio = self.n as f64 / self.d;
        (ratio * (1.0 + 4.0 * f64::EPSILON)).floor() as usize
    }

    /// Normalization `βm` (or `m` for the Bernoulli ensemble).
    pub fn scale(&self) -> f64 {
        match self.kind {
            EnsembleKind::BernoulliWishart => self.m() as f64,
            _ => self.beta.as_f64() * self.m() as f64,
        }
    }
}

/// RNG stream for sample `index` under master seed `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One chi-squared draw with `df` degrees of freedom, as a gamma(df/2, 2) variate.
pub fn sample_chi_squared<R: Rng + ?Sized>(df: f64, rng: &mut R) -> Result<f64> {
    if !(df > 0.0 && df.is_finite()) {
        return Err(Error::param(format!("chi degrees of freedom must be positive, got {df}")));
    }
    let gamma = Gamma::new(0.5 * df, 2.0).map_err(|e| Error::param(e.to_string()))?;
    Ok(gamma.sample(rng))
}

/// One chi draw with `df` degrees of freedom.
pub fn sample_chi<R: Rng + ?Sized>(df: f64, rng: &mut R) -> Result<f64> {
    sample_chi_squared(df, rng).map(f64::sqrt)
}

/// The rectangular factor `X` of a Wishart matrix `W = X X* / scale`.
#[derive(Clone, Debug)]
pub enum WishartFactor {
    Real { x: DenseMatrix<f64>, scale: f64 },
    Complex { x: DenseMatrix<Complex64>, scale: f64 },
}

impl WishartFactor {
    pub fn n(&self) -> usize {
        match self {
            WishartFactor::Real { x, .. } => x.rows(),
            WishartFactor::Complex { x, .. } => x.rows(),
        }
    }

    pub fn to_wishart(&self) -> DenseWishart {
        match self {
            WishartFactor::Real { x, scale } => DenseWishart::Real(gram_real(x, *scale)),
            WishartFactor::Complex { x, scale } => {
                let re = DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)].re);
                let im = DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)].im);
                DenseWishart::Complex(gram_complex(&re, &im, *scale))
            }
        }
    }
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix<f64> {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    DenseMatrix::from_row_major(rows, cols, data).expect("sized by construction")
}

/// Samples the `n × m` factor `X` for a Gaussian or Bernoulli spec.
pub fn sample_factor<R: Rng + ?Sized>(spec: &EnsembleSpec, rng: &mut R) -> Result<WishartFactor> {
    spec.validate()?;
    let (n, m) = (spec.n, spec.m());
    let scale = spec.scale();
    match (spec.kind, spec.beta) {
        (EnsembleKind::GaussianWishart, Beta::Real) => Ok(WishartFactor::Real {
            x: normal_matrix(n, m, rng),
            scale,
        }),
        (EnsembleKind::GaussianWishart, Beta::Complex) => {
            let x1 = normal_matrix(n, m, rng);
            let x2 = normal_matrix(n, m, rng);
            let x = DenseMatrix::from_fn(n, m, |i, j| Complex64::new(x1[(i, j)], x2[(i, j)]));
            Ok(WishartFactor::Complex { x, scale })
        }
        (EnsembleKind::BernoulliWishart, _) => {
            let data = (0..n * m).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            Ok(WishartFactor::Real {
                x: DenseMatrix::from_row_major(n, m, data)?,
                scale,
            })
        }
        (EnsembleKind::ChiBidiagonal, _) => Err(Error::Unsupported(
            "the chi-bidiagonal ensemble has no dense factor; use sample_bidiagonal_chi".into(),
        )),
    }
}

/// Dense Wishart matrix, real symmetric (β = 1) or complex Hermitian (β = 2).
#[derive(Clone, Debug)]
pub enum DenseWishart {
    Real(DenseMatrix<f64>),
    Complex(DenseMatrix<Complex64>),
}

impl DenseWishart {
    pub fn n(&self) -> usize {
        match self {
            DenseWishart::Real(w) => w.rows(),
            DenseWishart::Complex(w) => w.rows(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            DenseWishart::Real(w) => w.trace(),
            DenseWishart::Complex(w) => w.trace().re,
        }
    }

    pub fn hermitian_defect(&self) -> f64 {
        match self {
            DenseWishart::Real(w) => w.hermitian_defect(),
            DenseWishart::Complex(w) => w.hermitian_defect(),
        }
    }
}

/// `W = X X* / (βm)` (or `X Xᵀ / m` for the Bernoulli ensemble).
pub fn sample_dense_wishart<R: Rng + ?Sized>(spec: &EnsembleSpec, rng: &mut R) -> Result<DenseWishart> {
    Ok(sample_factor(spec, rng)?.to_wishart())
}

/// Lower-bidiagonal `H` with independent chi entries; `HH*/scale` is the
/// Lanczos matrix of a Wishart matrix started at `e₁`.
#[derive(Clone, Debug, PartialEq)]
pub struct BidiagonalChi {
    /// `diag[j] ~ χ_{β(m−j)}`
    pub diag: Vec<f64>,
    /// `subdiag[j] ~ χ_{β(n−1−j)}`, the entry at row `j+1`, column `j`
    pub subdiag: Vec<f64>,
    pub scale: f64,
}

impl BidiagonalChi {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// The Jacobi matrix `H H* / scale`.
    pub fn tridiagonal(&self) -> SymmetricTridiagonal {
        let n = self.n();
        let s = 1.0 / self.scale;
        let alpha = (0..n)
            .map(|i| {
                let below = if i > 0 { self.subdiag[i - 1].powi(2) } else { 0.0 };
                (self.diag[i].powi(2) + below) * s
            })
            .collect();
        let off = (0..n.saturating_sub(1))
            .map(|i| self.subdiag[i] * self.diag[i] * s)
            .collect();
        SymmetricTridiagonal::new(alpha, off).expect("lengths agree by construction")
    }

    /// Dense copy of `H` (n×n).
    pub fn to_dense(&self) -> DenseMatrix<f64> {
        let n = self.n();
        let mut h = DenseMatrix::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = self.diag[i];
            if i + 1 < n {
                h[(i + 1, i)] = self.subdiag[i];
            }
        }
        h
    }
}

pub fn sample_bidiagonal_chi<R: Rng + ?Sized>(spec: &EnsembleSpec, rng: &mut R) -> Result<BidiagonalChi> {
    spec.validate()?;
    if spec.kind != EnsembleKind::ChiBidiagonal {
        return Err(Error::Unsupported(format!(
            "sample_bidiagonal_chi requires the chi-bidiagonal ensemble, got {:?}",
            spec.kind
        )));
    }
    let (n, m) = (spec.n, spec.m());
    let beta = spec.beta.as_f64();
    let mut diag = Vec::with_capacity(n);
    let mut subdiag = Vec::with_capacity(n.saturating_sub(1));
    // Draw order follows the rows of H: diagonal entry, then the entry below it.
    for j in 0..n {
        diag.push(sample_chi(beta * (m - j) as f64, rng)?);
        if j + 1 < n {
            subdiag.push(sample_chi(beta * (n - 1 - j) as f64, rng)?);
        }
    }
    Ok(BidiagonalChi {
        diag,
        subdiag,
        scale: beta * m as f64,
    })
}

/// Squared first eigenvector components, `ω = ν / ‖ν‖₁` with `ν_j ~ χ²_β`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralWeights {
    pub omega: Vec<f64>,
}

impl SpectralWeights {
    pub fn from_unnormalized(nu: Vec<f64>) -> Result<Self> {
        if nu.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Validation("weights must be finite and nonnegative".into()));
        }
        let total = pairwise_sum(&nu);
        if !(total > 0.0) {
            return Err(Error::Validation("weights sum to zero".into()));
        }
        Ok(SpectralWeights {
            omega: nu.into_iter().map(|v| v / total).collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        pairwise_sum(&self.omega)
    }
}

pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

pub fn sample_spectral_weights<R: Rng + ?Sized>(n: usize, beta: Beta, rng: &mut R) -> Result<SpectralWeights> {
    if n == 0 {
        return Err(Error::param("n must be positive"));
    }
    let nu = (0..n)
        .map(|_| sample_chi_squared(beta.as_f64(), rng))
        .collect::<Result<Vec<_>>>()?;
    SpectralWeights::from_unnormalized(nu)
}

/// Right-hand side of length `n` in the field of `S`.
pub fn sample_rhs<S: Scalar, R: Rng + ?Sized>(n: usize, kind: RhsKind, rng: &mut R) -> Vec<S> {
    match kind {
        RhsKind::FirstBasisVector => {
            let mut b = vec![S::zero(); n];
            b[0] = S::one();
            b
        }
        RhsKind::RandomUnit => loop {
            let v: Vec<S> = (0..n)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = if S::BETA == 2 { rng.sample(StandardNormal) } else { 0.0 };
                    S::from_parts(re, im)
                })
                .collect();
            let r = norm(&v);
            if r > 0.0 {
                break v.into_iter().map(|x| x.scale(1.0 / r)).collect();
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        sample_rng(seed, 0)
    }

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn m_is_floor_of_ratio() {
        let s = EnsembleSpec::new(800, 0.2, Beta::Real, EnsembleKind::GaussianWishart, 0).unwrap();
        assert_eq!(s.m(), 4000);
        let s = EnsembleSpec::new(2000, 0.2, Beta::Real, EnsembleKind::GaussianWishart, 0).unwrap();
        assert_eq!(s.m(), 10000);
        let s = EnsembleSpec::new(100, 0.3, Beta::Real, EnsembleKind::GaussianWishart, 0).unwrap();
        assert_eq!(s.m(), 333);
        let s = EnsembleSpec::new(7, 1.0, Beta::Real, EnsembleKind::GaussianWishart, 0).unwrap();
        assert_eq!(s.m(), 7);
    }

    #[test]
    fn spec_validation() {
        assert!(EnsembleSpec::new(0, 0.5, Beta::Real, EnsembleKind::GaussianWishart, 0).is_err());
        assert!(EnsembleSpec::new(5, 0.0, Beta::Real, EnsembleKind::GaussianWishart, 0).is_err());
        assert!(EnsembleSpec::new(5, 1.5, Beta::Real, EnsembleKind::GaussianWishart, 0).is_err());
        assert!(matches!(
            EnsembleSpec::new(5, 0.5, Beta::Complex, EnsembleKind::BernoulliWishart, 0),
            Err(Error::Unsupported(_))
        ));
        assert!(Beta::try_from(4).is_err());
    }

    #[test]
    fn chi_rejects_nonpositive_df() {
        assert!(sample_chi(0.0, &mut rng(1)).is_err());
        assert!(sample_chi(-2.0, &mut rng(1)).is_err());
    }

    #[test]
    fn chi_two_mean() {
        // E[χ_2] = Γ(3/2)√2/Γ(1) = √(π/2)
        let mut r = rng(11);
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_chi(2.0, &mut r).unwrap()).collect();
        let (mean, se) = mean_and_se(&xs);
        let expected = (std::f64::consts::PI / 2.0).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} vs {expected} (se {se})");
    }

    #[test]
    fn chi_second_moment_is_df() {
        for &df in &[0.7, 1.0, 3.0, 17.5] {
            let mut r = rng(12);
            let xs: Vec<f64> = (0..200_000).map(|_| sample_chi(df, &mut r).unwrap().powi(2)).collect();
            let (mean, se) = mean_and_se(&xs);
            assert!((mean - df).abs() < 3.0 * se, "df {df}: {mean} (se {se})");
        }
    }

    #[test]
    fn chi_concentrates_for_large_df() {
        let mut r = rng(13);
        let df = 1e6;
        let close = (0..10_000)
            .filter(|_| (sample_chi(df, &mut r).unwrap() / df.sqrt() - 1.0).abs() < 0.01)
            .count();
        assert!(close >= 9_900);
    }

    #[test]
    fn one_by_one_wishart_is_squared_entry() {
        let spec = EnsembleSpec::new(1, 1.0, Beta::Real, EnsembleKind::GaussianWishart, 3).unwrap();
        let f = sample_factor(&spec, &mut sample_rng(3, 9)).unwrap();
        let x = match &f {
            WishartFactor::Real { x, .. } => x[(0, 0)],
            _ => unreachable!(),
        };
        let w = sample_dense_wishart(&spec, &mut sample_rng(3, 9)).unwrap();
        match w {
            DenseWishart::Real(w) => assert_eq!(w[(0, 0)], x * x),
            _ => unreachable!(),
        }
    }

    #[test]
    fn dense_wishart_is_exactly_hermitian() {
        for beta in [Beta::Real, Beta::Complex] {
            let spec = EnsembleSpec::new(30, 0.5, beta, EnsembleKind::GaussianWishart, 5).unwrap();
            let w = sample_dense_wishart(&spec, &mut sample_rng(5, 0)).unwrap();
            assert_eq!(w.hermitian_defect(), 0.0);
        }
        let spec = EnsembleSpec::new(30, 0.5, Beta::Real, EnsembleKind::BernoulliWishart, 5).unwrap();
        let w = sample_dense_wishart(&spec, &mut sample_rng(5, 0)).unwrap();
        assert_eq!(w.hermitian_defect(), 0.0);
    }

    #[test]
    fn normalized_trace_has_unit_mean() {
        for beta in [Beta::Real, Beta::Complex] {
            let spec = EnsembleSpec::new(50, 0.5, beta, EnsembleKind::GaussianWishart, 21).unwrap();
            let xs: Vec<f64> = (0..2_000)
                .map(|i| sample_dense_wishart(&spec, &mut sample_rng(21, i)).unwrap().trace() / 50.0)
                .collect();
            let (mean, se) = mean_and_se(&xs);
            assert!((mean - 1.0).abs() < 3.0 * se, "beta {beta:?}: {mean} (se {se})");
        }
    }

    #[test]
    fn bernoulli_entries_are_signs() {
        let spec = EnsembleSpec::new(4, 0.5, Beta::Real, EnsembleKind::BernoulliWishart, 2).unwrap();
        match sample_factor(&spec, &mut rng(2)).unwrap() {
            WishartFactor::Real { x, scale } => {
                assert_eq!(scale, 8.0);
                assert!(x.as_slice().iter().all(|v| *v == 1.0 || *v == -1.0));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn bidiagonal_shapes() {
        let spec = EnsembleSpec::new(1, 0.25, Beta::Real, EnsembleKind::ChiBidiagonal, 0).unwrap();
        let h = sample_bidiagonal_chi(&spec, &mut rng(0)).unwrap();
        assert_eq!(h.diag.len(), 1);
        assert!(h.subdiag.is_empty());
        assert_eq!(h.scale, 4.0);

        let spec = EnsembleSpec::new(10, 0.25, Beta::Complex, EnsembleKind::ChiBidiagonal, 0).unwrap();
        let h = sample_bidiagonal_chi(&spec, &mut rng(0)).unwrap();
        assert_eq!((h.diag.len(), h.subdiag.len()), (10, 9));
        assert!(h.diag.iter().chain(&h.subdiag).all(|v| *v > 0.0));
        let t = h.tridiagonal();
        assert!(t.off_diagonal().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn bidiagonal_rejects_dense_kinds() {
        let spec = EnsembleSpec::new(3, 0.5, Beta::Real, EnsembleKind::GaussianWishart, 0).unwrap();
        assert!(sample_bidiagonal_chi(&spec, &mut rng(0)).is_err());
        let spec = EnsembleSpec::new(3, 0.5, Beta::Real, EnsembleKind::ChiBidiagonal, 0).unwrap();
        assert!(sample_factor(&spec, &mut rng(0)).is_err());
    }

    #[test]
    fn bidiagonal_leading_entry_mean() {
        for beta in [Beta::Real, Beta::Complex] {
            let spec = EnsembleSpec::new(20, 0.4, beta, EnsembleKind::ChiBidiagonal, 8).unwrap();
            let xs: Vec<f64> = (0..10_000)
                .map(|i| {
                    let h = sample_bidiagonal_chi(&spec, &mut sample_rng(8, i)).unwrap();
                    h.diag[0].powi(2) / h.scale
                })
                .collect();
            let (mean, se) = mean_and_se(&xs);
            assert!((mean - 1.0).abs() < 3.0 * se, "{mean} (se {se})");
        }
    }

    #[test]
    fn tridiagonal_matches_dense_product() {
        let spec = EnsembleSpec::new(8, 0.5, Beta::Real, EnsembleKind::ChiBidiagonal, 4).unwrap();
        let h = sample_bidiagonal_chi(&spec, &mut rng(4)).unwrap();
        let hd = h.to_dense();
        let prod = hd.matmul(&hd.conj_transpose()).unwrap();
        let t = h.tridiagonal().to_dense();
        for i in 0..8 {
            for j in 0..8 {
                assert!((prod[(i, j)] / h.scale - t[(i, j)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn spectral_weights_single() {
        let w = sample_spectral_weights(1, Beta::Real, &mut rng(0)).unwrap();
        assert_eq!(w.omega, vec![1.0]);
    }

    #[test]
    fn spectral_weight_mean_is_one_over_n() {
        let xs: Vec<f64> = (0..10_000)
            .map(|i| sample_spectral_weights(1000, Beta::Real, &mut sample_rng(77, i)).unwrap().omega[0])
            .collect();
        let (mean, se) = mean_and_se(&xs);
        assert!((mean - 1e-3).abs() < 3.0 * se, "{mean} (se {se})");
    }

    #[test]
    fn random_unit_rhs_has_unit_norm() {
        let b: Vec<f64> = sample_rhs(40, RhsKind::RandomUnit, &mut rng(1));
        assert!((norm(&b) - 1.0).abs() < 1e-14);
        let b: Vec<Complex64> = sample_rhs(40, RhsKind::RandomUnit, &mut rng(1));
        assert!((norm(&b) - 1.0).abs() < 1e-14);
        assert!(b.iter().any(|z| z.im != 0.0));
        let e: Vec<f64> = sample_rhs(3, RhsKind::FirstBasisVector, &mut rng(1));
        assert_eq!(e, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn identical_specs_reproduce_bit_for_bit() {
        let spec = EnsembleSpec::new(12, 0.3, Beta::Complex, EnsembleKind::GaussianWishart, 99).unwrap();
        let a = sample_dense_wishart(&spec, &mut sample_rng(99, 4)).unwrap();
        let b = sample_dense_wishart(&spec, &mut sample_rng(99, 4)).unwrap();
        match (a, b) {
            (DenseWishart::Complex(a), DenseWishart::Complex(b)) => assert_eq!(a, b),
            _ => unreachable!(),
        }
        let c = sample_dense_wishart(&spec, &mut sample_rng(99, 5)).unwrap();
        let d = sample_dense_wishart(&spec, &mut sample_rng(99, 4)).unwrap();
        match (c, d) {
            (DenseWishart::Complex(c), DenseWishart::Complex(d)) => assert_ne!(c, d),
            _ => unreachable!(),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn weights_are_normalized(n in 1usize..400, seed in any::<u64>(), complex in any::<bool>()) {
                let beta = if complex { Beta::Complex } else { Beta::Real };
                let w = sample_spectral_weights(n, beta, &mut sample_rng(seed, 0)).unwrap();
                prop_assert!(w.omega.iter().all(|v| *v >= 0.0));
                prop_assert!((w.sum() - 1.0).abs() <= 1e-14);
            }

            #[test]
            fn bidiagonal_is_reproducible(n in 1usize..50, seed in any::<u64>(), idx in any::<u64>()) {
                let spec = EnsembleSpec::new(n, 0.5, Beta::Real, EnsembleKind::ChiBidiagonal, seed).unwrap();
                let a = sample_bidiagonal_chi(&spec, &mut sample_rng(seed, idx)).unwrap();
                let b = sample_bidiagonal_chi(&spec, &mut sample_rng(seed, idx)).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
