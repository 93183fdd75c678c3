//! Monte Carlo drivers over sample-indexed random systems, with
//! deterministic aggregation and JSON/CSV output.

use std::io::Write;
use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dense::{norm, DenseMatrix, Scalar};
use crate::ensembles::{
    sample_bidiagonal_chi, sample_factor, sample_rhs, sample_rng, DenseWishart, EnsembleKind, EnsembleSpec, RhsKind,
    WishartFactor,
};
use crate::error::{Error, Result};
use crate::krylov::{
    cg_error_trajectory, conjugate_gradient, halting_time, ErrorTrajectory, ExactSolver, GramOperator, LinearOperator,
    SymmetricTridiagonal, TrajectoryOptions, RESIDUAL_FLOOR,
};
use crate::spectral::{
    eigen_dense, eigen_dense_first_weights, eigen_tridiagonal, eigenvalues_dense, eigenvalues_tridiagonal, ks_distance,
    ks_distance_cdf, SpectralMeasure,
};
use crate::theory::{classical_cg_bound, limit_error, limit_error_sq, predict_halting, HaltingPrediction, MpLaw};

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Lower and upper quantile levels of the symmetric 99.9% band.
pub const BAND: (f64, f64) = (0.0005, 0.9995);

/// Environment variable consulted when no worker count is given.
pub const WORKERS_ENV: &str = "CG_WISHART_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Errors,
    Halting,
    Clt,
    Spectrum,
    Ks,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::Errors => "errors",
            ExperimentKind::Halting => "halting",
            ExperimentKind::Clt => "clt",
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::Ks => "ks",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleSpec,
    pub samples: usize,
    pub kmax: usize,
    pub ell_list: Vec<i32>,
    pub eps_list: Vec<f64>,
    pub rhs: RhsKind,
    pub output_path: Option<String>,
    /// Worker threads; 0 picks the hardware default. Not serialized, so
    /// outputs do not depend on it.
    #[serde(default, skip_serializing)]
    pub workers: usize,
    /// Store wall time in the summary (makes repeated outputs differ).
    pub record_timing: bool,
}

impl ExperimentConfig {
    /// Defaults: 2000 samples, `kmax = 20`, `ℓ ∈ {1, 2}`, `e₁` as right-hand
    /// side (a random unit vector for the Bernoulli ensemble).
    pub fn new(ensemble: EnsembleSpec) -> Self {
        let rhs = if ensemble.kind == EnsembleKind::BernoulliWishart {
            RhsKind::RandomUnit
        } else {
            RhsKind::FirstBasisVector
        };
        ExperimentConfig {
            ensemble,
            samples: 2000,
            kmax: 20,
            ell_list: vec![1, 2],
            eps_list: Vec::new(),
            rhs,
            output_path: None,
            workers: 0,
            record_timing: false,
        }
    }

    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        self.ensemble.validate()?;
        if self.samples == 0 {
            return Err(Error::param("samples must be at least 1"));
        }
        if self.kmax == 0 && matches!(kind, ExperimentKind::Errors | ExperimentKind::Halting | ExperimentKind::Clt) {
            return Err(Error::param("kmax must be at least 1"));
        }
        if let Some(e) = self.eps_list.iter().find(|e| !(**e > 0.0)) {
            return Err(Error::param(format!("eps values must be positive, got {e}")));
        }
        match (self.ensemble.kind, self.rhs) {
            (EnsembleKind::BernoulliWishart, RhsKind::FirstBasisVector) => {
                return Err(Error::param("the Bernoulli ensemble requires a random unit right-hand side"));
            }
            (EnsembleKind::ChiBidiagonal, RhsKind::RandomUnit) => {
                return Err(Error::Unsupported("the chi-bidiagonal model is defined for b = e1 only".into()));
            }
            _ => {}
        }
        let d = self.ensemble.d;
        match kind {
            ExperimentKind::Errors => {
                if self.ell_list.is_empty() {
                    return Err(Error::param("ell_list must not be empty"));
                }
                for &ell in &self.ell_list {
                    crate::theory::check_ell_for_aspect(ell, d)?;
                }
            }
            ExperimentKind::Halting => {
                if self.eps_list.is_empty() {
                    return Err(Error::param("halting runs need at least one eps"));
                }
                if self.ell_list.is_empty() || self.ell_list.iter().any(|l| !(*l == 1 || *l == 2)) {
                    return Err(Error::param("halting times are defined for ell in {1, 2}"));
                }
                for &ell in &self.ell_list {
                    crate::theory::check_ell_for_aspect(ell, d)?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Effective worker count: the explicit setting, else the environment
    /// variable, else 0 (hardware default).
    pub fn effective_workers(&self) -> usize {
        if self.workers > 0 {
            return self.workers;
        }
        std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(0)
    }

    fn same_experiment(&self, other: &Self) -> bool {
        self.ensemble == other.ensemble
            && self.samples == other.samples
            && self.kmax == other.kmax
            && self.ell_list == other.ell_list
            && self.eps_list == other.eps_list
            && self.rhs == other.rhs
    }

    fn needs_exact(&self, kind: ExperimentKind) -> bool {
        match kind {
            ExperimentKind::Errors | ExperimentKind::Halting => self.ell_list.iter().any(|&l| l != 2),
            _ => false,
        }
    }
}

/// Raw per-sample output; statistics are computed from these in index order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: u64,
    pub residual_norms: Vec<f64>,
    /// Parallel to `ell_list`.
    pub norms: Vec<Vec<f64>>,
    /// One entry per `(ell, eps)` pair, `ell` outermost.
    pub halting: Vec<Option<usize>>,
    pub kappa: Option<f64>,
    pub eigenvalues: Vec<f64>,
    pub ks: Option<f64>,
}

impl SampleRecord {
    fn new(index: u64) -> Self {
        SampleRecord {
            index,
            residual_norms: Vec::new(),
            norms: Vec::new(),
            halting: Vec::new(),
            kappa: None,
            eigenvalues: Vec::new(),
            ks: None,
        }
    }
}

/// Records for a sub-range of sample indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialSummary {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub records: Vec<SampleRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KStatistics {
    pub k: usize,
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub q_low: f64,
    pub q_high: f64,
    pub theory: Option<f64>,
    /// Mean of `|x² − 𝔢²|` against the squared limit, when it exists.
    pub mean_abs_sq_deviation: Option<f64>,
}

impl KStatistics {
    pub fn band_width(&self) -> f64 {
        self.q_high - self.q_low
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSeries {
    pub name: String,
    pub ell: i32,
    pub per_k: Vec<KStatistics>,
}

impl NormSeries {
    pub fn at(&self, k: usize) -> Option<&KStatistics> {
        self.per_k.iter().find(|s| s.k == k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaltingHistogram {
    pub ell: i32,
    pub eps: f64,
    pub prediction: Option<HaltingPrediction>,
    /// Sorted `(halting time, count)` pairs.
    pub counts: Vec<(usize, u64)>,
    /// Samples that did not halt within `kmax`.
    pub not_reached: u64,
}

impl HaltingHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|c| c.1).sum::<u64>() + self.not_reached
    }

    pub fn fraction_at(&self, k: usize) -> f64 {
        let c = self.counts.iter().find(|c| c.0 == k).map_or(0, |c| c.1);
        c as f64 / self.total().max(1) as f64
    }

    /// Most frequent halting time, smallest on ties.
    pub fn mode(&self) -> Option<usize> {
        self.counts.iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|c| c.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fluctuation {
    pub k: usize,
    /// `g_k = ‖r_k‖² − d^k` in sample order.
    pub samples: Vec<f64>,
    /// `g_k / ⟨g_k²⟩^{1/2}`
    pub normalized: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub normalized_mean: f64,
    pub normalized_std_error: f64,
    /// KS distance of the normalized samples to the standard normal.
    pub ks_normal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub checked: u64,
    pub violations: u64,
    /// Largest observed `‖e_k‖_W / (bound · ‖e₀‖_W)`.
    pub worst_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    /// Eigenvalues of all samples, concatenated in sample order.
    pub eigenvalues: Vec<f64>,
    pub histogram: Vec<HistogramBin>,
    /// `(x, ρ_MP(x))` on a uniform grid over the support.
    pub mp_curve: Vec<(f64, f64)>,
    /// Fraction of eigenvalues in `[d₋ − 0.1, d₊ + 0.1]`.
    pub support_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub experiment: ExperimentKind,
    pub version: String,
    pub config: ExperimentConfig,
    pub norms: Vec<NormSeries>,
    pub halting: Vec<HaltingHistogram>,
    pub fluctuations: Vec<Fluctuation>,
    pub ks_samples: Vec<f64>,
    pub ks_mean: Option<f64>,
    pub classical_bound: Option<BoundCheck>,
    pub spectrum: Option<SpectrumSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

impl MonteCarloSummary {
    pub fn norm_series(&self, name: &str) -> Option<&NormSeries> {
        self.norms.iter().find(|s| s.name == name)
    }

    pub fn histogram(&self, ell: i32, eps: f64) -> Option<&HaltingHistogram> {
        self.halting.iter().find(|h| h.ell == ell && h.eps == eps)
    }

    pub fn fluctuation(&self, k: usize) -> Option<&Fluctuation> {
        self.fluctuations.iter().find(|f| f.k == k)
    }
}

enum Operator {
    DenseReal(DenseMatrix<f64>),
    DenseComplex(DenseMatrix<Complex64>),
    GramReal(GramOperator<f64>),
    GramComplex(GramOperator<Complex64>),
    Jacobi(SymmetricTridiagonal),
}

enum Rhs {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// Draws sample `index`: the matrix first, then the right-hand side, from the
/// sample's own RNG stream. `dense` forms `W` explicitly.
fn draw_system(config: &ExperimentConfig, index: u64, dense: bool) -> Result<(Operator, Rhs)> {
    let spec = &config.ensemble;
    let mut rng = sample_rng(spec.seed, index);
    let n = spec.n;
    if spec.kind == EnsembleKind::ChiBidiagonal {
        let t = sample_bidiagonal_chi(spec, &mut rng)?.tridiagonal();
        return Ok((Operator::Jacobi(t), Rhs::Real(sample_rhs(n, RhsKind::FirstBasisVector, &mut rng))));
    }
    let factor = sample_factor(spec, &mut rng)?;
    let op = match (dense, factor) {
        (true, f) => match f.to_wishart() {
            DenseWishart::Real(w) => Operator::DenseReal(w),
            DenseWishart::Complex(w) => Operator::DenseComplex(w),
        },
        (false, WishartFactor::Real { x, scale }) => Operator::GramReal(GramOperator::new(x, scale)),
        (false, WishartFactor::Complex { x, scale }) => Operator::GramComplex(GramOperator::new(x, scale)),
    };
    let rhs = match op {
        Operator::DenseComplex(_) | Operator::GramComplex(_) => Rhs::Complex(sample_rhs(n, config.rhs, &mut rng)),
        _ => Rhs::Real(sample_rhs(n, config.rhs, &mut rng)),
    };
    Ok((op, rhs))
}

/// Eigenvalues of sample `index` of `spec` (ascending), as used by the
/// spectrum experiment.
pub fn sample_eigenvalues(spec: &EnsembleSpec, index: u64) -> Result<Vec<f64>> {
    let config = ExperimentConfig::new(*spec);
    let (op, _) = draw_system(&config, index, true)?;
    eigenvalues_of(&op)
}

fn eigenvalues_of(op: &Operator) -> Result<Vec<f64>> {
    match op {
        Operator::DenseReal(w) => eigenvalues_dense(w),
        Operator::DenseComplex(w) => eigenvalues_dense(w),
        Operator::Jacobi(t) => eigenvalues_tridiagonal(t),
        _ => Err(Error::Unsupported("eigenvalues need an explicit matrix".into())),
    }
}

fn residual_norms<S: Scalar, A: LinearOperator<S> + ?Sized>(
    op: &A,
    b: &[S],
    kmax: usize,
    stop: Option<f64>,
) -> Result<Vec<f64>> {
    let floor = RESIDUAL_FLOOR * norm(b);
    let eps = stop.map_or(floor, |s| s.max(floor));
    conjugate_gradient(op, b, kmax, Some(eps))?.map(|s| s.map(|s| s.residual_norm)).collect()
}

fn residuals_of(op: &Operator, rhs: &Rhs, kmax: usize, stop: Option<f64>) -> Result<Vec<f64>> {
    match (op, rhs) {
        (Operator::DenseReal(w), Rhs::Real(b)) => residual_norms(w, b, kmax, stop),
        (Operator::DenseComplex(w), Rhs::Complex(b)) => residual_norms(w, b, kmax, stop),
        (Operator::GramReal(w), Rhs::Real(b)) => residual_norms(w, b, kmax, stop),
        (Operator::GramComplex(w), Rhs::Complex(b)) => residual_norms(w, b, kmax, stop),
        (Operator::Jacobi(t), Rhs::Real(b)) => residual_norms(t, b, kmax, stop),
        _ => unreachable!("operator and right-hand side share a field"),
    }
}

fn trajectory_of(op: &Operator, rhs: &Rhs, opts: &TrajectoryOptions) -> Result<ErrorTrajectory> {
    fn run<S: Scalar, A: ExactSolver<S>>(op: &A, b: &[S], opts: &TrajectoryOptions) -> Result<ErrorTrajectory> {
        cg_error_trajectory(op, b, opts)
    }
    match (op, rhs) {
        (Operator::DenseReal(w), Rhs::Real(b)) => run(w, b, opts),
        (Operator::DenseComplex(w), Rhs::Complex(b)) => run(w, b, opts),
        (Operator::Jacobi(t), Rhs::Real(b)) => run(t, b, opts),
        _ => Err(Error::Unsupported("error norms need an explicit matrix".into())),
    }
}

/// Atoms and weights of the spectral measure of `(W, b)`.
fn spectral_pair(op: &Operator, rhs: &Rhs, rhs_kind: RhsKind) -> Result<(Vec<f64>, Vec<f64>)> {
    fn weighted<S: Scalar>(w: &DenseMatrix<S>, b: &[S], kind: RhsKind) -> Result<(Vec<f64>, Vec<f64>)> {
        if kind == RhsKind::FirstBasisVector {
            return eigen_dense_first_weights(w);
        }
        let e = eigen_dense(w)?;
        let c = e.vectors.conj_transpose().matvec(b);
        Ok((e.values, c.iter().map(|z| z.abs_sq()).collect()))
    }
    match (op, rhs) {
        (Operator::DenseReal(w), Rhs::Real(b)) => weighted(w, b, rhs_kind),
        (Operator::DenseComplex(w), Rhs::Complex(b)) => weighted(w, b, rhs_kind),
        (Operator::Jacobi(t), _) => eigen_tridiagonal(t),
        _ => Err(Error::Unsupported("spectral weights need an explicit matrix".into())),
    }
}

fn sample_record(kind: ExperimentKind, config: &ExperimentConfig, index: u64) -> Result<SampleRecord> {
    let mut rec = SampleRecord::new(index);
    let exact = config.needs_exact(kind);
    let dense = exact || matches!(kind, ExperimentKind::Spectrum | ExperimentKind::Ks);
    let (op, rhs) = draw_system(config, index, dense)?;
    let d = config.ensemble.d;
    match kind {
        ExperimentKind::Errors => {
            if exact {
                let opts = TrajectoryOptions { kmax: config.kmax, ell_list: config.ell_list.clone(), aspect_ratio: Some(d) };
                let tr = trajectory_of(&op, &rhs, &opts)?;
                if config.ell_list.contains(&1) {
                    let vals = eigenvalues_of(&op)?;
                    rec.kappa = Some(crate::spectral::condition_number(&vals)?);
                }
                rec.residual_norms = tr.residual_norms;
                rec.norms = tr.norms;
            } else {
                rec.residual_norms = residuals_of(&op, &rhs, config.kmax, None)?;
                rec.norms = vec![rec.residual_norms.clone(); config.ell_list.len()];
            }
        }
        ExperimentKind::Halting => {
            let tr = if exact {
                let opts = TrajectoryOptions { kmax: config.kmax, ell_list: config.ell_list.clone(), aspect_ratio: Some(d) };
                trajectory_of(&op, &rhs, &opts)?
            } else {
                let stop = config.eps_list.iter().copied().fold(f64::INFINITY, f64::min);
                ErrorTrajectory {
                    ell_list: Vec::new(),
                    norms: Vec::new(),
                    residual_norms: residuals_of(&op, &rhs, config.kmax, Some(stop))?,
                    kmax: config.kmax,
                }
            };
            for &ell in &config.ell_list {
                for &eps in &config.eps_list {
                    rec.halting.push(halting_time(&tr, ell, eps)?);
                }
            }
            rec.residual_norms = tr.residual_norms;
        }
        ExperimentKind::Clt => {
            rec.residual_norms = residuals_of(&op, &rhs, config.kmax, None)?;
        }
        ExperimentKind::Spectrum => {
            let vals = eigenvalues_of(&op)?;
            let law = MpLaw::new(d)?;
            rec.ks = Some(ks_distance_cdf(&SpectralMeasure::empirical(&vals)?, |x| law.cdf(x)));
            rec.eigenvalues = vals;
        }
        ExperimentKind::Ks => {
            let (vals, weights) = spectral_pair(&op, &rhs, config.rhs)?;
            let total = crate::ensembles::pairwise_sum(&weights);
            let nu = SpectralMeasure::new(vals.clone(), weights.iter().map(|w| w / total).collect())?;
            let mu = SpectralMeasure::empirical(&vals)?;
            rec.ks = Some(ks_distance(&mu, &nu));
        }
    }
    Ok(rec)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))
}

/// Runs the samples with indices in `range`.
pub fn run_partial(kind: ExperimentKind, config: &ExperimentConfig, range: Range<u64>) -> Result<PartialSummary> {
    config.validate(kind)?;
    if range.end > config.samples as u64 {
        return Err(Error::param(format!("sample range {range:?} exceeds {} samples", config.samples)));
    }
    let records = pool(config.effective_workers())?.install(|| {
        range
            .into_par_iter()
            .map(|i| sample_record(kind, config, i).map_err(|e| e.at_sample(i)))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(PartialSummary { kind, config: config.clone(), records })
}

pub fn run(kind: ExperimentKind, config: &ExperimentConfig) -> Result<MonteCarloSummary> {
    let start = Instant::now();
    let partial = run_partial(kind, config, 0..config.samples as u64)?;
    let mut summary = aggregate(vec![partial])?;
    if config.record_timing {
        summary.wall_time_seconds = Some(start.elapsed().as_secs_f64());
    }
    Ok(summary)
}

pub fn run_error_concentration(config: &ExperimentConfig) -> Result<MonteCarloSummary> {
    run(ExperimentKind::Errors, config)
}

pub fn run_halting_histogram(config: &ExperimentConfig) -> Result<MonteCarloSummary> {
    run(ExperimentKind::Halting, config)
}

pub fn run_clt_fluctuations(config: &ExperimentConfig) -> Result<MonteCarloSummary> {
    run(ExperimentKind::Clt, config)
}

pub fn run_spectrum_vs_mp(config: &ExperimentConfig) -> Result<MonteCarloSummary> {
    run(ExperimentKind::Spectrum, config)
}

pub fn run_weighted_vs_unweighted_ks(config: &ExperimentConfig) -> Result<MonteCarloSummary> {
    run(ExperimentKind::Ks, config)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * t
}

fn mean(xs: &[f64]) -> f64 {
    crate::ensembles::pairwise_sum(xs) / xs.len() as f64
}

/// Sample variance with the `n − 1` denominator; zero for a single value.
fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    crate::ensembles::pairwise_sum(&sq) / (xs.len() - 1) as f64
}

fn k_statistics(k: usize, values: &[f64], limit_sq: Option<f64>) -> KStatistics {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = mean(values);
    KStatistics {
        k,
        count: values.len(),
        mean: m,
        variance: variance(values),
        q_low: quantile(&sorted, BAND.0).min(m),
        q_high: quantile(&sorted, BAND.1).max(m),
        theory: limit_sq.map(f64::sqrt),
        mean_abs_sq_deviation: limit_sq.map(|l| {
            let dev: Vec<f64> = values.iter().map(|v| (v * v - l).abs()).collect();
            mean(&dev)
        }),
    }
}

fn series(name: String, ell: i32, trajectories: &[&[f64]], kmax: usize, d: f64) -> NormSeries {
    let per_k = (0..=kmax)
        .filter_map(|k| {
            let vals: Vec<f64> = trajectories.iter().filter_map(|t| t.get(k).copied()).collect();
            (!vals.is_empty()).then(|| k_statistics(k, &vals, limit_error_sq(ell, k, d).ok()))
        })
        .collect();
    NormSeries { name, ell, per_k }
}

/// Merges partial runs into the summary of the full sample range. Records
/// must cover `0..samples` exactly once; statistics are computed in sample
/// index order, so the result does not depend on how the range was split.
pub fn aggregate(partials: Vec<PartialSummary>) -> Result<MonteCarloSummary> {
    let first = partials.first().ok_or_else(|| Error::Aggregation("no partial summaries".into()))?;
    let kind = first.kind;
    let config = first.config.clone();
    for p in &partials[1..] {
        if p.kind != kind || !p.config.same_experiment(&config) {
            return Err(Error::Aggregation("partials come from different experiments".into()));
        }
    }
    let mut records: Vec<SampleRecord> = partials.into_iter().flat_map(|p| p.records).collect();
    records.sort_by_key(|r| r.index);
    for (i, r) in records.iter().enumerate() {
        if r.index != i as u64 {
            return Err(Error::Aggregation(format!("sample {i} is missing or duplicated")));
        }
    }
    if records.len() != config.samples {
        return Err(Error::Aggregation(format!("{} of {} samples present", records.len(), config.samples)));
    }
    let d = config.ensemble.d;
    let mut summary = MonteCarloSummary {
        experiment: kind,
        version: VERSION.to_string(),
        config: config.clone(),
        norms: Vec::new(),
        halting: Vec::new(),
        fluctuations: Vec::new(),
        ks_samples: Vec::new(),
        ks_mean: None,
        classical_bound: None,
        spectrum: None,
        wall_time_seconds: None,
    };
    match kind {
        ExperimentKind::Errors => {
            let res: Vec<&[f64]> = records.iter().map(|r| r.residual_norms.as_slice()).collect();
            summary.norms.push(series("residual".into(), 2, &res, config.kmax, d));
            for (i, &ell) in config.ell_list.iter().enumerate() {
                let tr: Vec<&[f64]> = records.iter().map(|r| r.norms[i].as_slice()).collect();
                summary.norms.push(series(format!("ell={ell}"), ell, &tr, config.kmax, d));
            }
            if let Some(pos) = config.ell_list.iter().position(|&l| l == 1) {
                let mut check = BoundCheck { checked: 0, violations: 0, worst_ratio: 0.0 };
                for r in records.iter() {
                    let Some(kappa) = r.kappa else { continue };
                    let w = &r.norms[pos];
                    for (k, &v) in w.iter().enumerate() {
                        let bound = classical_cg_bound(kappa, k)? * w[0];
                        check.checked += 1;
                        if v > bound {
                            check.violations += 1;
                        }
                        if bound > 0.0 {
                            check.worst_ratio = check.worst_ratio.max(v / bound);
                        }
                    }
                }
                if check.checked > 0 {
                    summary.classical_bound = Some(check);
                }
            }
        }
        ExperimentKind::Halting => {
            let mut slot = 0;
            for &ell in &config.ell_list {
                for &eps in &config.eps_list {
                    let mut counts = std::collections::BTreeMap::<usize, u64>::new();
                    let mut not_reached = 0;
                    for r in &records {
                        match r.halting[slot] {
                            Some(t) => *counts.entry(t).or_default() += 1,
                            None => not_reached += 1,
                        }
                    }
                    summary.halting.push(HaltingHistogram {
                        ell,
                        eps,
                        prediction: predict_halting(ell, eps, d).ok(),
                        counts: counts.into_iter().collect(),
                        not_reached,
                    });
                    slot += 1;
                }
            }
            let res: Vec<&[f64]> = records.iter().map(|r| r.residual_norms.as_slice()).collect();
            summary.norms.push(series("residual".into(), 2, &res, config.kmax, d));
        }
        ExperimentKind::Clt => {
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            for k in 1..=config.kmax {
                let dk = limit_error_sq(2, k, d)?;
                let g: Vec<f64> = records.iter().filter_map(|r| r.residual_norms.get(k)).map(|r| r * r - dk).collect();
                if g.is_empty() {
                    continue;
                }
                let sq: Vec<f64> = g.iter().map(|x| x * x).collect();
                let rms = mean(&sq).sqrt();
                let normalized: Vec<f64> = if rms > 0.0 { g.iter().map(|x| x / rms).collect() } else { g.clone() };
                let ks_normal = ks_distance_cdf(&SpectralMeasure::empirical(&normalized)?, |x| normal.cdf(x));
                summary.fluctuations.push(Fluctuation {
                    k,
                    mean: mean(&g),
                    variance: variance(&g),
                    normalized_mean: mean(&normalized),
                    normalized_std_error: (variance(&normalized) / normalized.len() as f64).sqrt(),
                    ks_normal,
                    samples: g,
                    normalized,
                });
            }
            let res: Vec<&[f64]> = records.iter().map(|r| r.residual_norms.as_slice()).collect();
            summary.norms.push(series("residual".into(), 2, &res, config.kmax, d));
        }
        ExperimentKind::Spectrum => {
            let law = MpLaw::new(d)?;
            let eigenvalues: Vec<f64> = records.iter().flat_map(|r| r.eigenvalues.iter().copied()).collect();
            let (lo, hi) = (law.d_minus - 0.1, law.d_plus + 0.1);
            let inside = eigenvalues.iter().filter(|&&x| x >= lo && x <= hi).count();
            summary.spectrum = Some(SpectrumSummary {
                histogram: histogram(&eigenvalues, &law, 60),
                mp_curve: (0..=200)
                    .map(|i| {
                        let x = law.d_minus + (law.d_plus - law.d_minus) * i as f64 / 200.0;
                        (x, law.density(x))
                    })
                    .collect(),
                support_fraction: inside as f64 / eigenvalues.len() as f64,
                eigenvalues,
            });
            summary.ks_samples = records.iter().filter_map(|r| r.ks).collect();
            summary.ks_mean = Some(mean(&summary.ks_samples));
        }
        ExperimentKind::Ks => {
            summary.ks_samples = records.iter().filter_map(|r| r.ks).collect();
            summary.ks_mean = Some(mean(&summary.ks_samples));
        }
    }
    Ok(summary)
}

fn histogram(values: &[f64], law: &MpLaw, bins: usize) -> Vec<HistogramBin> {
    let lo = values.iter().copied().fold(law.d_minus, f64::min);
    let hi = values.iter().copied().fold(law.d_plus, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| HistogramBin {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            density: c as f64 / (values.len() as f64 * width),
        })
        .collect()
}

/// JSON formatter printing every float with 17 significant digits.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }
}

pub fn to_json(summary: &MonteCarloSummary) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    summary.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json(summary: &MonteCarloSummary, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(summary)?)?;
    Ok(())
}

/// One row of the long-format table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsvRow {
    pub experiment: &'static str,
    pub n: usize,
    pub d: String,
    pub beta: u8,
    pub ensemble: &'static str,
    pub k: String,
    pub statistic: String,
    pub value: String,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_rows(summary: &MonteCarloSummary) -> Vec<CsvRow> {
    let spec = &summary.config.ensemble;
    let row = |k: String, statistic: String, value: f64| CsvRow {
        experiment: summary.experiment.label(),
        n: spec.n,
        d: fmt17(spec.d),
        beta: spec.beta.value(),
        ensemble: spec.kind.label(),
        k,
        statistic,
        value: fmt17(value),
    };
    let mut rows = Vec::new();
    for s in &summary.norms {
        for st in &s.per_k {
            let k = st.k.to_string();
            rows.push(row(k.clone(), format!("{}:mean", s.name), st.mean));
            rows.push(row(k.clone(), format!("{}:variance", s.name), st.variance));
            rows.push(row(k.clone(), format!("{}:q_low", s.name), st.q_low));
            rows.push(row(k.clone(), format!("{}:q_high", s.name), st.q_high));
            if let Some(t) = st.theory {
                rows.push(row(k.clone(), format!("{}:theory", s.name), t));
            }
            if let Some(r) = st.mean_abs_sq_deviation {
                rows.push(row(k, format!("{}:mean_abs_sq_deviation", s.name), r));
            }
        }
    }
    for h in &summary.halting {
        let tag = format!("ell={}:eps={}", h.ell, fmt17(h.eps));
        for &(k, c) in &h.counts {
            rows.push(row(k.to_string(), format!("halting_count:{tag}"), c as f64));
        }
        rows.push(row(String::new(), format!("halting_not_reached:{tag}"), h.not_reached as f64));
        if let Some(p) = h.prediction {
            rows.push(row(String::new(), format!("halting_prediction:{tag}"), p.tau as f64));
        }
    }
    for f in &summary.fluctuations {
        let k = f.k.to_string();
        rows.push(row(k.clone(), "g:mean".into(), f.mean));
        rows.push(row(k.clone(), "g:variance".into(), f.variance));
        rows.push(row(k.clone(), "g:ks_normal".into(), f.ks_normal));
        for &v in &f.normalized {
            rows.push(row(k.clone(), "g:normalized_sample".into(), v));
        }
    }
    for (i, &v) in summary.ks_samples.iter().enumerate() {
        rows.push(row(i.to_string(), "ks".into(), v));
    }
    if let Some(sp) = &summary.spectrum {
        for (i, &v) in sp.eigenvalues.iter().enumerate() {
            rows.push(row(i.to_string(), "eigenvalue".into(), v));
        }
        for (i, &(x, y)) in sp.mp_curve.iter().enumerate() {
            rows.push(row(i.to_string(), "mp_x".into(), x));
            rows.push(row(i.to_string(), "mp_density".into(), y));
        }
    }
    if let Some(b) = &summary.classical_bound {
        rows.push(row(String::new(), "classical_bound:violations".into(), b.violations as f64));
        rows.push(row(String::new(), "classical_bound:worst_ratio".into(), b.worst_ratio));
    }
    rows
}

pub fn write_csv(summary: &MonteCarloSummary, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in csv_rows(summary) {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Validation(format!("csv: {other:?}")),
    }
}

/// Theory values attached to a summary for reporting.
pub fn theory_curve(ell: i32, kmax: usize, d: f64) -> Result<Vec<f64>> {
    (0..=kmax).map(|k| limit_error(ell, k, d)).collect()
}
