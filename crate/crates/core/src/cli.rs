//! Command-line front end.
//!
//! Exit codes: 0 success, 1 selftest failure, 2 invalid parameters or
//! configuration, 3 I/O failure, 4 solver breakdown.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::ensembles::{Beta, EnsembleKind, EnsembleSpec, RhsKind};
use crate::error::{Error, Result};
use crate::experiments::{self, ExperimentConfig, ExperimentKind, MonteCarloSummary};
use crate::theory::{exceptional_set, predict_halting};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFTEST: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_BREAKDOWN: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "cg-wishart", version, about = "Conjugate gradient on random Wishart systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Limit error norms, halting times and exceptional sets.
    TheoryTable(TheoryArgs),
    /// Limit halting time for one tolerance.
    Predict(PredictArgs),
    /// Concentration of error and residual norms.
    Errors(RunArgs),
    /// Halting time histograms.
    Halting(RunArgs),
    /// Fluctuations of squared residual norms.
    Clt(RunArgs),
    /// Eigenvalue histogram against the Marchenko-Pastur density.
    Spectrum(RunArgs),
    /// KS distance between weighted and uniform spectral measures.
    Ks(RunArgs),
    /// Fast invariant checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long)]
    pub d: f64,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = vec![1, 2])]
    pub ell: Vec<i32>,
    #[arg(long, default_value_t = 20)]
    pub kmax: usize,
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<f64>,
    /// `text` or `csv`.
    #[arg(long, default_value = "text")]
    pub format: String,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub ell: i32,
    #[arg(long)]
    pub d: f64,
    #[arg(long)]
    pub eps: f64,
}

#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub beta: Option<u8>,
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub ell: Option<Vec<i32>>,
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (falls back to CG_WISHART_WORKERS).
    #[arg(long)]
    pub workers: Option<usize>,
    /// gaussian, bernoulli or chi-bidiagonal.
    #[arg(long)]
    pub ensemble: Option<String>,
    /// e1 or random.
    #[arg(long)]
    pub rhs: Option<String>,
    /// Output path stem; `.json` and `.csv` are written next to each other.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Flat `key = value` file using the flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub record_timing: bool,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, hide = true)]
    pub corrupt_constant: bool,
}

/// Maps an error to its documented exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Io(_) => EXIT_IO,
        Error::Breakdown { .. } | Error::NotPositiveDefinite { .. } => EXIT_BREAKDOWN,
        _ => EXIT_VALIDATION,
    }
}

/// Parses a flat `key = value` file. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::Validation(format!("config key `{key}`: cannot parse `{value}`: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|v| parse_value(key, v)).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Validation(format!("config key `{key}`: expected a boolean, got `{value}`"))),
    }
}

/// Fills unset flags from config-file entries.
pub fn merge_config(args: &mut RunArgs, file: &BTreeMap<String, String>) -> Result<()> {
    for (key, value) in file {
        match key.as_str() {
            "n" => args.n = args.n.or(Some(parse_value(key, value)?)),
            "d" => args.d = args.d.or(Some(parse_value(key, value)?)),
            "beta" => args.beta = args.beta.or(Some(parse_value(key, value)?)),
            "eps" => {
                if args.eps.is_none() {
                    args.eps = Some(parse_list(key, value)?);
                }
            }
            "ell" => {
                if args.ell.is_none() {
                    args.ell = Some(parse_list(key, value)?);
                }
            }
            "kmax" => args.kmax = args.kmax.or(Some(parse_value(key, value)?)),
            "samples" => args.samples = args.samples.or(Some(parse_value(key, value)?)),
            "seed" => args.seed = args.seed.or(Some(parse_value(key, value)?)),
            "workers" => args.workers = args.workers.or(Some(parse_value(key, value)?)),
            "ensemble" => args.ensemble = args.ensemble.clone().or(Some(value.clone())),
            "rhs" => args.rhs = args.rhs.clone().or(Some(value.clone())),
            "output" => args.output = args.output.clone().or(Some(PathBuf::from(value))),
            "record-timing" => args.record_timing |= parse_bool(key, value)?,
            _ => return Err(Error::Validation(format!("unknown config key `{key}`"))),
        }
    }
    Ok(())
}

fn default_kmax(kind: ExperimentKind) -> usize {
    match kind {
        ExperimentKind::Halting => 60,
        _ => 20,
    }
}

/// Builds the effective experiment configuration from flags and the
/// optional config file (flags win).
pub fn effective_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut args = args.clone();
    if let Some(path) = args.config.take() {
        let text = std::fs::read_to_string(&path)?;
        merge_config(&mut args, &parse_config_text(&text)?)?;
    }
    let beta = Beta::try_from(args.beta.unwrap_or(1))?;
    let ensemble_kind: EnsembleKind = match &args.ensemble {
        Some(s) => s.parse()?,
        None => EnsembleKind::GaussianWishart,
    };
    let n = args.n.ok_or_else(|| Error::Validation("--n is required".into()))?;
    let d = args.d.ok_or_else(|| Error::Validation("--d is required".into()))?;
    let spec = EnsembleSpec::new(n, d, beta, ensemble_kind, args.seed.unwrap_or(0))?;
    let mut config = ExperimentConfig::new(spec);
    config.kmax = args.kmax.unwrap_or(default_kmax(kind));
    if let Some(s) = args.samples {
        config.samples = s;
    }
    if let Some(ell) = args.ell {
        config.ell_list = ell;
    } else if kind == ExperimentKind::Halting {
        config.ell_list = vec![2];
    }
    if let Some(eps) = args.eps {
        config.eps_list = eps;
    }
    if let Some(rhs) = &args.rhs {
        config.rhs = rhs.parse::<RhsKind>()?;
    }
    config.workers = args.workers.unwrap_or(0);
    config.record_timing = args.record_timing;
    config.output_path = args.output.as_ref().map(|p| p.display().to_string());
    config.validate(kind)?;
    Ok(config)
}

/// JSON and CSV paths for a run: the `--output` stem, or a timestamped
/// name under `./out`.
pub fn output_paths(kind: ExperimentKind, output: Option<&Path>) -> (PathBuf, PathBuf) {
    let stem = match output {
        Some(p) => match p.extension().and_then(|e| e.to_str()) {
            Some("json" | "csv") => p.with_extension(""),
            _ => p.to_path_buf(),
        },
        None => {
            let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
            PathBuf::from("out").join(format!("{}-{stamp}", kind.label()))
        }
    };
    let with = |ext: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(".");
        s.push(ext);
        PathBuf::from(s)
    };
    (with("json"), with("csv"))
}

fn write_outputs(summary: &MonteCarloSummary, json: &Path, csv: &Path) -> Result<()> {
    if let Some(dir) = json.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    experiments::write_json(summary, json)?;
    experiments::write_csv(summary, csv)
}

fn headline(summary: &MonteCarloSummary) -> String {
    let d = summary.config.ensemble.d;
    match summary.experiment {
        ExperimentKind::Errors => summary
            .norm_series("residual")
            .and_then(|s| s.per_k.get(1))
            .map(|st| format!("mean |r_1| = {:.6} (limit {:.6})", st.mean, d.sqrt()))
            .unwrap_or_default(),
        ExperimentKind::Halting => summary
            .halting
            .iter()
            .map(|h| {
                let mode = h.mode().map_or("none".to_string(), |m| m.to_string());
                let tau = h.prediction.map_or("-".to_string(), |p| p.tau.to_string());
                format!("ell={} eps={:e}: mode {mode} ({:.1}%), predicted {tau}", h.ell, h.eps,
                    100.0 * h.mode().map_or(0.0, |m| h.fraction_at(m)))
            })
            .collect::<Vec<_>>()
            .join("; "),
        ExperimentKind::Clt => summary
            .fluctuations
            .iter()
            .take(4)
            .map(|f| format!("Var[g_{}] = {:.3e}", f.k, f.variance))
            .collect::<Vec<_>>()
            .join(", "),
        ExperimentKind::Spectrum | ExperimentKind::Ks => {
            summary.ks_mean.map(|m| format!("mean KS = {m:.4}")).unwrap_or_default()
        }
    }
}

pub fn cmd_run(kind: ExperimentKind, args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let config = effective_config(kind, args)?;
    let start = Instant::now();
    let summary = experiments::run(kind, &config)?;
    let elapsed = start.elapsed().as_secs_f64();
    let (json, csv) = output_paths(kind, args.output.as_deref());
    write_outputs(&summary, &json, &csv)?;
    writeln!(
        out,
        "{}: {} samples, n = {}, d = {}, {:.2} s, wrote {} and {}",
        kind.label(),
        config.samples,
        config.ensemble.n,
        config.ensemble.d,
        elapsed,
        json.display(),
        csv.display()
    )?;
    let line = headline(&summary);
    if !line.is_empty() {
        writeln!(out, "  {line}")?;
    }
    Ok(())
}

pub fn cmd_theory_table(args: &TheoryArgs, out: &mut dyn Write) -> Result<()> {
    for &ell in &args.ell {
        crate::theory::check_ell_for_aspect(ell, args.d)?;
    }
    let columns: Vec<Vec<f64>> =
        args.ell.iter().map(|&ell| experiments::theory_curve(ell, args.kmax, args.d)).collect::<Result<_>>()?;
    let mut text = String::new();
    match args.format.as_str() {
        "text" => {
            text.push_str(&format!("# limit error norms, d = {}\n{:>4}", args.d, "k"));
            for ell in &args.ell {
                text.push_str(&format!("  {:>22}", format!("ell={ell}")));
            }
            text.push('\n');
            for k in 0..=args.kmax {
                text.push_str(&format!("{k:>4}"));
                for col in &columns {
                    text.push_str(&format!("  {:>22}", col[k]));
                }
                text.push('\n');
            }
            for &ell in args.ell.iter().filter(|&&l| l == 1 || l == 2) {
                if args.d < 1.0 {
                    for &eps in &args.eps {
                        let p = predict_halting(ell, eps, args.d)?;
                        let note = if p.exceptional { " (exceptional: tau or tau+1)" } else { "" };
                        text.push_str(&format!("# tau(ell={ell}, eps={eps:e}) = {}{note}\n", p.tau));
                    }
                    let set = exceptional_set(ell, args.d, args.kmax)?;
                    let shown: Vec<String> = set.iter().map(|v| format!("{v}")).collect();
                    text.push_str(&format!("# exceptional set (ell={ell}, k<={}): {}\n", args.kmax, shown.join(", ")));
                }
            }
        }
        "csv" => {
            text.push_str("ell,k,value\n");
            for (ell, col) in args.ell.iter().zip(&columns) {
                for (k, v) in col.iter().enumerate() {
                    text.push_str(&format!("{ell},{k},{v:.16e}\n"));
                }
            }
        }
        other => return Err(Error::Validation(format!("unknown format `{other}`, expected text or csv"))),
    }
    match &args.output {
        Some(path) => std::fs::write(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let p = predict_halting(args.ell, args.eps, args.d)?;
    if p.exceptional {
        writeln!(out, "{} (exceptional: halting time may be {} or {})", p.tau, p.tau, p.tau + 1)?;
    } else {
        writeln!(out, "{}", p.tau)?;
    }
    Ok(())
}

type Check = (&'static str, Box<dyn Fn() -> std::result::Result<(), String>>);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn selftest_checks(corrupt: bool) -> Vec<Check> {
    use crate::dense::DenseMatrix;
    use crate::ensembles::{sample_dense_wishart, sample_factor, sample_rng, sample_spectral_weights, DenseWishart};
    use crate::krylov::{
        cg_error_trajectory, conjugate_gradient, householder_bidiagonalize, lanczos, ExactSolver, LanczosOptions,
        MinimizingPolynomial, SymmetricTridiagonal, TrajectoryOptions,
    };
    use crate::spectral::{eigenvalues_dense, eigenvalues_tridiagonal};
    use crate::theory::{chebyshev_u, classical_cg_bound, limit_char_poly, limit_error_quadrature, mp_moment, LimitJacobi, MpLaw};

    // the mutation harness perturbs the aspect ratio seen by the closed forms
    let skew = if corrupt { 1.0 + 1e-6 } else { 1.0 };
    let closed = move |ell: i32, k: usize, d: f64| {
        let d = d * skew;
        let dk = d.powi(k as i32);
        match (ell, k) {
            (1, _) => dk / (1.0 - d),
            (2, _) => dk,
            (_, 0) => 1.0,
            _ => dk * (1.0 + d),
        }
    };
    let wishart = |n: usize, d: f64, seed: u64| -> DenseMatrix<f64> {
        let spec = EnsembleSpec::new(n, d, Beta::Real, EnsembleKind::GaussianWishart, seed).expect("valid spec");
        match sample_dense_wishart(&spec, &mut sample_rng(seed, 0)).expect("sample") {
            DenseWishart::Real(w) => w,
            DenseWishart::Complex(_) => unreachable!(),
        }
    };
    let e1 = |n: usize| {
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        b
    };

    let mut checks: Vec<Check> = Vec::new();
    for ell in 1..=3 {
        let name = match ell {
            1 => "closed-form-ell1-vs-quadrature",
            2 => "closed-form-ell2-vs-quadrature",
            _ => "closed-form-ell3-vs-quadrature",
        };
        checks.push((
            name,
            Box::new(move || {
                for k in 0..=20 {
                    for i in 1..=9 {
                        let d = i as f64 / 10.0;
                        let q = limit_error_quadrature(ell, k, d).map_err(|e| e.to_string())?;
                        let c = closed(ell, k, d);
                        ensure(rel(q, c) <= 1e-10, || format!("k={k} d={d}: quadrature {q} vs closed form {c}"))?;
                    }
                }
                Ok(())
            }),
        ));
    }
    checks.push((
        "determinant-identity",
        Box::new(|| {
            for k in 1..=12 {
                let t = LimitJacobi::new(k, 0.3).map_err(|e| e.to_string())?.tridiagonal();
                for lam in [0.0, 0.4, 1.3, 2.2, 3.1] {
                    let a = t.char_poly(lam);
                    let b = limit_char_poly(k, 0.3, lam);
                    ensure((a - b).abs() <= 1e-10 * a.abs().max(1.0), || format!("k={k} lambda={lam}: {a} vs {b}"))?;
                }
            }
            Ok(())
        }),
    ));
    checks.push((
        "determinant-recurrence",
        Box::new(|| {
            for &d in &[0.1, 0.5, 0.9] {
                for &x in &[-1.1, -0.3, 0.2, 0.95] {
                    let lam = 1.0 + d + 2.0 * f64::sqrt(d) * x;
                    let dk = |j: usize| limit_char_poly(j, d, lam) / d.powf(j as f64 / 2.0);
                    for k in 1..30 {
                        let (lo, mid, hi) = (dk(k - 1), dk(k), dk(k + 1));
                        let scale = mid.abs().max(hi.abs()).max(1.0);
                        ensure((hi + lo + 2.0 * x * mid).abs() <= 1e-10 * scale, || format!("d={d} x={x} k={k}"))?;
                    }
                }
            }
            Ok(())
        }),
    ));
    checks.push((
        "chebyshev-trigonometric-form",
        Box::new(|| {
            for k in 0..=30 {
                for &th in &[0.3f64, 1.1, 2.5] {
                    let a = chebyshev_u(k, th.cos());
                    let b = ((k as f64 + 1.0) * th).sin() / th.sin();
                    ensure((a - b).abs() <= 1e-10 * b.abs().max(1.0), || format!("k={k} theta={th}: {a} vs {b}"))?;
                }
            }
            Ok(())
        }),
    ));
    checks.push((
        "marchenko-pastur-moments",
        Box::new(move || {
            for &d in &[0.2, 0.5, 0.8] {
                let law = MpLaw::new(d).map_err(|e| e.to_string())?;
                ensure((law.cdf(law.d_plus) - 1.0).abs() < 1e-12 && law.cdf(law.d_minus).abs() < 1e-12, || {
                    format!("cdf endpoints at d={d}")
                })?;
                let m1 = mp_moment(1, d).map_err(|e| e.to_string())?;
                let m2 = mp_moment(2, d).map_err(|e| e.to_string())?;
                let mm1 = mp_moment(-1, d).map_err(|e| e.to_string())?;
                ensure(rel(m1, 1.0) < 1e-10 && rel(m2, 1.0 + d) < 1e-10 && rel(mm1, 1.0 / (1.0 - d)) < 1e-10, || {
                    format!("moments at d={d}: {m1}, {m2}, {mm1}")
                })?;
            }
            Ok(())
        }),
    ));
    checks.push((
        "halting-prediction",
        Box::new(move || {
            let p = predict_halting(2, 6.627e-8, 0.2).map_err(|e| e.to_string())?;
            ensure(p.tau == 21 && !p.exceptional, || format!("tau = {p:?}, expected 21"))?;
            for &eps in &[1e-2, 1e-5, 3e-9] {
                let p = predict_halting(1, eps, 0.2).map_err(|e| e.to_string())?;
                let direct = (0..500).find(|&k| closed(1, k, 0.2).sqrt() < eps);
                ensure(Some(p.tau) == direct, || format!("ell=1 eps={eps}: {} vs {direct:?}", p.tau))?;
            }
            Ok(())
        }),
    ));
    checks.push((
        "cg-finite-termination",
        Box::new(|| {
            let t = SymmetricTridiagonal::new((1..=10).map(f64::from).collect(), vec![0.0; 9]).map_err(|e| e.to_string())?;
            let b = vec![1.0; 10];
            let last = conjugate_gradient(&t, &b, 10, None)
                .map_err(|e| e.to_string())?
                .last()
                .ok_or("no iterations")?
                .map_err(|e| e.to_string())?;
            let x = t.solve(&b).map_err(|e| e.to_string())?;
            let err = x.iter().zip(&last.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            ensure(err < 1e-10, || format!("error after n steps = {err:e}"))
        }),
    ));
    checks.push((
        "cg-w-norm-monotone",
        Box::new(move || {
            let w = wishart(60, 0.4, 5);
            let opts = TrajectoryOptions { kmax: 30, ell_list: vec![1], aspect_ratio: Some(0.4) };
            let tr = cg_error_trajectory(&w, &e1(60), &opts).map_err(|e| e.to_string())?;
            let v = tr.norm(1).ok_or("missing ell=1")?;
            ensure(v.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12)), || "W-norm increased".into())
        }),
    ));
    checks.push((
        "cg-residual-recurrence",
        Box::new(move || {
            let w = wishart(60, 0.3, 6);
            let b = e1(60);
            for state in conjugate_gradient(&w, &b, 12, None).map_err(|e| e.to_string())? {
                let s = state.map_err(|e| e.to_string())?;
                let wx = w.matvec(&s.x);
                let true_r = b.iter().zip(&wx).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
                ensure((true_r - s.residual_norm).abs() < 1e-10, || format!("k={}: drift", s.k))?;
            }
            Ok(())
        }),
    ));
    checks.push((
        "lanczos-recovers-jacobi",
        Box::new(|| {
            let t = LimitJacobi::new(15, 0.3).map_err(|e| e.to_string())?.tridiagonal();
            let mut y = vec![0.0; 15];
            y[0] = 1.0;
            let l = lanczos(&t, &y, LanczosOptions::new(15)).map_err(|e| e.to_string())?;
            let diff = t
                .diagonal()
                .iter()
                .zip(l.diagonal())
                .chain(t.off_diagonal().iter().zip(l.off_diagonal()))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            ensure(diff < 1e-10, || format!("max entry difference {diff:e}"))
        }),
    ));
    checks.push((
        "minimizing-polynomial-identity",
        Box::new(move || {
            let w = wishart(60, 0.3, 7);
            let b = e1(60);
            let t = lanczos(&w, &b, LanczosOptions::new(10)).map_err(|e| e.to_string())?;
            let eig = w.eigen().map_err(|e| e.to_string())?;
            let weights: Vec<f64> = (0..60).map(|j| eig.vectors[(0, j)].powi(2)).collect();
            let opts = TrajectoryOptions { kmax: 8, ell_list: vec![1, 2, 3], aspect_ratio: Some(0.3) };
            let tr = cg_error_trajectory(&w, &b, &opts).map_err(|e| e.to_string())?;
            for k in 0..=8 {
                let p = MinimizingPolynomial::new(&t, k).map_err(|e| e.to_string())?;
                for ell in 1..=3 {
                    let cg = tr.norm(ell).ok_or("missing norm")?[k].powi(2);
                    let sp = p.spectral_error_sq(&eig.values, &weights, ell);
                    ensure(rel(sp, cg) < 1e-6, || format!("k={k} ell={ell}: {sp} vs {cg}"))?;
                }
            }
            Ok(())
        }),
    ));
    checks.push((
        "spectral-weights-normalized",
        Box::new(|| {
            let mut rng = sample_rng(3, 0);
            for n in [1, 7, 500] {
                let w = sample_spectral_weights(n, Beta::Real, &mut rng).map_err(|e| e.to_string())?;
                ensure((w.sum() - 1.0).abs() < 1e-12 && w.omega.iter().all(|&v| v >= 0.0), || format!("n={n}"))?;
            }
            Ok(())
        }),
    ));
    checks.push((
        "classical-bound",
        Box::new(move || {
            let w = wishart(80, 0.5, 8);
            let vals = eigenvalues_dense(&w).map_err(|e| e.to_string())?;
            let kappa = vals[vals.len() - 1] / vals[0];
            let opts = TrajectoryOptions { kmax: 25, ell_list: vec![1], aspect_ratio: Some(0.5) };
            let tr = cg_error_trajectory(&w, &e1(80), &opts).map_err(|e| e.to_string())?;
            let v = tr.norm(1).ok_or("missing ell=1")?;
            for (k, &x) in v.iter().enumerate() {
                let bound = classical_cg_bound(kappa, k).map_err(|e| e.to_string())? * v[0];
                ensure(x <= bound, || format!("k={k}: {x} > {bound}"))?;
            }
            Ok(())
        }),
    ));
    checks.push((
        "bidiagonalization-preserves-spectrum",
        Box::new(|| {
            let spec = EnsembleSpec::new(30, 0.5, Beta::Real, EnsembleKind::GaussianWishart, 9).map_err(|e| e.to_string())?;
            let factor = sample_factor(&spec, &mut sample_rng(9, 0)).map_err(|e| e.to_string())?;
            let crate::ensembles::WishartFactor::Real { x, scale } = factor else { unreachable!() };
            let mut h = householder_bidiagonalize(&x).map_err(|e| e.to_string())?;
            h.scale = scale;
            let a = eigenvalues_tridiagonal(&h.tridiagonal()).map_err(|e| e.to_string())?;
            let w = x.matmul(&x.conj_transpose()).map_err(|e| e.to_string())?;
            let b: Vec<f64> = eigenvalues_dense(&w).map_err(|e| e.to_string())?.iter().map(|v| v / scale).collect();
            let diff = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            ensure(diff < 1e-10 * b[b.len() - 1], || format!("max eigenvalue difference {diff:e}"))
        }),
    ));
    checks
}

/// Runs the fast invariant suite; returns the number of failed checks.
pub fn cmd_selftest(args: &SelftestArgs, out: &mut dyn Write) -> Result<usize> {
    let checks = selftest_checks(args.corrupt_constant);
    let mut failed = Vec::new();
    for (name, check) in &checks {
        match check() {
            Ok(()) => writeln!(out, "PASS  {name}")?,
            Err(msg) => {
                writeln!(out, "FAIL  {name}: {msg}")?;
                failed.push(*name);
            }
        }
    }
    if failed.is_empty() {
        writeln!(out, "{} checks passed", checks.len())?;
    } else {
        writeln!(out, "{} of {} checks failed: {}", failed.len(), checks.len(), failed.join(", "))?;
    }
    Ok(failed.len())
}

/// Dispatches a parsed invocation and returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::TheoryTable(a) => cmd_theory_table(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Errors(a) => cmd_run(ExperimentKind::Errors, a, out),
        Command::Halting(a) => cmd_run(ExperimentKind::Halting, a, out),
        Command::Clt(a) => cmd_run(ExperimentKind::Clt, a, out),
        Command::Spectrum(a) => cmd_run(ExperimentKind::Spectrum, a, out),
        Command::Ks(a) => cmd_run(ExperimentKind::Ks, a, out),
        Command::Selftest(a) => match cmd_selftest(a, out) {
            Ok(0) => Ok(()),
            Ok(_) => return EXIT_SELFTEST,
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
