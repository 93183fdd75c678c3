//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Set `CG_WISHART_ACCEPTANCE=1,5,8` to run a subset.

use std::time::Instant;

use cg_wishart::ensembles::{
    sample_dense_wishart, sample_rng, sample_spectral_weights, Beta, DenseWishart, EnsembleKind, EnsembleSpec,
};
use cg_wishart::experiments::{
    aggregate, run, run_partial, sample_eigenvalues, to_json, ExperimentConfig, ExperimentKind, MonteCarloSummary,
    PartialSummary,
};
use cg_wishart::krylov::{cg_error_trajectory, lanczos, LanczosOptions, MinimizingPolynomial, TrajectoryOptions};
use cg_wishart::spectral::{eigen_dense_first_weights, eigenvalues_tridiagonal, ks_distance, SpectralMeasure};
use cg_wishart::theory::{limit_char_poly, limit_error_quadrature};

const D: f64 = 0.2;
const EPS: f64 = 6.627e-8;

struct Report {
    selected: Option<Vec<u32>>,
    failed: Vec<String>,
}

impl Report {
    fn wants(&self, ids: &[u32]) -> bool {
        self.selected.as_ref().is_none_or(|s| ids.iter().any(|i| s.contains(i)))
    }

    fn line(&mut self, id: &str, pass: bool, detail: String) {
        println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id.to_string());
        }
    }

    fn note(&mut self, label: &str, pass: bool, detail: String) {
        println!("{} {label}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(label.to_string());
        }
    }
}

fn spec(n: usize, d: f64, beta: Beta, kind: EnsembleKind, seed: u64) -> EnsembleSpec {
    EnsembleSpec::new(n, d, beta, kind, seed).expect("valid spec")
}

fn config(spec: EnsembleSpec, samples: usize, kmax: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(spec);
    c.samples = samples;
    c.kmax = kmax;
    c
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn criterion_1(r: &mut Report) {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for ell in 1..=3 {
        for i in 1..=9 {
            let d = i as f64 / 10.0;
            for k in 0..=20usize {
                let q = limit_error_quadrature(ell, k, d).expect("quadrature");
                let dk = d.powi(k as i32);
                let closed = match ell {
                    1 => dk / (1.0 - d),
                    2 => dk,
                    _ if k == 0 => 1.0,
                    _ => dk * (1.0 + d),
                };
                worst = worst.max(rel(q, closed));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    r.line(
        "1",
        worst <= 1e-10 && secs < 1.0,
        format!("max relative deviation {worst:.2e} (<= 1e-10) over 567 cases in {secs:.3} s (< 1 s)"),
    );
}

fn errors_run(n: usize, seed: u64) -> (PartialSummary, MonteCarloSummary) {
    let mut c = config(spec(n, D, Beta::Real, EnsembleKind::GaussianWishart, seed), 2000, 8);
    c.ell_list = vec![1, 2];
    let partial = run_partial(ExperimentKind::Errors, &c, 0..2000).expect("errors run");
    let summary = aggregate(vec![partial.clone()]).expect("aggregate");
    (partial, summary)
}

fn criteria_2_to_4_and_9(r: &mut Report) -> Option<PartialSummary> {
    let start = Instant::now();
    let (p800, s800) = errors_run(800, 2024);
    let (p200, s200) = errors_run(200, 2025);
    let secs = start.elapsed().as_secs_f64();

    let res = s800.norm_series("residual").expect("residual series");
    let mut worst = 0.0f64;
    for k in 1..=8 {
        worst = worst.max(rel(res.at(k).expect("k").mean, D.powf(k as f64 / 2.0)));
    }
    r.line(
        "2",
        worst < 0.05,
        format!("n=800, 2000 samples: max_k |<|r_k|> - 0.2^(k/2)| / 0.2^(k/2) = {worst:.4} (< 0.05), {secs:.0} s for both runs"),
    );

    let w = s800.norm_series("ell=1").expect("W-norm series");
    let mut worst = 0.0f64;
    for k in 1..=8 {
        worst = worst.max(rel(w.at(k).expect("k").mean, D.powf(k as f64 / 2.0) / (1.0 - D).sqrt()));
    }
    r.line("3", worst < 0.05, format!("n=800: max_k relative deviation of <|e_k|_W> = {worst:.4} (< 0.05)"));

    let mut shrink = true;
    let mut detail = Vec::new();
    for name in ["residual", "ell=1"] {
        let (a, b) = (s800.norm_series(name).expect("series"), s200.norm_series(name).expect("series"));
        let ratios: Vec<f64> = (1..=8).map(|k| a.at(k).unwrap().band_width() / b.at(k).unwrap().band_width()).collect();
        shrink &= ratios.iter().all(|&q| q < 1.0);
        let worst = ratios.iter().copied().fold(0.0, f64::max);
        detail.push(format!("{name}: max width ratio n=800/n=200 = {worst:.3}"));
    }
    r.line("4", shrink, format!("{} (each < 1 for k=1..8)", detail.join("; ")));

    let res6 = res.at(6).expect("k=6").mean;
    r.note(
        "example n=800 k=6",
        rel(res6, 0.008) < 0.02,
        format!("<|r_6|> = {res6:.6}, relative deviation from 0.008 = {:.4} (< 0.02)", rel(res6, 0.008)),
    );

    let mut checked = 0;
    let mut violations = 0;
    let mut worst = 0.0f64;
    for s in [&s800, &s200] {
        let b = s.classical_bound.as_ref().expect("bound check");
        checked += b.checked;
        violations += b.violations;
        worst = worst.max(b.worst_ratio);
    }
    r.line(
        "9",
        violations == 0 && checked == 2 * 2000 * 9,
        format!("{violations} violations of the classical bound in {checked} (sample, k) pairs; largest ratio {worst:.3}"),
    );

    let mut merged = p800;
    merged.records.extend(p200.records);
    Some(merged)
}

fn halting(n: usize, samples: usize, seed: u64) -> MonteCarloSummary {
    let mut c = config(spec(n, D, Beta::Real, EnsembleKind::GaussianWishart, seed), samples, 60);
    c.ell_list = vec![2];
    c.eps_list = vec![EPS];
    run(ExperimentKind::Halting, &c).expect("halting run")
}

fn criterion_5(r: &mut Report) {
    let start = Instant::now();
    let big = halting(2000, 500, 3001);
    let big_secs = start.elapsed().as_secs_f64();
    let h = big.histogram(2, EPS).expect("histogram");
    let frac = h.fraction_at(21);
    let small = halting(20, 500, 3002);
    let hs = small.histogram(2, EPS).expect("histogram");
    let start = Instant::now();
    let smoke = halting(500, 500, 3003);
    let smoke_secs = start.elapsed().as_secs_f64();
    let smoke_frac = smoke.histogram(2, EPS).expect("histogram").fraction_at(21);
    let predicted = h.prediction.map_or("none".to_string(), |p| p.tau.to_string());
    r.line(
        "5",
        frac >= 0.9 && hs.counts.len() >= 2 && smoke_frac >= 0.6 && smoke_secs < 120.0 && predicted == "21",
        format!(
            "n=2000: {:.1}% at 21 (>= 90%, predicted {predicted}, {big_secs:.0} s); n=20: {} distinct values (>= 2); \
             n=500 smoke: {:.1}% at 21 (>= 60%) in {smoke_secs:.1} s (< 120 s)",
            100.0 * frac,
            hs.counts.len(),
            100.0 * smoke_frac
        ),
    );
}

fn criterion_6(r: &mut Report) {
    let clt = |n: usize, seed: u64| {
        let c = config(spec(n, D, Beta::Real, EnsembleKind::ChiBidiagonal, seed), 10_000, 4);
        run(ExperimentKind::Clt, &c).expect("clt run")
    };
    let a = clt(500, 4001);
    let b = clt(2000, 4002);
    let mut ok = true;
    let mut detail = Vec::new();
    for k in [2, 4] {
        let ratio = a.fluctuation(k).unwrap().variance / b.fluctuation(k).unwrap().variance;
        ok &= (4.0 / 1.3..=4.0 * 1.3).contains(&ratio);
        detail.push(format!("k={k}: {ratio:.3}"));
    }
    r.line(
        "6",
        ok,
        format!("Var[g_k](n=500) / Var[g_k](n=2000), 10^4 samples each: {} (in [3.077, 5.2])", detail.join(", ")),
    );
    for k in [2, 4] {
        let (fa, f) = (a.fluctuation(k).unwrap(), b.fluctuation(k).unwrap());
        let within = f.normalized_mean.abs() <= 3.0 * f.normalized_std_error;
        println!(
            "{} example n=2000 g_{k} centering (report only): normalized mean {:.4}, 3 standard errors = {:.4}",
            if within { "HOLDS" } else { "DOES NOT HOLD" },
            f.normalized_mean,
            3.0 * f.normalized_std_error
        );
        r.note(
            &format!("example g_{k} bias shrinks"),
            f.normalized_mean.abs() < fa.normalized_mean.abs(),
            format!("|normalized mean| n=500 {:.4} > n=2000 {:.4}", fa.normalized_mean.abs(), f.normalized_mean.abs()),
        );
        r.note(
            &format!("example n=2000 g_{k} normality"),
            f.ks_normal < 0.05,
            format!("KS distance to N(0,1) = {:.4} (< 0.05)", f.ks_normal),
        );
    }
}

fn criterion_7(r: &mut Report) {
    let fixture: serde_json::Value =
        serde_json::from_str(include_str!("fixtures/ks_threshold.json")).expect("fixture parses");
    let threshold = fixture["threshold"].as_f64().expect("threshold");
    let pooled = |kind: EnsembleKind, seed: u64| {
        let s = spec(100, 0.25, Beta::Real, kind, seed);
        let parts: Vec<SpectralMeasure> = (0..100)
            .map(|i| {
                let vals = match kind {
                    EnsembleKind::ChiBidiagonal => {
                        let mut rng = sample_rng(seed, i);
                        let h = cg_wishart::ensembles::sample_bidiagonal_chi(&s, &mut rng).expect("bidiagonal");
                        eigenvalues_tridiagonal(&h.tridiagonal()).expect("eigenvalues")
                    }
                    _ => sample_eigenvalues(&s, i).expect("eigenvalues"),
                };
                SpectralMeasure::empirical(&vals).expect("measure")
            })
            .collect();
        SpectralMeasure::pooled(&parts).expect("pooled")
    };
    let ks = ks_distance(&pooled(EnsembleKind::ChiBidiagonal, 7001), &pooled(EnsembleKind::GaussianWishart, 7002));
    r.line("7", ks < threshold, format!("pooled KS = {ks:.4} (< pre-registered {threshold})"));
}

fn criterion_8(r: &mut Report) {
    let s = spec(200, 0.3, Beta::Real, EnsembleKind::GaussianWishart, 8001);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let DenseWishart::Real(w) = sample_dense_wishart(&s, &mut sample_rng(8001, i)).expect("sample") else {
            unreachable!()
        };
        let mut b = vec![0.0; 200];
        b[0] = 1.0;
        let t = lanczos(&w, &b, LanczosOptions::new(10)).expect("lanczos");
        let (values, weights) = eigen_dense_first_weights(&w).expect("eigen");
        let opts = TrajectoryOptions { kmax: 10, ell_list: vec![1, 2, 3], aspect_ratio: Some(0.3) };
        let tr = cg_error_trajectory(&w, &b, &opts).expect("trajectory");
        for k in 0..=10 {
            let p = MinimizingPolynomial::new(&t, k).expect("polynomial");
            for ell in 1..=3 {
                let cg = tr.norm(ell).unwrap()[k].powi(2);
                worst = worst.max(rel(p.spectral_error_sq(&values, &weights, ell), cg));
            }
        }
    }
    r.line("8", worst <= 1e-6, format!("50 systems, ell=1..3, k<=10: max relative deviation {worst:.2e} (<= 1e-6)"));
}

fn criterion_10(r: &mut Report, errors: Option<&PartialSummary>) {
    let mut parts = Vec::new();
    let mut ok = true;

    if let Some(p) = errors {
        let pos = p.config.ell_list.iter().position(|&l| l == 1).expect("ell=1 tracked");
        let bad = p
            .records
            .iter()
            .filter(|rec| rec.norms[pos].windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-10)))
            .count();
        ok &= bad == 0;
        parts.push(format!("W-norm monotone in {}/{} samples", p.records.len() - bad, p.records.len()));
    }

    let mut rng = sample_rng(10_001, 0);
    let mut worst = 0.0f64;
    let mut negative = false;
    for &n in &[1usize, 2, 10, 100, 1000, 10_000] {
        for beta in [Beta::Real, Beta::Complex] {
            for _ in 0..20 {
                let w = sample_spectral_weights(n, beta, &mut rng).expect("weights");
                worst = worst.max((w.omega.iter().sum::<f64>() - 1.0).abs());
                negative |= w.omega.iter().any(|&x| x < 0.0);
            }
        }
    }
    ok &= worst <= 1e-14 && !negative;
    parts.push(format!("weights sum to 1 within {worst:.1e} (<= 1e-14)"));

    let mut worst = 0.0f64;
    for i in 1..=19 {
        let d = i as f64 / 20.0;
        for j in 0..=40 {
            let x = -1.2 + 2.4 * j as f64 / 40.0;
            let lam = 1.0 + d + 2.0 * d.sqrt() * x;
            let dk = |k: usize| limit_char_poly(k, d, lam) / d.powf(k as f64 / 2.0);
            for k in 1..=30 {
                let (lo, mid, hi) = (dk(k - 1), dk(k), dk(k + 1));
                worst = worst.max((hi + lo + 2.0 * x * mid).abs() / mid.abs().max(hi.abs()).max(1.0));
            }
        }
    }
    ok &= worst <= 1e-10;
    parts.push(format!("determinant recurrence residual {worst:.1e} (<= 1e-10)"));

    let mut identical = true;
    for kind in [ExperimentKind::Errors, ExperimentKind::Halting, ExperimentKind::Ks] {
        let mut c = config(spec(120, 0.3, Beta::Real, EnsembleKind::GaussianWishart, 10_002), 24, 12);
        if kind == ExperimentKind::Halting {
            c.ell_list = vec![1, 2];
            c.eps_list = vec![1e-3, 1e-5];
        }
        let outputs: Vec<Vec<u8>> = [1, 2, 3]
            .iter()
            .map(|&workers| {
                c.workers = workers;
                to_json(&run(kind, &c).expect("run")).expect("json")
            })
            .collect();
        identical &= outputs.windows(2).all(|w| w[0] == w[1]);
    }
    ok &= identical;
    parts.push(format!("JSON bit-identical across 1, 2, 3 workers: {identical}"));

    r.line("10", ok, parts.join("; "));
}

fn main() {
    let selected = std::env::var("CG_WISHART_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut r = Report { selected, failed: Vec::new() };
    let start = Instant::now();
    if r.wants(&[1]) {
        criterion_1(&mut r);
    }
    let errors = if r.wants(&[2, 3, 4, 9]) { criteria_2_to_4_and_9(&mut r) } else { None };
    if r.wants(&[5]) {
        criterion_5(&mut r);
    }
    if r.wants(&[6]) {
        criterion_6(&mut r);
    }
    if r.wants(&[7]) {
        criterion_7(&mut r);
    }
    if r.wants(&[8]) {
        criterion_8(&mut r);
    }
    if r.wants(&[10]) {
        criterion_10(&mut r, errors.as_ref());
    }
    println!("acceptance finished in {:.0} s", start.elapsed().as_secs_f64());
    if !r.failed.is_empty() {
        println!("failed: {}", r.failed.join(", "));
        std::process::exit(1);
    }
}
