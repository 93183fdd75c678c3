//! Pre-registers the pooled-spectrum KS threshold used by the acceptance
//! suite. Draws pairs of independent dense Gaussian Wishart batches (100
//! samples each, n = 100, d = 0.25, real) from reference seeds disjoint from
//! the ones used in tests, records the pooled KS distance of each pair, and
//! prints the threshold: the largest observed distance, rounded up to the
//! next multiple of 0.005.
//!
//! cargo run --release --example ks_threshold_oracle > crates/core/tests/fixtures/ks_threshold.json

use cg_wishart::ensembles::{Beta, EnsembleKind, EnsembleSpec};
use cg_wishart::experiments::sample_eigenvalues;
use cg_wishart::spectral::{ks_distance, SpectralMeasure};

const REPLICATES: u64 = 40;
const BATCH: u64 = 100;
const SEED_BASE: u64 = 0x5eed_0000;

fn pooled(seed: u64) -> SpectralMeasure {
    let spec = EnsembleSpec::new(100, 0.25, Beta::Real, EnsembleKind::GaussianWishart, seed).unwrap();
    let parts: Vec<SpectralMeasure> = (0..BATCH)
        .map(|i| SpectralMeasure::empirical(&sample_eigenvalues(&spec, i).unwrap()).unwrap())
        .collect();
    SpectralMeasure::pooled(&parts).unwrap()
}

fn main() {
    let mut distances = Vec::new();
    for r in 0..REPLICATES {
        let a = pooled(SEED_BASE + 2 * r);
        let b = pooled(SEED_BASE + 2 * r + 1);
        distances.push(ks_distance(&a, &b));
    }
    let max = distances.iter().copied().fold(0.0, f64::max);
    let threshold = (max / 0.005).ceil() * 0.005;
    let json = serde_json::json!({
        "description": "pooled KS between two independent dense batches, 100 samples each, n = 100, d = 0.25, beta = 1",
        "replicates": REPLICATES,
        "seed_base": SEED_BASE,
        "distances": distances,
        "max": max,
        "threshold": threshold,
    });
    println!("{}", serde_json::to_string_pretty(&json).unwrap());
}
