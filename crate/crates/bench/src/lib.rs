//! Shared fixtures for the criterion benches.

use tauw_core::qim::Sample;
use tauw_core::simgen::{simulate, ScenarioConfig};
use tauw_core::SimulatedSplits;

/// Paperlike benchmark scaled down to `n_series` series.
pub fn small_splits(n_series: usize) -> SimulatedSplits {
    let config = ScenarioConfig { n_series, ..ScenarioConfig::paperlike() };
    simulate(&config, 7).expect("paperlike config is valid")
}

/// Deterministic rows over `width` ordinal features, failing on a threshold rule.
pub fn threshold_rows(n: usize, width: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let features: Vec<f64> = (0..width).map(|j| ((i * (j + 3) + j) % 4) as f64).collect();
            let failed = features[0] + features.get(1).copied().unwrap_or(0.0) > 4.0 || i % 17 == 0;
            Sample::new(features, failed)
        })
        .collect()
}
