//! Scoring of uncertainty forecasts against observed failures.
//!
//! The forecast is the predicted probability that the classifier's outcome
//! is wrong. Cases are binned by forecast value for the Murphy
//! decomposition `brier = variance - resolution + unreliability`; with
//! exact-value bins the identity holds to rounding error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredCase {
    pub predicted_uncertainty: f64,
    pub failed: bool,
}

impl ScoredCase {
    pub fn new(predicted_uncertainty: f64, failed: bool) -> Self {
        Self { predicted_uncertainty, failed }
    }

    fn outcome(&self) -> f64 {
        if self.failed {
            1.0
        } else {
            0.0
        }
    }
}

fn non_empty(cases: &[ScoredCase]) -> Result<()> {
    if cases.is_empty() {
        return domain("no cases to score");
    }
    if let Some(c) = cases.iter().find(|c| !(0.0..=1.0).contains(&c.predicted_uncertainty)) {
        return domain(format!("predicted uncertainty {} outside [0, 1]", c.predicted_uncertainty));
    }
    Ok(())
}

pub fn brier_score(cases: &[ScoredCase]) -> Result<f64> {
    non_empty(cases)?;
    let sum: f64 = cases.iter().map(|c| (c.predicted_uncertainty - c.outcome()).powi(2)).sum();
    Ok(sum / cases.len() as f64)
}

/// How cases are grouped for the decomposition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Binning {
    /// One bin per distinct forecast value.
    #[default]
    Exact,
    /// Equal-width bins over [0, 1]; the bin forecast is the mean forecast.
    /// The identity then only holds up to within-bin forecast spread.
    Fixed(usize),
}

#[derive(Clone, Copy, Debug)]
struct Bin {
    n: usize,
    failures: usize,
    forecast_sum: f64,
}

fn bins(cases: &[ScoredCase], binning: Binning) -> Vec<Bin> {
    let mut map: BTreeMap<u64, Bin> = BTreeMap::new();
    for c in cases {
        let key = match binning {
            // +0.0 so that -0.0 shares the bin
            Binning::Exact => (c.predicted_uncertainty + 0.0).to_bits(),
            Binning::Fixed(k) => ((c.predicted_uncertainty * k as f64) as u64).min(k as u64 - 1),
        };
        let bin = map.entry(key).or_insert(Bin { n: 0, failures: 0, forecast_sum: 0.0 });
        bin.n += 1;
        bin.failures += usize::from(c.failed);
        bin.forecast_sum += c.predicted_uncertainty;
    }
    map.into_values().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub variance: f64,
    pub resolution: f64,
    pub unreliability: f64,
    pub overconfidence: f64,
    pub underconfidence: f64,
}

impl Decomposition {
    pub fn unspecificity(&self) -> f64 {
        self.variance - self.resolution
    }

    pub fn brier(&self) -> f64 {
        self.variance - self.resolution + self.unreliability
    }
}

pub fn decompose_with(cases: &[ScoredCase], binning: Binning) -> Result<Decomposition> {
    non_empty(cases)?;
    if binning == Binning::Fixed(0) {
        return domain("zero bins");
    }
    let total = cases.len() as f64;
    let rate = cases.iter().filter(|c| c.failed).count() as f64 / total;
    let mut out = Decomposition {
        variance: rate * (1.0 - rate),
        resolution: 0.0,
        unreliability: 0.0,
        overconfidence: 0.0,
        underconfidence: 0.0,
    };
    for bin in bins(cases, binning) {
        let weight = bin.n as f64 / total;
        let bin_rate = bin.failures as f64 / bin.n as f64;
        let forecast = bin.forecast_sum / bin.n as f64;
        out.resolution += weight * (bin_rate - rate).powi(2);
        let miscalibration = weight * (forecast - bin_rate).powi(2);
        out.unreliability += miscalibration;
        // forecast below the observed error rate: the estimate was too optimistic
        if forecast < bin_rate {
            out.overconfidence += miscalibration;
        } else {
            out.underconfidence += miscalibration;
        }
    }
    Ok(out)
}

/// `(variance, resolution, unreliability)` over exact-value bins.
pub fn decompose(cases: &[ScoredCase]) -> Result<(f64, f64, f64)> {
    let d = decompose_with(cases, Binning::Exact)?;
    Ok((d.variance, d.resolution, d.unreliability))
}

/// `(overconfidence, underconfidence)`; they sum to the unreliability.
pub fn confidence_split(cases: &[ScoredCase]) -> Result<(f64, f64)> {
    let d = decompose_with(cases, Binning::Exact)?;
    Ok((d.overconfidence, d.underconfidence))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecilePoint {
    pub mean_certainty: f64,
    pub accuracy: f64,
}

/// Ten equal-count groups by predicted certainty (`1 - u`), ascending.
/// Leftover cases go to the lowest groups. Ties keep input order.
pub fn calibration_deciles(cases: &[ScoredCase]) -> Result<Vec<DecilePoint>> {
    non_empty(cases)?;
    if cases.len() < 10 {
        return domain(format!("calibration deciles need at least 10 cases, got {}", cases.len()));
    }
    let mut order: Vec<usize> = (0..cases.len()).collect();
    order.sort_by(|&a, &b| {
        let ca = 1.0 - cases[a].predicted_uncertainty;
        let cb = 1.0 - cases[b].predicted_uncertainty;
        ca.total_cmp(&cb).then(a.cmp(&b))
    });
    let base = cases.len() / 10;
    let extra = cases.len() % 10;
    let mut start = 0;
    Ok((0..10)
        .map(|g| {
            let size = base + usize::from(g < extra);
            let group = &order[start..start + size];
            start += size;
            let n = size as f64;
            DecilePoint {
                mean_certainty: group.iter().map(|&i| 1.0 - cases[i].predicted_uncertainty).sum::<f64>() / n,
                accuracy: group.iter().filter(|&&i| !cases[i].failed).count() as f64 / n,
            }
        })
        .collect())
}

pub const HISTOGRAM_BINS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyDistribution {
    pub guaranteed_min_uncertainty: f64,
    pub fraction_at_min: f64,
    /// Counts in bins of width 0.01 over [0, 1]; 1.0 falls in the last bin.
    pub histogram: Vec<usize>,
}

pub fn uncertainty_distribution(cases: &[ScoredCase]) -> Result<UncertaintyDistribution> {
    non_empty(cases)?;
    let min = cases.iter().map(|c| c.predicted_uncertainty).fold(f64::INFINITY, f64::min);
    let at_min = cases.iter().filter(|c| c.predicted_uncertainty == min).count();
    let mut histogram = vec![0; HISTOGRAM_BINS];
    for c in cases {
        let bin = ((c.predicted_uncertainty * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        histogram[bin] += 1;
    }
    Ok(UncertaintyDistribution {
        guaranteed_min_uncertainty: min,
        fraction_at_min: at_min as f64 / cases.len() as f64,
        histogram,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_cases: usize,
    pub failure_rate: f64,
    pub brier: f64,
    pub variance: f64,
    pub resolution: f64,
    pub unspecificity: f64,
    pub unreliability: f64,
    pub overconfidence: f64,
    pub underconfidence: f64,
    pub calibration_deciles: Vec<DecilePoint>,
    pub guaranteed_min_uncertainty: f64,
    pub fraction_at_min: f64,
}

impl EvaluationReport {
    pub fn from_cases(cases: &[ScoredCase]) -> Result<Self> {
        let d = decompose_with(cases, Binning::Exact)?;
        let dist = uncertainty_distribution(cases)?;
        Ok(Self {
            n_cases: cases.len(),
            failure_rate: cases.iter().filter(|c| c.failed).count() as f64 / cases.len() as f64,
            brier: brier_score(cases)?,
            variance: d.variance,
            resolution: d.resolution,
            unspecificity: d.unspecificity(),
            unreliability: d.unreliability,
            overconfidence: d.overconfidence,
            underconfidence: d.underconfidence,
            calibration_deciles: calibration_deciles(cases)?,
            guaranteed_min_uncertainty: dist.guaranteed_min_uncertainty,
            fraction_at_min: dist.fraction_at_min,
        })
    }
}
