//! Synthetic benchmark: series of classifier outcomes on an approached
//! object under persistent quality deficits.
//!
//! Per series a ground-truth class, one intensity per deficit and a latent
//! difficulty `d ~ U(0,1)` are drawn. At step `t` the error probability is
//! `p_t = clamp(base(t) * prod_k multiplier_k[intensity_k])`. The step fails
//! when `v < p_t`, where `v` is the series difficulty with probability `rho`
//! and a fresh uniform draw otherwise, so marginals stay at `p_t` while
//! errors within a series are positively correlated. A failing step reports
//! the series' confusion class with probability `rho`, any wrong class
//! otherwise.
//!
//! Every series draws from its own ChaCha8 stream, so generation does not
//! depend on iteration order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    ClassLabel, Dataset, LabelId, QfSpec, QfValue, QualityFactorVector, Split, StepRecord, Timeseries, MAX_INTENSITY,
};
use crate::error::{domain, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeficitConfig {
    pub name: String,
    /// Error-rate multiplier per intensity 0..=3.
    pub multipliers: [f64; 4],
    /// Probability of each intensity when drawn.
    pub intensity_probs: [f64; 4],
    /// Re-drawn during a series rather than fixed per series.
    #[serde(default)]
    pub varying: bool,
    /// Per-step probability that a varying deficit is re-drawn.
    #[serde(default)]
    pub change_prob: f64,
}

/// Geometric decay from `start` at the first step to `end` at the last.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseCurve {
    pub start: f64,
    pub end: f64,
}

impl BaseCurve {
    pub fn at(&self, step: usize, length: usize) -> f64 {
        if length <= 1 {
            return self.start;
        }
        let frac = step as f64 / (length - 1) as f64;
        self.start * (self.end / self.start).powf(frac)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub calibration: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.4, calibration: 0.3, test: 0.3 }
    }
}

fn default_subsample_length() -> usize {
    10
}

fn default_max_error_prob() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_series: usize,
    pub series_length: usize,
    pub n_classes: usize,
    pub deficits: Vec<DeficitConfig>,
    pub base_curve: BaseCurve,
    /// Error correlation within a series, in [0, 1].
    pub rho: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split: SplitFractions,
    /// Window length for calibration and test series.
    #[serde(default = "default_subsample_length")]
    pub subsample_length: usize,
    /// Upper clamp for per-step error probabilities.
    #[serde(default = "default_max_error_prob")]
    pub max_error_prob: f64,
}

const MIN_ERROR_PROB: f64 = 1e-4;

impl ScenarioConfig {
    /// Default benchmark: 1300 series of 30 steps, 10 classes, nine ordinal
    /// deficits (two of them varying within a series), base error rate
    /// decaying from 0.15 to 0.02, `rho = 0.7`.
    pub fn paperlike() -> Self {
        let fixed = |name: &str, multipliers: [f64; 4]| DeficitConfig {
            name: name.into(),
            multipliers,
            intensity_probs: [0.8, 0.1, 0.06, 0.04],
            varying: false,
            change_prob: 0.0,
        };
        let varying = |name: &str, multipliers: [f64; 4]| DeficitConfig {
            name: name.into(),
            multipliers,
            intensity_probs: [0.6, 0.2, 0.12, 0.08],
            varying: true,
            change_prob: 0.3,
        };
        Self {
            n_series: 1300,
            series_length: 30,
            n_classes: 10,
            deficits: vec![
                fixed("rain", [0.85, 1.12, 1.48, 2.2]),
                fixed("darkness", [0.85, 1.18, 1.6, 2.32]),
                fixed("haze", [0.85, 1.06, 1.3, 1.72]),
                fixed("natural_backlight", [0.85, 1.12, 1.36, 1.84]),
                varying("artificial_backlight", [0.5, 1.5, 3.0, 6.0]),
                fixed("dirt_on_sign", [0.85, 1.06, 1.24, 1.6]),
                fixed("dirt_on_lens", [0.85, 1.12, 1.42, 1.96]),
                fixed("steamed_lens", [0.85, 1.18, 1.6, 2.2]),
                varying("motion_blur", [0.5, 1.5, 3.0, 6.0]),
            ],
            base_curve: BaseCurve { start: 0.15, end: 0.02 },
            rho: 0.7,
            seed: 42,
            split: SplitFractions::default(),
            subsample_length: 10,
            max_error_prob: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_series == 0 || self.series_length == 0 {
            return domain("need at least one series of at least one step");
        }
        if self.n_classes < 2 {
            return domain("need at least two classes");
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return domain(format!("rho {} outside [0, 1]", self.rho));
        }
        let curve = self.base_curve;
        if !(curve.start > 0.0 && curve.start < 0.5 && curve.end > 0.0 && curve.end < 0.5) {
            return domain("base curve values must lie in (0, 0.5)");
        }
        if curve.end > curve.start {
            return domain("base curve must be non-increasing");
        }
        if !(self.max_error_prob > MIN_ERROR_PROB && self.max_error_prob < 1.0) {
            return domain("max_error_prob must lie in (0, 1)");
        }
        let mut names = std::collections::HashSet::new();
        for d in &self.deficits {
            if d.name.is_empty() || !names.insert(d.name.as_str()) {
                return domain(format!("deficit names must be unique and non-empty ('{}')", d.name));
            }
            if d.multipliers.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                return domain(format!("deficit '{}': multipliers must be positive", d.name));
            }
            let total: f64 = d.intensity_probs.iter().sum();
            if d.intensity_probs.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-9 {
                return domain(format!("deficit '{}': intensity probabilities must sum to 1", d.name));
            }
            if !(0.0..=1.0).contains(&d.change_prob) {
                return domain(format!("deficit '{}': change_prob outside [0, 1]", d.name));
            }
        }
        check_fractions(&self.split)?;
        if self.subsample_length == 0 || self.subsample_length > self.series_length {
            return domain("subsample_length must lie in 1..=series_length");
        }
        Ok(())
    }

    pub fn qf_schema(&self) -> Vec<QfSpec> {
        self.deficits.iter().map(|d| QfSpec::ordinal(&d.name)).collect()
    }
}

/// Generated dataset plus the latent per-step error probabilities, which
/// never appear in the records.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedDataset {
    pub dataset: Dataset,
    pub latent_error_probs: Vec<Vec<f64>>,
}

/// Independent RNG stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// stream offsets; series streams use 0..n_series
const SPLIT_STREAM: u64 = 1 << 40;
const CAL_SUBSAMPLE_STREAM: u64 = 2 << 40;
const TEST_SUBSAMPLE_STREAM: u64 = 3 << 40;

fn draw_intensity<R: Rng>(rng: &mut R, probs: &[f64; 4]) -> u8 {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if x < acc {
            return i as u8;
        }
    }
    MAX_INTENSITY
}

pub fn generate(config: &ScenarioConfig, seed: u64) -> Result<GeneratedDataset> {
    config.validate()?;
    let labels =
        (0..config.n_classes).map(|i| ClassLabel { id: LabelId(i as u32), name: format!("class_{i:02}") }).collect();
    let width = (config.n_series.max(1) - 1).to_string().len().max(4);

    let (series, latent): (Vec<_>, Vec<_>) = (0..config.n_series)
        .map(|s| generate_series(config, &mut stream_rng(seed, s as u64), format!("s{s:0width$}")))
        .unzip();

    Ok(GeneratedDataset {
        dataset: Dataset { labels, qf_schema: config.qf_schema(), split: Split::Train, series },
        latent_error_probs: latent,
    })
}

fn generate_series<R: Rng>(config: &ScenarioConfig, rng: &mut R, series_id: String) -> (Timeseries, Vec<f64>) {
    let n_classes = config.n_classes as u32;
    let truth = rng.random_range(0..n_classes);
    let wrong_class = |rng: &mut R| {
        let k = rng.random_range(0..n_classes - 1);
        if k >= truth {
            k + 1
        } else {
            k
        }
    };
    let confusion = wrong_class(rng);
    let difficulty: f64 = rng.random();
    let mut intensities: Vec<u8> = config.deficits.iter().map(|d| draw_intensity(rng, &d.intensity_probs)).collect();

    let mut steps = Vec::with_capacity(config.series_length);
    let mut latent = Vec::with_capacity(config.series_length);
    for t in 0..config.series_length {
        if t > 0 {
            for (d, level) in config.deficits.iter().zip(intensities.iter_mut()) {
                if d.varying && rng.random::<f64>() < d.change_prob {
                    *level = draw_intensity(rng, &d.intensity_probs);
                }
            }
        }
        let multiplier: f64 =
            config.deficits.iter().zip(&intensities).map(|(d, &i)| d.multipliers[i as usize]).product();
        let p =
            (config.base_curve.at(t, config.series_length) * multiplier).clamp(MIN_ERROR_PROB, config.max_error_prob);

        let persistent = rng.random::<f64>() < config.rho;
        let fresh: f64 = rng.random();
        let draw = if persistent { difficulty } else { fresh };
        let outcome = if draw < p {
            let systematic = rng.random::<f64>() < config.rho;
            let other = wrong_class(rng);
            if systematic {
                confusion
            } else {
                other
            }
        } else {
            truth
        };

        let qf: QualityFactorVector =
            config.deficits.iter().zip(&intensities).map(|(d, &i)| (d.name.clone(), QfValue::Ordinal(i))).collect();
        steps.push(StepRecord {
            series_id: series_id.clone(),
            step_index: t,
            truth: LabelId(truth),
            outcome: LabelId(outcome),
            qf,
            step_uncertainty: None,
        });
        latent.push(p);
    }
    (Timeseries { series_id, steps }, latent)
}

fn check_fractions(f: &SplitFractions) -> Result<()> {
    let parts = [f.train, f.calibration, f.test];
    if parts.iter().any(|p| p.is_nan() || *p <= 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return domain("split fractions must be positive and sum to 1");
    }
    Ok(())
}

/// Random series-level partition. Train and calibration counts are
/// floored, the test split takes the remainder.
pub fn split_dataset(dataset: &Dataset, fractions: SplitFractions, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    check_fractions(&fractions)?;
    let n = dataset.series.len();
    let n_train = (n as f64 * fractions.train + 1e-9).floor() as usize;
    let n_cal = (n as f64 * fractions.calibration + 1e-9).floor() as usize;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, SPLIT_STREAM));
    let take = |range: &[usize]| {
        let mut idx = range.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| dataset.series[i].clone()).collect::<Vec<_>>()
    };
    Ok((
        dataset.with_series(Split::Train, take(&order[..n_train])),
        dataset.with_series(Split::Calibration, take(&order[n_train..n_train + n_cal])),
        dataset.with_series(Split::Test, take(&order[n_train + n_cal..])),
    ))
}

/// Contiguous window of `target_length` steps with a uniform start,
/// re-indexed from zero.
pub fn subsample_series<R: Rng>(series: &Timeseries, target_length: usize, rng: &mut R) -> Result<Timeseries> {
    if target_length == 0 {
        return domain("target length must be positive");
    }
    if series.len() < target_length {
        return domain(format!("series {} has {} steps, need {target_length}", series.series_id, series.len()));
    }
    let start = rng.random_range(0..=series.len() - target_length);
    Ok(window(series, start, target_length))
}

fn window(series: &Timeseries, start: usize, len: usize) -> Timeseries {
    let steps = series.steps[start..start + len]
        .iter()
        .enumerate()
        .map(|(i, s)| StepRecord { step_index: i, ..s.clone() })
        .collect();
    Timeseries { series_id: series.series_id.clone(), steps }
}

/// Subsamples every series, each from its own stream of `seed`.
pub fn subsample_dataset(dataset: &Dataset, target_length: usize, seed: u64) -> Result<Dataset> {
    let series = dataset
        .series
        .iter()
        .enumerate()
        .map(|(i, s)| subsample_series(s, target_length, &mut stream_rng(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(dataset.with_series(dataset.split, series))
}

/// Cuts every series into consecutive non-overlapping windows of `length`
/// steps (the last one may be shorter). Window `k` of series `id` becomes
/// series `id#k`.
pub fn tile_windows(dataset: &Dataset, length: usize) -> Result<Dataset> {
    if length == 0 {
        return domain("window length must be positive");
    }
    let mut series = Vec::new();
    for s in &dataset.series {
        for (k, start) in (0..s.len()).step_by(length).enumerate() {
            let mut w = window(s, start, length.min(s.len() - start));
            w.series_id = format!("{}#{k}", s.series_id);
            for step in &mut w.steps {
                step.series_id = w.series_id.clone();
            }
            series.push(w);
        }
    }
    Ok(dataset.with_series(dataset.split, series))
}

/// Train, calibration and test sets for one benchmark run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedSplits {
    pub train: Dataset,
    pub calibration: Dataset,
    pub test: Dataset,
}

/// Generates, splits at series level, and subsamples the calibration and
/// test series to `config.subsample_length`; training series stay whole.
pub fn simulate(config: &ScenarioConfig, seed: u64) -> Result<SimulatedSplits> {
    let generated = generate(config, seed)?;
    let (train, cal, test) = split_dataset(&generated.dataset, config.split, seed)?;
    Ok(SimulatedSplits {
        train,
        calibration: subsample_dataset(&cal, config.subsample_length, seed ^ CAL_SUBSAMPLE_STREAM)?,
        test: subsample_dataset(&test, config.subsample_length, seed ^ TEST_SUBSAMPLE_STREAM)?,
    })
}
