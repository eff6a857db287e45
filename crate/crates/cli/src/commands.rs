use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use tauw_core::eval::{
    cases, feature_importance_study, misclassification_by_step, replay, uncertainty_distribution, Condition, UfChoice,
    HISTOGRAM_BINS,
};
use tauw_core::pipeline::{check_compatible, fit_stateless};
use tauw_core::wrapper::{parse_taqf_list, taqf_of_schema};
use tauw_core::{
    fit_models, simulate as run_simulation, validate_dataset, CalibratedTree, Dataset, Error, EvaluationReport,
    PipelineConfig, QimConfig, ScenarioConfig,
};

use crate::output::{csv, sig6, OutDir, RunManifest};
use crate::{EvaluateArgs, FitArgs, FusionFlag, ImportanceArgs, QimArgs, SimulateArgs, UfFlag, UsageError};

pub const STATELESS_MODEL: &str = "stateless.json";
pub const TAUW_MODEL: &str = "tauw.json";

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} file {} does not exist", path.display())))
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    require_file(path, "config")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
}

fn load_dataset(path: &Path, what: &str) -> Result<Dataset> {
    require_file(path, what)?;
    let dataset = Dataset::load(path).with_context(|| format!("loading {what} dataset {}", path.display()))?;
    let violations = validate_dataset(&dataset);
    if let Some(first) = violations.first() {
        return Err(usage(format!(
            "{what} dataset {} is invalid ({} violations), first: {first}",
            path.display(),
            violations.len()
        )));
    }
    Ok(dataset)
}

fn load_model(path: &Path) -> Result<CalibratedTree> {
    require_file(path, "model")?;
    CalibratedTree::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn pipeline_config(qim: &QimArgs, taqf: &str) -> Result<PipelineConfig> {
    Ok(PipelineConfig {
        qim: QimConfig { max_depth: qim.max_depth, min_leaf: qim.min_leaf, confidence: qim.confidence },
        taqf: parse_taqf_list(taqf)?,
        train_window: (qim.window > 0).then_some(qim.window),
    })
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut manifest = RunManifest::start("simulate");
    let config = load_config(&args.config)?;
    let seed = args.seed.unwrap_or(config.seed);
    let splits = run_simulation(&config, seed)?;

    let mut out = OutDir::create(&args.out)?;
    for (name, dataset) in
        [("train.jsonl", &splits.train), ("calibration.jsonl", &splits.calibration), ("test.jsonl", &splits.test)]
    {
        dataset.save(out.path(name))?;
    }
    manifest.config = Some(args.config.clone());
    manifest.seeds.insert("seed".into(), seed);
    manifest.options = serde_json::to_value(&config)?;
    out.finish(manifest)
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let config = pipeline_config(&args.qim, &args.taqf)?;
    let train = load_dataset(&args.train, "train")?;
    let calibration = load_dataset(&args.cal, "calibration")?;
    let models = fit_models(&train, &calibration, &config)?;

    let mut out = OutDir::create(&args.out)?;
    models.stateless.save(out.path(STATELESS_MODEL))?;
    models.ta.save(out.path(TAUW_MODEL))?;
    let mut manifest = RunManifest::start("fit").input("train", &args.train).input("calibration", &args.cal);
    manifest.options = serde_json::to_value(&config)?;
    out.finish(manifest)
}

/// The timeseries-aware model must extend the stateless schema.
fn check_models(test: &Dataset, stateless: &CalibratedTree, ta: &CalibratedTree) -> Result<()> {
    if stateless.schema != test.qf_schema {
        return Err(Error::SchemaMismatch(
            "stateless model and test dataset have different quality factor schemas".into(),
        )
        .into());
    }
    let n_ta = taqf_of_schema(&ta.schema).len();
    let base = &ta.schema[..ta.schema.len() - n_ta];
    if base != test.qf_schema.as_slice() {
        return Err(Error::SchemaMismatch(
            "timeseries-aware model and test dataset have different quality factor schemas".into(),
        )
        .into());
    }
    Ok(())
}

#[derive(Serialize)]
struct ConditionReport<'a> {
    condition: &'a str,
    #[serde(flatten)]
    report: &'a EvaluationReport,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let uf = match args.uf {
        UfFlag::None => UfChoice::None,
        UfFlag::Naive => UfChoice::Naive,
        UfFlag::Opportune => UfChoice::Opportune,
        UfFlag::Worstcase => UfChoice::WorstCase,
        UfFlag::Tauw => UfChoice::Tauw,
    };
    let condition = Condition::from_flags(matches!(args.fusion, FusionFlag::If), uf)?;
    let test = load_dataset(&args.test, "test")?;
    let stateless_path = args.models.join(STATELESS_MODEL);
    let ta_path = args.models.join(TAUW_MODEL);
    let stateless = load_model(&stateless_path)?;
    let ta = load_model(&ta_path)?;
    check_models(&test, &stateless, &ta)?;

    let traces = replay(&test, &stateless, &ta)?;
    let scored = cases(&traces, condition);
    let report = EvaluationReport::from_cases(&scored)?;
    let rates = misclassification_by_step(&traces)?;
    let distribution = uncertainty_distribution(&scored)?;

    let mut out = OutDir::create(&args.out)?;
    let json = serde_json::to_string_pretty(&ConditionReport { condition: condition.name(), report: &report })?;
    out.write("report.json", &(json + "\n"))?;
    out.write(
        "calibration_deciles.csv",
        &csv(
            &["decile", "mean_certainty", "accuracy"],
            report
                .calibration_deciles
                .iter()
                .enumerate()
                .map(|(i, d)| vec![(i + 1).to_string(), sig6(d.mean_certainty), sig6(d.accuracy)]),
        ),
    )?;
    out.write(
        "misclass_by_step.csv",
        &csv(
            &["step", "isolated_rate", "fused_rate"],
            rates.iter().map(|r| vec![r.step.to_string(), sig6(r.isolated_rate), sig6(r.fused_rate)]),
        ),
    )?;
    let width = 1.0 / HISTOGRAM_BINS as f64;
    out.write(
        "uncertainty_histogram.csv",
        &csv(
            &["bin_lower", "bin_upper", "count"],
            distribution
                .histogram
                .iter()
                .enumerate()
                .map(|(i, c)| vec![sig6(i as f64 * width), sig6((i + 1) as f64 * width), c.to_string()]),
        ),
    )?;
    let mut manifest = RunManifest::start("evaluate")
        .input("test", &args.test)
        .input("stateless_model", &stateless_path)
        .input("tauw_model", &ta_path);
    manifest.options = serde_json::json!({ "condition": condition.name() });
    out.finish(manifest)
}

pub fn importance(args: &ImportanceArgs) -> Result<()> {
    let config = pipeline_config(&args.qim, "")?;
    let train = load_dataset(&args.train, "train")?;
    let calibration = load_dataset(&args.cal, "calibration")?;
    let test = load_dataset(&args.test, "test")?;
    check_compatible(&train, &test)?;
    let mut manifest = RunManifest::start("importance")
        .input("train", &args.train)
        .input("calibration", &args.cal)
        .input("test", &args.test);
    let stateless = match &args.stateless {
        Some(path) => {
            manifest = manifest.input("stateless_model", path);
            let model = load_model(path)?;
            if model.schema != train.qf_schema {
                return Err(Error::SchemaMismatch(
                    "stateless model and datasets have different quality factor schemas".into(),
                )
                .into());
            }
            model
        }
        None => fit_stateless(&train, &calibration, &config.qim)?,
    };
    let rows = feature_importance_study(&train, &calibration, &test, &stateless, &config.qim, config.train_window)?;

    let mut out = OutDir::create(&args.out)?;
    let flag = |b: bool| u8::from(b).to_string();
    out.write(
        "importance.csv",
        &csv(
            &["ratio", "length", "size", "certainty", "brier"],
            rows.iter().map(|r| vec![flag(r.ratio), flag(r.length), flag(r.size), flag(r.certainty), sig6(r.brier)]),
        ),
    )?;
    manifest.options = serde_json::json!({
        "qim": config.qim,
        "train_window": config.train_window,
    });
    out.finish(manifest)
}
