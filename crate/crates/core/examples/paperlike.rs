//! Runs the paperlike benchmark end to end and prints a comparison of all
//! evaluation conditions.
//!
//! cargo run --release -p tauw-core --example paperlike [seed] [config.json]
//!
//! Set `IMPORTANCE=1` to also run the 16-subset feature importance study.

use tauw_core::eval::{
    cases, feature_importance_study, misclassification_by_step, replay, Condition, EvaluationReport,
};
use tauw_core::{fit_models, simulate, PipelineConfig, ScenarioConfig};

fn main() -> tauw_core::Result<()> {
    let seed = std::env::args().nth(1).map_or(42, |s| s.parse().expect("seed must be an integer"));
    let config = match std::env::args().nth(2) {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => ScenarioConfig::paperlike(),
    };
    let splits = simulate(&config, seed)?;
    let models = fit_models(&splits.train, &splits.calibration, &PipelineConfig::default())?;
    println!("stateless leaves: {}, ta leaves: {}", models.stateless.leaves().len(), models.ta.leaves().len());

    let traces = replay(&splits.test, &models.stateless, &models.ta)?;
    println!(
        "{:<14} {:>8} {:>8} {:>8} {:>9} {:>9} {:>9} {:>7}",
        "condition", "brier", "var", "unspec", "unrel", "overconf", "min_u", "at_min"
    );
    for condition in Condition::ALL {
        let r = EvaluationReport::from_cases(&cases(&traces, condition))?;
        println!(
            "{:<14} {:>8.5} {:>8.5} {:>8.5} {:>9.2e} {:>9.2e} {:>9.5} {:>7.3}",
            condition.name(),
            r.brier,
            r.variance,
            r.unspecificity,
            r.unreliability,
            r.overconfidence,
            r.guaranteed_min_uncertainty,
            r.fraction_at_min
        );
    }
    println!("step  isolated  fused");
    for rate in misclassification_by_step(&traces)? {
        println!("{:>4}  {:>8.4}  {:>5.4}", rate.step, rate.isolated_rate, rate.fused_rate);
    }
    if std::env::var_os("IMPORTANCE").is_some() {
        let config = PipelineConfig::default();
        let rows = feature_importance_study(
            &splits.train,
            &splits.calibration,
            &splits.test,
            &models.stateless,
            &config.qim,
            config.train_window,
        )?;
        println!("ratio length size certainty  brier");
        for row in rows {
            println!(
                "{:>5} {:>6} {:>4} {:>9}  {:.6}",
                row.ratio as u8, row.length as u8, row.size as u8, row.certainty as u8, row.brier
            );
        }
    }
    Ok(())
}
