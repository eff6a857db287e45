use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tauw_core::eval::replay;
use tauw_core::qim::{fit_tree, Leaf, TreeNode};
use tauw_core::simgen::BaseCurve;
use tauw_core::{fit_models, simulate, Dataset, PipelineConfig, ScenarioConfig, TimeseriesBuffer};

/// Straightforward CART: try every feature and every midpoint, count both
/// sides from scratch, keep the first strictly better candidate.
fn oracle_tree(rows: &[(Vec<f64>, bool)], depth: usize, max_depth: usize) -> TreeNode {
    let n = rows.len();
    let errors = rows.iter().filter(|r| r.1).count();
    let leaf = TreeNode::Leaf(Leaf { train_error_count: errors as u64, train_count: n as u64, ..Leaf::default() });
    if depth >= max_depth || errors == 0 || errors == n {
        return leaf;
    }
    let gini = |k: usize, m: usize| {
        let p = k as f64 / m as f64;
        1.0 - p * p - (1.0 - p) * (1.0 - p)
    };
    let parent = gini(errors, n);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..rows[0].0.len() {
        let mut values: Vec<f64> = rows.iter().map(|r| r.0[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<_>, Vec<_>) = rows.iter().partition(|row| row.0[f] <= t);
            let le = l.iter().filter(|x| x.1).count();
            let re = r.iter().filter(|x| x.1).count();
            let imp = (l.len() as f64 * gini(le, l.len()) + r.len() as f64 * gini(re, r.len())) / n as f64;
            let bar = best.map_or(parent, |b| b.2);
            if imp < bar - 1e-12 {
                best = Some((f, t, imp));
            }
        }
    }
    match best {
        Some((f, t, _)) => {
            let (l, r): (Vec<_>, Vec<_>) = rows.iter().cloned().partition(|row| row.0[f] <= t);
            TreeNode::Split {
                feature: format!("q{f}"),
                feature_index: f,
                threshold: t,
                left: Box::new(oracle_tree(&l, depth + 1, max_depth)),
                right: Box::new(oracle_tree(&r, depth + 1, max_depth)),
            }
        }
        None => leaf,
    }
}

#[test]
fn cart_matches_brute_force_oracle() {
    let names = vec!["q0".to_string(), "q1".to_string()];
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<(Vec<f64>, bool)> = (0..200)
            .map(|_| {
                let a = rng.random_range(0..=3u8) as f64;
                let b = rng.random_range(0..=3u8) as f64;
                let p = 0.05 + 0.1 * a + 0.05 * b;
                (vec![a, b], rng.random::<f64>() < p)
            })
            .collect();
        let samples: Vec<_> = rows.iter().map(|(f, y)| tauw_core::Sample::new(f.clone(), *y)).collect();
        for max_depth in [1, 3, 8] {
            assert_eq!(
                fit_tree(&samples, &names, max_depth).unwrap(),
                oracle_tree(&rows, 0, max_depth),
                "seed {seed} depth {max_depth}"
            );
        }
    }
}

fn small_config() -> ScenarioConfig {
    ScenarioConfig { n_series: 300, ..ScenarioConfig::paperlike() }
}

#[test]
fn interleaved_series_do_not_share_state() {
    let splits = simulate(&small_config(), 7).unwrap();
    let models = fit_models(
        &splits.train,
        &splits.calibration,
        &PipelineConfig { qim: tauw_core::QimConfig { min_leaf: 50, ..Default::default() }, ..Default::default() },
    )
    .unwrap();
    let a = &splits.test.series[0];
    let b = &splits.test.series[1];

    let mut sequential = Vec::new();
    let mut buffer = TimeseriesBuffer::new();
    for series in [a, b] {
        buffer.reset(&series.series_id);
        for step in &series.steps {
            sequential.push(buffer.process_step(step, &models.stateless, &models.ta).unwrap());
        }
    }

    // one buffer per series, steps fed alternately
    let (mut buf_a, mut buf_b) = (TimeseriesBuffer::new(), TimeseriesBuffer::new());
    let (mut out_a, mut out_b) = (Vec::new(), Vec::new());
    for (sa, sb) in a.steps.iter().zip(&b.steps) {
        out_a.push(buf_a.process_step(sa, &models.stateless, &models.ta).unwrap());
        out_b.push(buf_b.process_step(sb, &models.stateless, &models.ta).unwrap());
    }
    out_a.extend(out_b);
    assert_eq!(sequential, out_a);
}

#[test]
fn replay_is_deterministic_and_survives_a_file_round_trip() {
    let splits = simulate(&small_config(), 11).unwrap();
    let config =
        PipelineConfig { qim: tauw_core::QimConfig { min_leaf: 50, ..Default::default() }, ..Default::default() };
    let models = fit_models(&splits.train, &splits.calibration, &config).unwrap();
    let again = fit_models(&splits.train, &splits.calibration, &config).unwrap();
    assert_eq!(models, again);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("test.jsonl");
    splits.test.save(&path).unwrap();
    let reloaded = Dataset::load(&path).unwrap();
    assert_eq!(reloaded, splits.test);

    let model_path = dir.path().join("tauw.json");
    models.ta.save(&model_path).unwrap();
    let ta = tauw_core::CalibratedTree::load(&model_path).unwrap();
    assert_eq!(
        replay(&splits.test, &models.stateless, &models.ta).unwrap(),
        replay(&reloaded, &models.stateless, &ta).unwrap()
    );
}

#[test]
fn flat_base_curve_is_constant() {
    let curve = BaseCurve { start: 0.1, end: 0.1 };
    assert!((0..30).all(|t| (curve.at(t, 30) - 0.1).abs() < 1e-15));
}
