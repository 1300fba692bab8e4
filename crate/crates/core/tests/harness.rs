mod common;

use std::sync::OnceLock;

use backcompat::harness::{
    load_data, run_experiment, run_sweep_on, trial_seed, ExperimentConfig, Strategy, SweepAxis, SweepReport,
};
use backcompat::metrics::{flip_report, FlipReport, MetricKind};
use backcompat::scoring::train;
use backcompat::structures::{Sentence, Structure};

const TINY: &str = r#"
seed = 3
num_trials = 2
metrics = ["UAS", "LAS", "UCM"]

[data]
task = "dependency"
train_size = 60
test_size = 25

[train]
epochs = 2

[[settings]]
name = "seed"
old = { kind = "arc_factored", capacity = "small", seed = 1 }
new = { kind = "arc_factored", capacity = "small", seed = 2 }

[[settings]]
name = "factorization"
old = { kind = "arc_factored", capacity = "small", seed = 1 }
new = { kind = "action_factored", capacity = "small", seed = 2 }

[mitigation]
ensemble_size = 2
bcr = { method = "dropout_p", rate = 0.3, num_candidates = 4, seed = 0 }
"#;

fn tiny() -> ExperimentConfig {
    ExperimentConfig::from_toml(TINY).unwrap()
}

/// Regenerate with `UPDATE_GOLDEN=1 cargo test --test harness`.
#[test]
fn tiny_report_matches_golden_file() {
    let report = run_experiment(&tiny()).unwrap();
    let actual = serde_json::to_string_pretty(&report).unwrap() + "\n";
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/tiny_report.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).expect("golden file exists; set UPDATE_GOLDEN=1 to create it");
    assert!(actual == expected, "report differs from {}", path.display());
}

#[test]
fn identical_configs_give_identical_reports() {
    let a = run_experiment(&tiny()).unwrap();
    let b = run_experiment(&tiny()).unwrap();
    assert_eq!(a, b);
    let mut other = tiny();
    other.seed = 4;
    assert_ne!(other.hash(), a.config_hash);
    assert_ne!(run_experiment(&other).unwrap().cells, a.cells);
}

#[test]
fn untreated_row_is_the_plain_decode() {
    let config = tiny();
    let report = run_experiment(&config).unwrap();
    let (train_set, test) = load_data(&config).unwrap();
    let sentences: Vec<&Sentence> = test.sentences().collect();
    let golds: Vec<Structure> = test.golds().cloned().collect();
    for setting in &config.settings {
        for trial in 0..config.num_trials {
            let decode = |spec: &backcompat::harness::ModelSpec| -> Vec<Structure> {
                let seed = trial_seed(&config, spec.seed, trial);
                let model = train(
                    spec.kind,
                    spec.capacity,
                    &train_set,
                    &config.train.train_config(seed, spec.data_fraction),
                )
                .unwrap();
                sentences.iter().map(|s| model.predict(s).unwrap()).collect()
            };
            let (old, new) = (decode(&setting.old), decode(&setting.new));
            let cell = report
                .cells
                .iter()
                .find(|c| c.setting == setting.name && c.trial == trial)
                .unwrap();
            for &metric in &config.metrics {
                let expected = flip_report(&sentences, &old, &new, &golds, metric, config.exclude_punct).unwrap();
                assert_eq!(cell.record(Strategy::Untreated, metric).unwrap(), &expected.to_record());
            }
        }
    }
}

#[test]
fn single_candidate_bcr_is_untreated() {
    let config = tiny();
    let (train_set, test) = load_data(&config).unwrap();
    // A sweep value counts every candidate, the deterministic one included,
    // so `num_candidates = 4` samples correspond to the value 5.
    let sweep = run_sweep_on(&config, SweepAxis::NumCandidates, &[1.0, 5.0], &train_set, &test).unwrap();
    let report = run_experiment(&config).unwrap();
    for cell in &report.cells {
        for &metric in &config.metrics {
            let untreated = cell.record(Strategy::Untreated, metric).unwrap();
            let bcr = sweep
                .record(&cell.setting, cell.trial, 1.0, Strategy::Bcr, metric)
                .unwrap();
            assert_eq!(bcr, untreated);
            let full = sweep
                .record(&cell.setting, cell.trial, 5.0, Strategy::Bcr, metric)
                .unwrap();
            assert_eq!(full, cell.record(Strategy::Bcr, metric).unwrap());
        }
    }
}

#[test]
fn seed_change_alone_causes_regression() {
    let mut config = common::desk_config();
    config.settings.retain(|s| s.name == "seed");
    config.num_trials = 1;
    config.data.test_size = 300;
    config.metrics = vec![MetricKind::Uas];
    config.mitigation.distillation = false;
    config.mitigation.ensemble_size = 0;
    config.mitigation.oracles = false;
    config.mitigation.bcr.num_candidates = 1;
    let report = run_experiment(&config).unwrap();
    let untreated = report.cells[0].record(Strategy::Untreated, MetricKind::Uas).unwrap();
    assert!(untreated.negative_flips > 0, "{:?}", untreated);
}

fn desk_dropout_sweep() -> &'static SweepReport {
    static SWEEP: OnceLock<SweepReport> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let config = common::desk_config();
        let (train_set, test) = load_data(&config).unwrap();
        run_sweep_on(
            &config,
            SweepAxis::DropoutRate,
            &[0.1, 0.2, 0.3, 0.4],
            &train_set,
            &test,
        )
        .unwrap()
    })
}

/// Mean BCR rate at one dropout rate over every (setting, trial, metric).
fn bcr_mean(sweep: &SweepReport, rate: f64, field: fn(&FlipReport) -> f64) -> f64 {
    let values: Vec<f64> = sweep
        .points
        .iter()
        .filter(|p| p.value == rate && p.strategy == Strategy::Bcr)
        .flat_map(|p| p.metrics.iter().map(|m| field(&m.counts())))
        .collect();
    values.iter().sum::<f64>() / values.len() as f64
}

#[test]
fn higher_dropout_rates_cost_accuracy() {
    let sweep = desk_dropout_sweep();
    let acc = |r| bcr_mean(sweep, r, FlipReport::acc_new);
    assert!(
        acc(0.4) <= acc(0.1),
        "ACC {:.2} at 0.4 vs {:.2} at 0.1",
        acc(0.4),
        acc(0.1)
    );
}

// Expected from the larger-scale results: more diverse candidates give the
// old model more room to pick compatible ones. With feature-based scorers
// the extra candidates at high rates are mostly noise, and NFR rises.
#[test]
#[ignore = "not reproduced at desk scale: BCR NFR grows with the dropout rate"]
fn higher_dropout_rates_reduce_negative_flips() {
    let sweep = desk_dropout_sweep();
    let nfr = |r| bcr_mean(sweep, r, FlipReport::nfr);
    assert!(
        nfr(0.3) <= nfr(0.1),
        "NFR {:.2} at 0.3 vs {:.2} at 0.1",
        nfr(0.3),
        nfr(0.1)
    );
}
