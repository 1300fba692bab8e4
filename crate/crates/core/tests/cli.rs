use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use backcompat::metrics::FlipRecord;
use backcompat::structures::{parse_conllu, Split};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_backcompat"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = bin(args, cwd);
    assert!(
        out.status.success(),
        "{:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Synthetic train/test files and two trained arc models with their
/// predictions on the test file.
struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace { dir };
        let d = ws.path();
        ok(
            &[
                "synth",
                "--task",
                "dependency",
                "--count",
                "80",
                "--seed",
                "1",
                "--out",
                "train.conllu",
            ],
            d,
        );
        ok(
            &[
                "synth",
                "--task",
                "dependency",
                "--count",
                "25",
                "--seed",
                "2",
                "--out",
                "test.conllu",
            ],
            d,
        );
        for (seed, name) in [("1", "old"), ("2", "new")] {
            let model = format!("{}.bin", name);
            ok(
                &[
                    "train",
                    "--data",
                    "train.conllu",
                    "--kind",
                    "arc",
                    "--epochs",
                    "3",
                    "--seed",
                    seed,
                    "--out",
                    &model,
                ],
                d,
            );
            ok(
                &[
                    "predict",
                    "--model",
                    &model,
                    "--input",
                    "test.conllu",
                    "--out",
                    &format!("{}.conllu", name),
                ],
                d,
            );
        }
        ws
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn file(&self, name: &str) -> PathBuf {
        self.path().join(name)
    }
}

#[test]
fn flips_prints_a_record_matching_a_hand_count() {
    let ws = Workspace::new();
    let stdout = ok(
        &[
            "flips",
            "--old",
            "old.conllu",
            "--new",
            "new.conllu",
            "--gold",
            "test.conllu",
            "--metric",
            "UAS",
        ],
        ws.path(),
    );
    let record: FlipRecord = serde_json::from_str(&stdout).unwrap();

    let read = |name: &str| parse_conllu(&std::fs::read_to_string(ws.file(name)).unwrap(), Split::Test).unwrap();
    let (old, new, gold) = (read("old.conllu"), read("new.conllu"), read("test.conllu"));
    let (mut total, mut neg, mut pos) = (0, 0, 0);
    for ((o, n), g) in old.iter().zip(new.iter()).zip(gold.iter()) {
        let (o, n, gd) = (
            o.gold.as_dep().unwrap(),
            n.gold.as_dep().unwrap(),
            g.gold.as_dep().unwrap(),
        );
        for t in 0..gd.len() {
            if g.sentence.pos_tags()[t] == "PUNCT" {
                continue;
            }
            let (oc, nc) = (o.head(t) == gd.head(t), n.head(t) == gd.head(t));
            total += 1;
            neg += usize::from(oc && !nc);
            pos += usize::from(!oc && nc);
        }
    }
    assert_eq!(record.total_units, total);
    assert_eq!(record.negative_flips, neg);
    assert_eq!(record.positive_flips, pos);
    assert_eq!(record.nfr, format!("{:.2}", 100.0 * neg as f64 / total as f64));
}

#[test]
fn evaluate_writes_requested_metrics() {
    let ws = Workspace::new();
    ok(
        &[
            "evaluate",
            "--pred",
            "new.conllu",
            "--gold",
            "test.conllu",
            "--metric",
            "LAS",
            "--metric",
            "UCM",
            "--out",
            "eval.json",
        ],
        ws.path(),
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.file("eval.json")).unwrap()).unwrap();
    let text = json.to_string();
    assert!(
        text.contains("LAS") && text.contains("UCM") && !text.contains("UAS"),
        "{}",
        text
    );
}

#[test]
fn sampled_predictions_list_at_most_m_plus_one_candidates() {
    let ws = Workspace::new();
    ok(
        &[
            "predict",
            "--model",
            "new.bin",
            "--input",
            "test.conllu",
            "--sample",
            "dropout_p=0.3,m=10,seed=5",
            "--out",
            "cands.jsonl",
        ],
        ws.path(),
    );
    let text = std::fs::read_to_string(ws.file("cands.jsonl")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 25);
    let mut grew = false;
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let cands = v["candidates"].as_array().unwrap();
        assert!(!cands.is_empty() && cands.len() <= 11);
        assert_eq!(cands[0]["rank"], 0);
        grew |= cands.len() > 1;
    }
    assert!(grew, "dropout produced no alternatives at all");
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let help = bin(&["--help"], dir.path());
    assert_eq!(help.status.code(), Some(0));
    let unknown = bin(&["flips", "--bogus"], dir.path());
    assert_eq!(unknown.status.code(), Some(1));
    let missing = bin(
        &[
            "flips", "--old", "a.conllu", "--new", "b.conllu", "--gold", "c.conllu", "--metric", "UAS",
        ],
        dir.path(),
    );
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());
    std::fs::write(dir.path().join("bad.toml"), "seed = 1\nnum_trials = 0\n").unwrap();
    let bad_config = bin(&["experiment", "--config", "bad.toml"], dir.path());
    assert_eq!(bad_config.status.code(), Some(1));
}

const TINY: &str = r#"
seed = 3
num_trials = 1
metrics = ["UAS", "LAS"]
out_dir = "results"

[data]
task = "dependency"
train_size = 60
test_size = 20

[train]
epochs = 2

[[settings]]
name = "seed"
old = { kind = "arc_factored", capacity = "small", seed = 1 }
new = { kind = "arc_factored", capacity = "small", seed = 2 }

[mitigation]
ensemble_size = 2
bcr = { method = "dropout_p", rate = 0.3, num_candidates = 3, seed = 0 }
"#;

#[test]
fn experiment_writes_report_under_the_config_directory() {
    let dir = tempfile::tempdir().unwrap();
    let conf_dir = dir.path().join("conf");
    std::fs::create_dir(&conf_dir).unwrap();
    std::fs::write(conf_dir.join("tiny.toml"), TINY).unwrap();
    ok(&["experiment", "--config", "conf/tiny.toml"], dir.path());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(conf_dir.join("results/report.json")).unwrap()).unwrap();
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    let strategies: Vec<&str> = report["cells"][0]["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["strategy"].as_str().unwrap())
        .collect();
    assert_eq!(
        strategies,
        [
            "untreated",
            "distillation",
            "ensemble",
            "bcr",
            "oracle_acc",
            "oracle_nfr"
        ]
    );

    ok(
        &["experiment", "--config", "conf/tiny.toml", "--out", "elsewhere"],
        dir.path(),
    );
    assert!(dir.path().join("elsewhere/report.json").exists());
}
