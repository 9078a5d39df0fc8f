mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use advocc::eval::{read_stability_csv, EvaluationReport};
use advocc::experiment::{parse_config, RunManifest, ABLATION_CSV, DATA_ROOT_ENV, LOCK_FILE};
use advocc::trainer::read_loss_log;
use common::write_idx_dataset;
use tempfile::TempDir;

const EPOCHS: usize = 2;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_idx_dataset(&dir.path().join("data/mnist"), 200, 120, 1);
        let config = serde_json::json!({
            "protocol": "mnist",
            "inlier_digit": 0,
            "outlier_ratio": 0.3,
            "phase1_epochs": EPOCHS,
            "phase2_iterations": 75,
            "batch_size": 8,
            "generator_widths": [4, 8],
            "discriminator_widths": [4, 8],
            "stability_epoch_start": 1,
            "stability_epoch_end": 2,
        });
        fs::write(dir.path().join("cfg.json"), config.to_string()).unwrap();
        Workspace { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_advocc"))
            .args(args)
            .env(DATA_ROOT_ENV, self.path("data"))
            .env("RUST_LOG", "warn")
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }
}

fn count_dirs(dir: &Path) -> usize {
    fs::read_dir(dir)
        .map(|d| d.filter(|e| e.as_ref().unwrap().path().is_dir()).count())
        .unwrap_or(0)
}

#[test]
fn train_writes_a_complete_run() {
    let ws = Workspace::new();
    ws.ok(&[
        "train",
        "--config",
        "cfg.json",
        "--out",
        "run",
        "--seed",
        "5",
        "--deterministic",
    ]);
    let run = ws.path("run");

    let m = RunManifest::read(&run).unwrap();
    assert!(m.complete && m.error.is_none());
    assert_eq!(m.command, "train");
    assert_eq!((m.seed, m.deterministic), (5, true));
    assert_eq!(serde_json::to_value(m.g_old_strategy).unwrap()["epoch"], 1);
    let stages: Vec<&str> = m.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(
        stages,
        ["data", "phase_one", "g_old", "phase_two", "evaluate"]
    );

    // One generator per epoch; discriminators per epoch plus 0, 5, ..., 75.
    assert_eq!(m.checkpoints.generator.len(), EPOCHS);
    assert_eq!(
        m.checkpoints.discriminator.len(),
        EPOCHS + 75usize.div_ceil(5) + 1
    );
    assert_eq!(count_dirs(&run.join("checkpoints/phase2")), 16);
    for rel in m
        .checkpoints
        .generator
        .iter()
        .chain(&m.checkpoints.discriminator)
    {
        assert!(run.join(rel).join("params.bin").is_file(), "{rel}");
    }

    // The persisted config is resolved and reloadable.
    let cfg = parse_config(&run.join("config.json")).unwrap();
    assert_eq!(cfg.seed, 5);
    assert_eq!(cfg.generator_widths.as_deref(), Some(&[4, 8][..]));
    assert_eq!(cfg.image_height, Some(28));

    for name in ["baseline", "final"] {
        let dir = run.join("reports").join(name);
        let report = EvaluationReport::read_json(&dir.join("report.json")).unwrap();
        assert!((0.0..=1.0).contains(&report.auc));
        assert_eq!(report.n_inliers, 12);
        assert!(dir.join("scores.csv").is_file() && dir.join("histogram.csv").is_file());
    }
    assert!(run.join("split/split.csv").is_file());

    let log = read_loss_log(&run.join("losses.jsonl")).unwrap();
    assert_eq!(
        log.iter().filter(|r| r.phase == advocc::Phase::Two).count(),
        75
    );
    assert!(!run.join(LOCK_FILE).exists());

    // Nothing outside --out besides the inputs.
    let mut top: Vec<String> = fs::read_dir(ws.dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, ["cfg.json", "data", "run"]);
}

#[test]
fn same_seed_same_hashes() {
    let ws = Workspace::new();
    for (out, seed) in [("a", "3"), ("b", "3"), ("c", "4")] {
        ws.ok(&[
            "train",
            "--config",
            "cfg.json",
            "--out",
            out,
            "--seed",
            seed,
            "--deterministic",
        ]);
    }
    let hashes = |d: &str| RunManifest::read(&ws.path(d)).unwrap().hashes;
    assert_eq!(hashes("a"), hashes("b"));
    assert_ne!(
        hashes("a")["final_discriminator"],
        hashes("c")["final_discriminator"]
    );
}

#[test]
fn evaluate_reproduces_the_training_report() {
    let ws = Workspace::new();
    ws.ok(&["train", "--config", "cfg.json", "--out", "run"]);
    let g = format!("run/checkpoints/phase1/generator/epoch_{EPOCHS:03}");
    ws.ok(&[
        "evaluate",
        "--config",
        "cfg.json",
        "--out",
        "eval",
        "--generator",
        &g,
        "--discriminator",
        "run/checkpoints/phase2/iter_0075",
    ]);
    let a = EvaluationReport::read_json(&ws.path("run/reports/final/report.json")).unwrap();
    let b = EvaluationReport::read_json(&ws.path("eval/report.json")).unwrap();
    assert_eq!(a, b);

    let missing = ws.run(&[
        "evaluate",
        "--config",
        "cfg.json",
        "--out",
        "eval2",
        "--generator",
        "nope",
        "--discriminator",
        "nope",
    ]);
    assert!(!missing.status.success());
}

#[test]
fn baseline_variant_skips_phase_two() {
    let ws = Workspace::new();
    ws.ok(&[
        "train",
        "--config",
        "cfg.json",
        "--out",
        "run",
        "--variant",
        "baseline",
    ]);
    let m = RunManifest::read(&ws.path("run")).unwrap();
    assert_eq!(m.checkpoints.discriminator.len(), EPOCHS);
    assert_eq!(
        m.hashes["final_discriminator"],
        m.hashes["phase_one_discriminator"]
    );
}

#[test]
fn ablation_table_has_every_variant() {
    let ws = Workspace::new();
    let out = ws.ok(&["ablation", "--config", "cfg.json", "--out", "ab"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let text = fs::read_to_string(ws.path("ab").join(ABLATION_CSV)).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "metric,baseline,no_real,no_pseudo,no_low,raw_mix,full"
    );
    assert_eq!(text.lines().count(), 4);
    for v in [
        "baseline",
        "no_real",
        "no_pseudo",
        "no_low",
        "raw_mix",
        "full",
    ] {
        assert!(stdout.contains(v));
    }
}

#[test]
fn stability_and_preview() {
    let ws = Workspace::new();
    ws.ok(&["stability", "--config", "cfg.json", "--out", "st"]);
    let rows = read_stability_csv(&ws.path("st/stability.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 16);
    assert!(ws.path("st/stability_series.json").is_file());

    ws.ok(&["train", "--config", "cfg.json", "--out", "run"]);
    let out = ws.ok(&[
        "pseudo-preview",
        "--run",
        "run",
        "--out",
        "pp",
        "--count",
        "4",
    ]);
    assert!(String::from_utf8_lossy(&out.stdout)
        .trim()
        .ends_with("pp/pseudo_preview.png"));
    let img = advocc::data::load_image(&ws.path("pp/pseudo_preview.png"), 1).unwrap();
    // Five stage rows and four columns of 28px tiles with 2px gutters.
    assert_eq!((img.height, img.width), (5 * 30 + 2, 4 * 30 + 2));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let ws = Workspace::new();
    fs::write(ws.path("bad.json"), r#"{"lamda": 0.2}"#).unwrap();
    let out = ws.run(&["train", "--config", "bad.json", "--out", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));

    fs::write(ws.path("range.json"), r#"{"alpha": 1.5}"#).unwrap();
    let out = ws.run(&["train", "--config", "range.json", "--out", "x"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));

    assert!(!ws
        .run(&[
            "train",
            "--config",
            "cfg.json",
            "--out",
            "x",
            "--variant",
            "nope"
        ])
        .status
        .success());
    assert!(!ws.run(&["train", "--config", "cfg.json"]).status.success());

    // A held lock keeps a second command out of the directory.
    fs::create_dir_all(ws.path("locked")).unwrap();
    fs::write(ws.path("locked").join(LOCK_FILE), "1").unwrap();
    let out = ws.run(&["train", "--config", "cfg.json", "--out", "locked"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("in use"));
}

#[test]
fn failed_run_leaves_an_incomplete_manifest() {
    let ws = Workspace::new();
    fs::write(
        ws.path("nodata.json"),
        r#"{"mnist_dir": "missing", "phase1_epochs": 1}"#,
    )
    .unwrap();
    let out = ws.run(&["train", "--config", "nodata.json", "--out", "run"]);
    assert!(!out.status.success());
    let m = RunManifest::read(&ws.path("run")).unwrap();
    assert!(!m.complete);
    assert!(m.error.unwrap().contains("missing"));
    assert!(!ws.path("run").join(LOCK_FILE).exists());
}
