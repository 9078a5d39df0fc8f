use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::{write_atomic, Run, RunManifest};
use super::{ExperimentConfig, ProtocolKind};
use crate::data::{
    build_folder_protocol, build_mnist_protocol, build_video_protocol, load_videos, MnistData,
    ProtocolSplit,
};
use crate::error::{Error, Result};
use crate::eval::{
    baseline_and_final, stability_sweep, write_scores_csv, write_stability_csv, EvalSet,
    EvaluationReport, StabilityOptions, StabilityRow,
};
use crate::model::{checkpoint, ModelState};
use crate::tensor::Tensor;
use crate::trainer::{
    build_g_old, epoch_dir, iteration_dir, run_phase_one, run_phase_two, AblationPreset,
    PhaseOneOptions, PhaseOneResult, PhaseTwoOptions,
};

pub const LOSS_LOG: &str = "losses.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const ABLATION_JSON: &str = "ablation.json";
pub const STABILITY_CSV: &str = "stability.csv";
pub const STABILITY_SERIES: &str = "stability_series.json";
pub const PREVIEW_PNG: &str = "pseudo_preview.png";

/// Training images plus the scoring set of one protocol instance.
pub struct Dataset {
    pub split: ProtocolSplit,
    pub eval: EvalSet,
}

impl Dataset {
    pub fn train(&self) -> Result<Tensor> {
        self.split.train_tensor()
    }
}

/// Builds the protocol named by the config from the data root.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let root = cfg.data_root();
    match cfg.protocol {
        ProtocolKind::Mnist => {
            let data = MnistData::load(&root.join(&cfg.mnist_dir))?;
            let split = build_mnist_protocol(
                &data,
                cfg.inlier_digit,
                cfg.outlier_ratio,
                cfg.seed,
                &cfg.mnist_options(),
            )?;
            let eval = EvalSet::from_split(&split)?;
            Ok(Dataset { split, eval })
        }
        ProtocolKind::Folder => {
            let split = build_folder_protocol(
                &root.join(&cfg.folder_dir),
                cfg.inlier_classes,
                cfg.seed,
                &cfg.folder_options(),
            )?;
            let eval = EvalSet::from_split(&split)?;
            Ok(Dataset { split, eval })
        }
        ProtocolKind::Video => {
            let patch = cfg.patch_config();
            let train = load_videos(&root.join(&cfg.video_train_dir))?;
            let split = build_video_protocol(
                &train,
                &patch,
                cfg.image_shape(),
                cfg.max_train_patches,
                cfg.seed,
            )?;
            let test = load_videos(&root.join(&cfg.video_test_dir))?;
            let eval = EvalSet::from_videos(&test, &patch, cfg.image_shape())?;
            Ok(Dataset { split, eval })
        }
    }
}

/// Scores `eval` with `(g, d)` and writes report, scores and histogram into
/// `dir`.
pub fn write_evaluation(
    g: &ModelState,
    d: &ModelState,
    eval: &EvalSet,
    dir: &Path,
) -> Result<EvaluationReport> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let records = eval.score(g, d)?;
    let report = EvaluationReport::from_records(&records)?;
    write_scores_csv(&records, &dir.join(SCORES_FILE))?;
    report.histogram.write_csv(&dir.join(HISTOGRAM_FILE))?;
    report.write_json(&dir.join(REPORT_FILE))?;
    Ok(report)
}

fn with_run<T>(
    out: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    body: impl FnOnce(&mut Run) -> Result<T>,
) -> Result<(T, RunManifest)> {
    let mut run = Run::open(out, command, cfg)?;
    let result = body(&mut run);
    run.finish(result)
}

fn load_data_stage(run: &mut Run, cfg: &ExperimentConfig) -> Result<Dataset> {
    run.stage("data", |run| {
        let ds = load_dataset(cfg)?;
        let dir = run.path("split");
        ds.split.write_manifest(&dir)?;
        log::info!(
            "{} train items, {} scored groups",
            ds.split.train.len(),
            ds.eval.num_groups()
        );
        Ok(ds)
    })
}

fn phase_one_stage(
    run: &mut Run,
    cfg: &ExperimentConfig,
    train: &Tensor,
    epochs: usize,
) -> Result<PhaseOneResult> {
    run.stage("phase_one", |run| {
        let log_path = run.path(LOSS_LOG);
        if log_path.exists() {
            fs::remove_file(&log_path).map_err(|e| Error::io(&log_path, e))?;
        }
        let mut hp = cfg.hyper_params();
        hp.phase1_epochs = epochs;
        let opts = PhaseOneOptions {
            checkpoint_dir: Some(run.path("checkpoints/phase1")),
            loss_log: Some(run.path(LOSS_LOG)),
        };
        let p1 = run_phase_one(&cfg.architecture()?, train, &hp, &opts)?;
        let gs: Vec<String> = p1.generator_paths.iter().map(|p| run.rel(p)).collect();
        let ds: Vec<String> = p1.discriminator_paths.iter().map(|p| run.rel(p)).collect();
        run.manifest.checkpoints.generator.extend(gs);
        run.manifest.checkpoints.discriminator.extend(ds);
        Ok(p1)
    })
}

fn g_old_stage(
    run: &mut Run,
    cfg: &ExperimentConfig,
    p1: &PhaseOneResult,
    epoch: usize,
) -> Result<ModelState> {
    run.stage("g_old", |run| {
        let g_old = build_g_old(&p1.generators, cfg.g_old(), epoch)?;
        let dir = run.path("checkpoints/g_old");
        checkpoint::save(&g_old, &dir)?;
        run.manifest.checkpoints.g_old = Some(run.rel(&dir));
        run.manifest
            .hashes
            .insert("g_old".into(), g_old.content_hash());
        Ok(g_old)
    })
}

/// Phase one, `G_old`, phase two (unless the variant is the baseline) and
/// evaluation of both the phase-one and the final discriminator.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    let ((), manifest) = with_run(out, "train", cfg, |run| {
        let ds = load_data_stage(run, cfg)?;
        let train = ds.train()?;
        let epochs = cfg.phase1_epochs;
        let p1 = phase_one_stage(run, cfg, &train, epochs)?;
        let g = p1.generator_at(epochs)?.clone();
        let d1 = p1.discriminator_at(epochs)?.clone();
        run.manifest
            .hashes
            .insert("generator".into(), g.content_hash());
        run.manifest
            .hashes
            .insert("phase_one_discriminator".into(), d1.content_hash());
        let g_old = g_old_stage(run, cfg, &p1, epochs)?;

        let final_d = match cfg.ablation_variant() {
            None => d1.clone(),
            Some(variant) => run.stage("phase_two", |run| {
                let opts = PhaseTwoOptions {
                    checkpoint_every: cfg.checkpoint_every,
                    checkpoint_dir: Some(run.path("checkpoints/phase2")),
                    loss_log: Some(run.path(LOSS_LOG)),
                };
                let p2 = run_phase_two(
                    &g,
                    &g_old,
                    &d1,
                    &train,
                    &cfg.hyper_params(),
                    &variant,
                    &opts,
                )?;
                let paths: Vec<String> = p2.checkpoint_paths.iter().map(|p| run.rel(p)).collect();
                run.manifest.checkpoints.discriminator.extend(paths);
                Ok(p2.discriminator)
            })?,
        };
        run.manifest
            .hashes
            .insert("final_discriminator".into(), final_d.content_hash());

        run.stage("evaluate", |run| {
            for (name, d) in [("baseline", &d1), ("final", &final_d)] {
                let dir = run.path(&format!("reports/{name}"));
                let report = write_evaluation(&g, d, &ds.eval, &dir)?;
                log::info!(
                    "{name}: auc {:.4} eer {:.4} f1 {:.4}",
                    report.auc,
                    report.eer,
                    report.f1_best
                );
                let rel = run.rel(&dir.join(REPORT_FILE));
                run.manifest.reports.push(rel);
            }
            Ok(())
        })
    })?;
    Ok(manifest)
}

/// Evaluates stored checkpoints on the config's protocol.
pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    out: &Path,
    generator: &Path,
    discriminator: &Path,
) -> Result<EvaluationReport> {
    for p in [generator, discriminator] {
        if !p.is_dir() {
            return Err(Error::arg(format!(
                "checkpoint {} does not exist",
                p.display()
            )));
        }
    }
    let (report, _) = with_run(out, "evaluate", cfg, |run| {
        let g = checkpoint::load(generator)?;
        let d = checkpoint::load(discriminator)?;
        run.manifest
            .hashes
            .insert("generator".into(), g.content_hash());
        run.manifest
            .hashes
            .insert("discriminator".into(), d.content_hash());
        let ds = load_data_stage(run, cfg)?;
        run.stage("evaluate", |run| {
            let dir = run.dir.clone();
            let report = write_evaluation(&g, &d, &ds.eval, &dir)?;
            run.manifest.reports.push(REPORT_FILE.into());
            Ok(report)
        })
    })?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationColumn {
    pub variant: AblationPreset,
    pub discriminator_hash: String,
    pub report: EvaluationReport,
}

/// One phase-one run shared by every ablation column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub generator_hash: String,
    pub g_old_hash: String,
    pub columns: Vec<AblationColumn>,
}

impl AblationTable {
    /// Metric rows by variant columns.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["metric".to_string()];
        header.extend(self.columns.iter().map(|c| c.variant.to_string()));
        w.write_record(&header)?;
        type Metric = (&'static str, fn(&EvaluationReport) -> f64);
        let metrics: [Metric; 3] = [
            ("auc", |r| r.auc),
            ("eer", |r| r.eer),
            ("f1_best", |r| r.f1_best),
        ];
        for (name, get) in metrics {
            let mut row = vec![name.to_string()];
            row.extend(self.columns.iter().map(|c| get(&c.report).to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Runs every ablation preset from the same phase-one artifacts.
pub fn cmd_ablation(cfg: &ExperimentConfig, out: &Path) -> Result<AblationTable> {
    let (table, _) = with_run(out, "ablation", cfg, |run| {
        let ds = load_data_stage(run, cfg)?;
        let train = ds.train()?;
        let epochs = cfg.phase1_epochs;
        let p1 = phase_one_stage(run, cfg, &train, epochs)?;
        let g = p1.generator_at(epochs)?.clone();
        let d1 = p1.discriminator_at(epochs)?.clone();
        let g_old = g_old_stage(run, cfg, &p1, epochs)?;
        let hp = cfg.hyper_params();
        let mut table = AblationTable {
            generator_hash: g.content_hash(),
            g_old_hash: g_old.content_hash(),
            columns: Vec::new(),
        };
        for preset in AblationPreset::ALL {
            let column = run.stage(&format!("ablation_{preset}"), |run| {
                let d = match preset.variant() {
                    None => d1.clone(),
                    Some(v) => {
                        let opts = PhaseTwoOptions {
                            checkpoint_every: cfg.checkpoint_every,
                            ..Default::default()
                        };
                        run_phase_two(&g, &g_old, &d1, &train, &hp, &v, &opts)?.discriminator
                    }
                };
                let ck = run.path(&format!("checkpoints/ablation/{preset}"));
                checkpoint::save(&d, &ck)?;
                let dir = run.path(&format!("reports/{preset}"));
                let report = write_evaluation(&g, &d, &ds.eval, &dir)?;
                log::info!("{preset}: auc {:.4}", report.auc);
                let rel = run.rel(&dir.join(REPORT_FILE));
                run.manifest.reports.push(rel);
                Ok(AblationColumn {
                    variant: preset,
                    discriminator_hash: d.content_hash(),
                    report,
                })
            })?;
            table.columns.push(column);
        }
        table.write_csv(&run.path(ABLATION_CSV))?;
        write_atomic(
            &run.path(ABLATION_JSON),
            &serde_json::to_string_pretty(&table)?,
        )?;
        run.manifest.reports.push(ABLATION_CSV.into());
        run.manifest.reports.push(ABLATION_JSON.into());
        run.manifest
            .hashes
            .insert("generator".into(), table.generator_hash.clone());
        Ok(table)
    })?;
    Ok(table)
}

/// Plot-ready form of a stability table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySeries {
    pub epochs: Vec<usize>,
    pub baseline_auc: Vec<f64>,
    pub final_auc: Vec<f64>,
    pub rows: Vec<StabilityRow>,
}

/// Phase one over `stability_epoch_end` epochs (at least), then a phase-two
/// run from every epoch in the stability range.
pub fn cmd_stability(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<StabilityRow>> {
    let variant = cfg
        .ablation_variant()
        .ok_or_else(|| Error::arg("the stability sweep needs a phase-two variant"))?;
    let (rows, _) = with_run(out, "stability", cfg, |run| {
        let ds = load_data_stage(run, cfg)?;
        let train = ds.train()?;
        let epochs = cfg.phase1_epochs.max(cfg.stability_epoch_end);
        let p1 = phase_one_stage(run, cfg, &train, epochs)?;
        let rows = run.stage("sweep", |_| {
            let opts = StabilityOptions {
                epochs: cfg.stability_epoch_start..=cfg.stability_epoch_end,
                checkpoint_every: cfg.checkpoint_every,
                variant,
                g_old: cfg.g_old(),
            };
            stability_sweep(&p1, &train, &ds.eval, &cfg.hyper_params(), &opts)
        })?;
        write_stability_csv(&rows, &run.path(STABILITY_CSV))?;
        let (baseline_auc, final_auc) = baseline_and_final(&rows);
        let series = StabilitySeries {
            epochs: (cfg.stability_epoch_start..=cfg.stability_epoch_end).collect(),
            baseline_auc,
            final_auc,
            rows: rows.clone(),
        };
        write_atomic(
            &run.path(STABILITY_SERIES),
            &serde_json::to_string_pretty(&series)?,
        )?;
        run.manifest.reports.push(STABILITY_CSV.into());
        run.manifest.reports.push(STABILITY_SERIES.into());
        Ok(rows)
    })?;
    Ok(rows)
}

/// Generator and `G_old` of a finished training run.
pub fn load_run_generators(run_dir: &Path) -> Result<(ExperimentConfig, ModelState, ModelState)> {
    let manifest = RunManifest::read(run_dir)?;
    let cfg = manifest.config;
    let g = checkpoint::load(&epoch_dir(
        &run_dir.join("checkpoints/phase1"),
        crate::model::ModelRole::Generator,
        cfg.phase1_epochs,
    ))?;
    let g_old_rel = manifest
        .checkpoints
        .g_old
        .ok_or_else(|| Error::arg(format!("{} has no G_old checkpoint", run_dir.display())))?;
    let g_old = checkpoint::load(&run_dir.join(g_old_rel))?;
    Ok((cfg, g, g_old))
}

/// Writes a PNG with one row per stage (`X`, `G(X)`, `G_old(X)`, the
/// pseudo-anomaly mix and its reconstruction) for `count` training images
/// of a finished run.
pub fn cmd_pseudo_preview(run_dir: &Path, out: &Path, count: usize) -> Result<PathBuf> {
    let (cfg, g, g_old) = load_run_generators(run_dir)?;
    let (path, _) = with_run(out, "pseudo_preview", &cfg, |run| {
        let ds = load_dataset(&cfg)?;
        let train = ds.train()?;
        let n = count
            .clamp(2, train.batch_size().max(2))
            .min(train.batch_size());
        let rows: Vec<usize> = (0..n).collect();
        let stages = super::preview::pseudo_stages(&g, &g_old, &train.select(&rows))?;
        let path = run.path(PREVIEW_PNG);
        super::preview::save_grid(&stages, &path)?;
        run.manifest.reports.push(PREVIEW_PNG.into());
        Ok(path)
    })?;
    Ok(path)
}

/// Phase-two checkpoint directory of a training run.
pub fn phase_two_checkpoint(run_dir: &Path, iteration: usize) -> PathBuf {
    iteration_dir(&run_dir.join("checkpoints/phase2"), iteration)
}
