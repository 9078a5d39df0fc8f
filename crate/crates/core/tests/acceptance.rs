//! Acceptance run. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any gating criterion fails. Built without the libtest harness
//! so the report is never swallowed by output capture.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use advocc::batch::{Role, SampleBatch};
use advocc::data::{
    build_folder_protocol, build_mnist_protocol, build_video_protocol, load_videos, FolderOptions,
    MnistData, MnistOptions, MnistSplit, PatchConfig, DEFAULT_OUTLIER_CLASS,
};
use advocc::eval::{
    baseline_and_final, compute_auc, compute_eer, compute_f1_best, stability_sweep, std_dev,
    EvaluationReport, StabilityOptions,
};
use advocc::experiment::{cmd_ablation, load_dataset, parse_config, ExperimentConfig};
use advocc::model::{generator_forward, InputShape, ModelRole};
use advocc::trainer::{
    build_g_old, make_pseudo_anomaly, phase_one_discriminator_grads, phase_one_generator_grads,
    phase_two_grads, phase_two_loss_from_scores, run_phase_one, run_phase_two, AblationPreset,
    AblationVariant, PhaseOneOptions, PhaseTwoOptions, PhaseTwoStreams, LOG_EPS,
};
use advocc::{HyperParams, ModelState};
use common::{
    fd_check, oracle_auc, oracle_eer, oracle_f1, random_images, random_score_set, rng, toy_arch,
    toy_models, write_folder_dataset, write_video_dataset,
};
use rand::Rng;

const DESK_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    status: Status,
    detail: String,
}

impl Outcome {
    fn check(ok: bool, detail: impl Into<String>) -> Self {
        let status = if ok { Status::Pass } else { Status::Fail };
        Outcome {
            status,
            detail: detail.into(),
        }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Outcome {
            status: Status::Fail,
            detail: detail.into(),
        }
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    if took > limit && matches!(out.status, Status::Pass) {
        out.status = Status::Fail;
        out.detail
            .push_str(&format!("; over the {}s budget", limit.as_secs()));
    }
    out.detail
        .push_str(&format!(" ({:.1}s)", took.as_secs_f64()));
    out
}

fn repo_root() -> PathBuf {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    root.canonicalize().unwrap_or(root)
}

// ---- 1 ------------------------------------------------------------------------

fn metric_oracles() -> Outcome {
    let mut r = rng(2024);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let recs = random_score_set(&mut r);
        let got = (
            compute_auc(&recs),
            compute_eer(&recs),
            compute_f1_best(&recs),
        );
        let (Ok(auc), Ok((eer, te)), Ok((f1, tf))) = got else {
            return Outcome::fail(format!("set {k}: metric returned an error"));
        };
        let (oeer, ote) = oracle_eer(&recs);
        let (of1, otf) = oracle_f1(&recs);
        for d in [
            auc - oracle_auc(&recs),
            eer - oeer,
            te - ote,
            f1 - of1,
            tf - otf,
        ] {
            worst = worst.max(d.abs());
        }
    }
    Outcome::check(
        worst <= 1e-9,
        format!("1000 sets, max deviation {worst:.1e}"),
    )
}

// ---- 2 ------------------------------------------------------------------------

fn pseudo_anomaly() -> Outcome {
    let (g_old, _) = toy_models(40);
    let n = 50;
    let train = random_images(n, [1, 8, 8], 41);
    let mut r = rng(42);
    let pairs: Vec<(usize, usize)> = (0..100)
        .map(|_| {
            let i = r.random_range(0..n);
            (i, (i + r.random_range(1..n)) % n)
        })
        .collect();
    let xbar = match make_pseudo_anomaly(&g_old, &train, &pairs) {
        Ok(x) => x,
        Err(e) => return Outcome::fail(e.to_string()),
    };
    let low = generator_forward(&g_old, &SampleBatch::new(train, Role::RealX)).unwrap();
    let (mut worst, mut bounded) = (0.0f64, true);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let (a, b) = (low.images.item(i), low.images.item(j));
        for (p, &v) in xbar.images.item(k).iter().enumerate() {
            worst = worst.max((v - (a[p] + b[p]) / 2.0).abs());
            bounded &= v >= a[p].min(b[p]) && v <= a[p].max(b[p]);
        }
    }
    Outcome::check(
        worst <= 1e-12 && bounded,
        format!("100 pairs, max deviation {worst:.1e}, bounded: {bounded}"),
    )
}

// ---- 3 ------------------------------------------------------------------------

fn frozen_generators() -> Outcome {
    let train = random_images(32, [1, 8, 8], 50);
    let hp = HyperParams {
        phase1_epochs: 2,
        batch_size: 8,
        seed: 51,
        ..Default::default()
    };
    let p1 = run_phase_one(&toy_arch(), &train, &hp, &PhaseOneOptions::default()).unwrap();
    let (g, g_old, d) = (
        p1.generator_at(2).unwrap(),
        p1.generator_at(1).unwrap(),
        p1.discriminator_at(2).unwrap(),
    );
    let before = (g.content_hash(), g_old.content_hash());
    let run = run_phase_two(
        g,
        g_old,
        d,
        &train,
        &hp,
        &AblationVariant::FULL,
        &PhaseTwoOptions::default(),
    );
    let after = (g.content_hash(), g_old.content_hash());
    match run {
        Ok(run) => Outcome::check(
            before == after && run.losses.len() == 75 && run.checkpoints.len() == 16,
            format!(
                "{} iterations, {} checkpoints, generator {} -> {}",
                run.losses.len(),
                run.checkpoints.len(),
                &before.0[..12],
                &after.0[..12]
            ),
        ),
        Err(e) => Outcome::fail(e.to_string()),
    }
}

// ---- 4 ------------------------------------------------------------------------

fn gradient_checks() -> Outcome {
    let (g, d) = toy_models(60);
    let real = random_images(5, [1, 8, 8], 61);
    let noisy = random_images(5, [1, 8, 8], 62);
    let lambda = 0.2;
    let mut results = Vec::new();

    let (_, _, gg) = phase_one_generator_grads(&g, &d, &real, &noisy, lambda).unwrap();
    results.push((
        "phase-one G",
        fd_check(&g, &gg, 63, |g| {
            let (adv, recon, _) = phase_one_generator_grads(g, &d, &real, &noisy, lambda).unwrap();
            adv + lambda * recon
        }),
    ));

    let real_b = SampleBatch::new(real.clone(), Role::RealX);
    let recon = generator_forward(&g, &real_b).unwrap();
    let (_, dg) = phase_one_discriminator_grads(&d, &real_b, &recon).unwrap();
    results.push((
        "phase-one D",
        fd_check(&d, &dg, 64, |d| {
            phase_one_discriminator_grads(d, &real_b, &recon).unwrap().0
        }),
    ));

    let t = |k: u64| random_images(3, [1, 8, 8], 70 + k);
    let streams = PhaseTwoStreams {
        real: Some(SampleBatch::new(t(0), Role::RealX)),
        recon: Some(SampleBatch::new(t(1), Role::ReconXhat)),
        low: Some(SampleBatch::new(t(2), Role::LowXhat)),
        pseudo: Some(SampleBatch::new(t(3), Role::PseudoReconXpseudo)),
    };
    for (name, alpha, beta) in [
        ("phase-two default", 0.1, 0.001),
        ("phase-two 0.3/0.4", 0.3, 0.4),
    ] {
        let (_, grads) = phase_two_grads(&d, &streams, alpha, beta).unwrap();
        results.push((
            name,
            fd_check(&d, &grads, 65, |d| {
                phase_two_grads(d, &streams, alpha, beta).unwrap().0
            }),
        ));
    }

    let mut parts = Vec::new();
    let mut ok = true;
    for (name, r) in results {
        match r {
            Ok(worst) => parts.push(format!("{name} {worst:.1e}")),
            Err(e) => {
                ok = false;
                parts.push(format!("{name} FAILED {e}"));
            }
        }
    }
    let params = g.num_parameters().max(d.num_parameters());
    Outcome::check(
        ok,
        format!(
            "20 probes each, <= {params} params, worst rel err: {}",
            parts.join(", ")
        ),
    )
}

// ---- 5 ------------------------------------------------------------------------

fn hand_losses() -> Outcome {
    let d = ModelState::zeros("d", ModelRole::Discriminator, toy_arch()).unwrap();
    let t = |k: u64| random_images(4, [1, 8, 8], 80 + k);
    let streams = PhaseTwoStreams {
        real: Some(SampleBatch::new(t(0), Role::RealX)),
        recon: Some(SampleBatch::new(t(1), Role::ReconXhat)),
        low: Some(SampleBatch::new(t(2), Role::LowXhat)),
        pseudo: Some(SampleBatch::new(t(3), Role::PseudoReconXpseudo)),
    };
    let half = phase_two_grads(&d, &streams, 0.1, 0.001).unwrap().0;
    let target = 2.0 * std::f64::consts::LN_2;
    let perfect =
        phase_two_loss_from_scores(&[0.0; 4], &[0.0; 4], &[1.0; 4], &[1.0; 4], 0.1, 0.001);
    Outcome::check(
        (half - target).abs() <= 1e-6 && (0.0..=10.0 * LOG_EPS).contains(&perfect),
        format!("uniform 0.5 gives {half:.9} (target {target:.9}); perfect streams {perfect:.2e}"),
    )
}

// ---- 6 and 7 --------------------------------------------------------------------

struct DeskSeed {
    baseline: EvaluationReport,
    phase_two: EvaluationReport,
    sweep_baseline: Vec<f64>,
    sweep_final: Vec<f64>,
    desk_time: Duration,
    sweep_time: Duration,
}

fn desk_config() -> advocc::Result<ExperimentConfig> {
    let mut cfg = parse_config(&repo_root().join("configs/mnist_desk.json"))?;
    cfg.data_root = Some(repo_root().join("data"));
    Ok(cfg)
}

fn desk_seed(seed: u64) -> advocc::Result<DeskSeed> {
    let cfg = ExperimentConfig {
        seed,
        ..desk_config()?
    };
    let ds = load_dataset(&cfg)?;
    let train = ds.train()?;
    let hp = cfg.hyper_params();
    let epochs = cfg.phase1_epochs;

    let start = Instant::now();
    let p1 = run_phase_one(
        &cfg.architecture()?,
        &train,
        &hp,
        &PhaseOneOptions::default(),
    )?;
    let phase_one_time = start.elapsed();

    let start = Instant::now();
    let g = p1.generator_at(epochs)?;
    let d = p1.discriminator_at(epochs)?;
    let g_old = build_g_old(&p1.generators, cfg.g_old(), epochs)?;
    let variant = cfg.ablation_variant().expect("desk config runs phase two");
    let p2 = run_phase_two(
        g,
        &g_old,
        d,
        &train,
        &hp,
        &variant,
        &PhaseTwoOptions::default(),
    )?;
    let baseline = EvaluationReport::from_records(&ds.eval.score(g, d)?)?;
    let phase_two = EvaluationReport::from_records(&ds.eval.score(g, &p2.discriminator)?)?;
    let desk_time = phase_one_time + start.elapsed();

    let start = Instant::now();
    let opts = StabilityOptions {
        epochs: cfg.stability_epoch_start..=cfg.stability_epoch_end,
        checkpoint_every: cfg.checkpoint_every,
        variant,
        g_old: cfg.g_old(),
    };
    let rows = stability_sweep(&p1, &train, &ds.eval, &hp, &opts)?;
    let (sweep_baseline, sweep_final) = baseline_and_final(&rows);
    let sweep_time = phase_one_time + start.elapsed();

    Ok(DeskSeed {
        baseline,
        phase_two,
        sweep_baseline,
        sweep_final,
        desk_time,
        sweep_time,
    })
}

fn desk_runs() -> Result<Vec<DeskSeed>, String> {
    DESK_SEEDS
        .iter()
        .map(|&seed| {
            let r = desk_seed(seed).map_err(|e| format!("seed {seed}: {e}"))?;
            println!(
                "  seed {seed}: baseline auc {:.4} f1 {:.4} | phase two auc {:.4} f1 {:.4} | sweep std {:.4} -> {:.4}",
                r.baseline.auc,
                r.baseline.f1_best,
                r.phase_two.auc,
                r.phase_two.f1_best,
                std_dev(&r.sweep_baseline),
                std_dev(&r.sweep_final),
            );
            Ok(r)
        })
        .collect()
}

fn budget(mut outcome: Outcome, took: Duration, limit: Duration) -> Outcome {
    if took > limit && matches!(outcome.status, Status::Pass) {
        outcome.status = Status::Fail;
        outcome
            .detail
            .push_str(&format!("; over the {}s budget", limit.as_secs()));
    }
    outcome
        .detail
        .push_str(&format!(" ({:.0}s)", took.as_secs_f64()));
    outcome
}

fn desk_reproduction(runs: &[DeskSeed]) -> Outcome {
    let wins = runs
        .iter()
        .filter(|r| r.phase_two.f1_best >= r.baseline.f1_best && r.phase_two.auc >= r.baseline.auc)
        .count();
    let took: Duration = runs.iter().map(|r| r.desk_time).sum();
    budget(
        Outcome::check(
            wins >= 4,
            format!("phase two >= baseline on F1 and AUC in {wins}/5 seeds"),
        ),
        took,
        Duration::from_secs(30 * 60),
    )
}

fn desk_stability(runs: &[DeskSeed]) -> Outcome {
    let wins = runs
        .iter()
        .filter(|r| std_dev(&r.sweep_final) < std_dev(&r.sweep_baseline))
        .count();
    let took: Duration = runs.iter().map(|r| r.sweep_time).sum();
    budget(
        Outcome::check(
            wins >= 4,
            format!("final-AUC std below baseline std over epochs 10-20 in {wins}/5 seeds"),
        ),
        took,
        Duration::from_secs(60 * 60),
    )
}

// ---- 8 ------------------------------------------------------------------------

fn full_scale_video() -> Outcome {
    let Ok(mut cfg) = parse_config(&repo_root().join("configs/ped2.json")) else {
        return Outcome::fail("configs/ped2.json does not parse");
    };
    if cfg.data_root.is_none() && std::env::var_os(advocc::experiment::DATA_ROOT_ENV).is_none() {
        cfg.data_root = Some(repo_root().join("data"));
    }
    let root = cfg.data_root();
    if !root.join(&cfg.video_train_dir).is_dir() || !root.join(&cfg.video_test_dir).is_dir() {
        return Outcome {
            status: Status::Skip,
            detail: format!("dataset not available under {}", root.display()),
        };
    }
    let out = std::env::temp_dir().join(format!("advocc-acceptance-video-{}", std::process::id()));
    let table = match cmd_ablation(&cfg, &out) {
        Ok(t) => t,
        Err(e) => return Outcome::fail(e.to_string()),
    };
    let report = |p: AblationPreset| {
        &table
            .columns
            .iter()
            .find(|c| c.variant == p)
            .unwrap()
            .report
    };
    let full = report(AblationPreset::Full);
    let auc_ok = (full.auc * 100.0 - 98.1).abs() <= 2.0;
    let eer_ok = (full.eer * 100.0 - 7.0).abs() <= 3.0;
    let aucs: Vec<(AblationPreset, f64)> = table
        .columns
        .iter()
        .map(|c| (c.variant, c.report.auc))
        .collect();
    let best = aucs.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    let worst = aucs.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    let order_ok = best == AblationPreset::Full && worst == AblationPreset::RawMix;
    Outcome::check(
        auc_ok && eer_ok && order_ok,
        format!(
            "auc {:.1}%, eer {:.1}%, best {best}, worst {worst}; artifacts in {}",
            full.auc * 100.0,
            full.eer * 100.0,
            out.display()
        ),
    )
}

// ---- 9 ------------------------------------------------------------------------

fn protocol_determinism() -> Outcome {
    let mut problems = Vec::new();

    let mut r = rng(90);
    let mut split = |n: usize| MnistSplit {
        rows: 28,
        cols: 28,
        pixels: (0..n * 784).map(|_| r.random::<u8>()).collect(),
        labels: (0..n).map(|k| (k % 10) as u8).collect(),
        source: "synthetic".into(),
    };
    let mnist = MnistData {
        train: split(200),
        test: split(200),
    };
    for seed in [0, 1, 2] {
        let a = build_mnist_protocol(&mnist, 4, 0.2, seed, &MnistOptions::default());
        let b = build_mnist_protocol(&mnist, 4, 0.2, seed, &MnistOptions::default());
        if a.is_err() || a.ok() != b.ok() {
            problems.push(format!("mnist seed {seed}"));
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let folder = dir.path().join("folder");
    write_folder_dataset(
        &folder,
        &[
            ("001.a", 8),
            ("002.b", 6),
            ("003.c", 7),
            (DEFAULT_OUTLIER_CLASS, 40),
        ],
        91,
    );
    let opts = FolderOptions {
        max_per_class: 6,
        ..Default::default()
    };
    for n in 1..=3 {
        match (
            build_folder_protocol(&folder, n, 5, &opts),
            build_folder_protocol(&folder, n, 5, &opts),
        ) {
            (Ok(a), Ok(b)) => {
                if a != b {
                    problems.push(format!("folder n={n} differs"));
                }
                if 2 * a.num_outliers() != a.test.len() {
                    problems.push(format!(
                        "folder n={n}: {}/{} outliers",
                        a.num_outliers(),
                        a.test.len()
                    ));
                }
            }
            _ => problems.push(format!("folder n={n} errored")),
        }
    }

    let videos = dir.path().join("video");
    write_video_dataset(&videos, 2, 6, (60, 90), false, 92);
    let cfg = PatchConfig {
        size: 30,
        stride: 15,
        motion_threshold: 0.005,
    };
    let shape = InputShape::new(1, 16, 16);
    let build = || build_video_protocol(&load_videos(&videos)?, &cfg, shape, Some(25), 6);
    match (build(), build()) {
        (Ok(a), Ok(b)) if a == b => {}
        _ => problems.push("video".into()),
    }

    Outcome::check(
        problems.is_empty(),
        if problems.is_empty() {
            "mnist, folder (n = 1..3, 50% outliers) and video splits repeat exactly".to_string()
        } else {
            format!("problems: {}", problems.join(", "))
        },
    )
}

fn report(n: usize, name: &str, gating: bool, outcome: &Outcome) -> bool {
    let tag = match outcome.status {
        Status::Pass => "PASS",
        Status::Fail if gating => "FAIL",
        Status::Fail => "FAIL (not gating)",
        Status::Skip => "SKIP",
    };
    println!("criterion {n} [{tag}] {name}: {}", outcome.detail);
    !(gating && matches!(outcome.status, Status::Fail))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let quick: [Criterion; 5] = [
        (
            "metric oracle equivalence",
            Duration::from_secs(60),
            metric_oracles,
        ),
        (
            "pseudo-anomaly correctness",
            Duration::from_secs(10),
            pseudo_anomaly,
        ),
        (
            "frozen generators",
            Duration::from_secs(60),
            frozen_generators,
        ),
        ("gradient checks", Duration::from_secs(120), gradient_checks),
        (
            "hand-evaluated losses",
            Duration::from_secs(10),
            hand_losses,
        ),
    ];
    let mut ok = true;
    for (k, (name, limit, f)) in quick.into_iter().enumerate() {
        ok &= report(k + 1, name, true, &timed(limit, f));
    }

    let (six, seven) = match desk_runs() {
        Ok(runs) => (desk_reproduction(&runs), desk_stability(&runs)),
        Err(e) => (Outcome::fail(e.clone()), Outcome::fail(e)),
    };
    ok &= report(6, "desk-scale MNIST reproduction", true, &six);
    ok &= report(7, "stability over phase-one epochs", true, &seven);
    ok &= report(
        8,
        "full-scale video targets",
        false,
        &timed(Duration::MAX, full_scale_video),
    );
    ok &= report(
        9,
        "protocol determinism",
        true,
        &timed(Duration::from_secs(60), protocol_determinism),
    );

    if ok {
        println!("acceptance: all gating criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: gating failures above");
        ExitCode::FAILURE
    }
}
