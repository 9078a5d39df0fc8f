#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use advocc::data::{save_png, Image, FRAME_LABELS_FILE};
use advocc::eval::ScoreRecord;
use advocc::model::{InputShape, ModelRole, ParamMap};
use advocc::{ArchitectureSpec, Label, ModelState, Tensor};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small 1x8x8 networks, well under 5k parameters each.
pub fn toy_arch() -> ArchitectureSpec {
    ArchitectureSpec::standard(InputShape::new(1, 8, 8), &[4, 8], &[4, 8], 4).unwrap()
}

pub fn toy_models(seed: u64) -> (ModelState, ModelState) {
    let mut r = rng(seed);
    let g = ModelState::init("g", ModelRole::Generator, toy_arch(), &mut r).unwrap();
    let d = ModelState::init("d", ModelRole::Discriminator, toy_arch(), &mut r).unwrap();
    (g, d)
}

pub fn random_images(n: usize, shape: [usize; 3], seed: u64) -> Tensor {
    let mut r = rng(seed);
    let len = n * shape.iter().product::<usize>();
    let data = (0..len).map(|_| r.random::<f64>()).collect();
    Tensor::from_vec([n, shape[0], shape[1], shape[2]], data).unwrap()
}

pub fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

pub fn mnist_available() -> bool {
    mnist_dir().join("train-labels-idx1-ubyte.gz").is_file()
        || mnist_dir().join("train-labels-idx1-ubyte").is_file()
}

// ---- metric oracles -------------------------------------------------------

pub fn records(inliers: &[f64], outliers: &[f64]) -> Vec<ScoreRecord> {
    inliers
        .iter()
        .map(|&s| ScoreRecord::new("in", s, Label::Inlier))
        .chain(
            outliers
                .iter()
                .map(|&s| ScoreRecord::new("out", s, Label::Outlier)),
        )
        .collect()
}

/// Scores on a coarse grid so ties are common. Both classes non-empty.
pub fn random_score_set(r: &mut impl Rng) -> Vec<ScoreRecord> {
    let n = r.random_range(2..=200);
    let levels = r.random_range(2..=40);
    let n_out = r.random_range(1..n);
    let draw = |r: &mut dyn rand::RngCore| r.random_range(0..=levels) as f64 / levels as f64;
    let inl: Vec<f64> = (0..n - n_out).map(|_| draw(r)).collect();
    let out: Vec<f64> = (0..n_out).map(|_| draw(r)).collect();
    records(&inl, &out)
}

fn split_labels(recs: &[ScoreRecord]) -> (Vec<f64>, Vec<f64>) {
    let inl = recs
        .iter()
        .filter(|r| r.label == Label::Inlier)
        .map(|r| r.score)
        .collect();
    let out = recs
        .iter()
        .filter(|r| r.label == Label::Outlier)
        .map(|r| r.score)
        .collect();
    (inl, out)
}

/// Pair counting over every (outlier, inlier) pair, ties counting half.
pub fn oracle_auc(recs: &[ScoreRecord]) -> f64 {
    let (inl, out) = split_labels(recs);
    let mut wins = 0.0;
    for &o in &out {
        for &i in &inl {
            if o > i {
                wins += 1.0;
            } else if o == i {
                wins += 0.5;
            }
        }
    }
    wins / (inl.len() * out.len()) as f64
}

/// `(FPR, FNR)` when flagging every score `>= t`.
fn rates(inl: &[f64], out: &[f64], t: f64) -> (f64, f64) {
    let fp = inl.iter().filter(|&&s| s >= t).count() as f64;
    let missed = out.iter().filter(|&&s| s < t).count() as f64;
    (fp / inl.len() as f64, missed / out.len() as f64)
}

/// Threshold sweep from `+inf` down through every distinct score, counting
/// from scratch at each step.
pub fn oracle_eer(recs: &[ScoreRecord]) -> (f64, f64) {
    let (inl, out) = split_labels(recs);
    let mut thresholds: Vec<f64> = recs.iter().map(|r| r.score).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut prev = rates(&inl, &out, f64::INFINITY);
    for t in thresholds {
        let cur = rates(&inl, &out, t);
        if cur.0 >= cur.1 {
            // Intersect the segment prev -> cur with the line FPR = FNR.
            let (a, b) = (prev.0 - prev.1, cur.0 - cur.1);
            let w = a / (a - b);
            return (prev.0 + w * (cur.0 - prev.0), t);
        }
        prev = cur;
    }
    panic!("sweep never crossed");
}

pub fn f1_at(inl: &[f64], out: &[f64], t: f64) -> f64 {
    let tp = out.iter().filter(|&&s| s >= t).count() as f64;
    let fp = inl.iter().filter(|&&s| s >= t).count() as f64;
    let fn_ = out.len() as f64 - tp;
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

/// Exhaustive F1 over the minimum, all midpoints and max + 1, ascending,
/// keeping the first (lowest) threshold among equal maxima.
pub fn oracle_f1(recs: &[ScoreRecord]) -> (f64, f64) {
    let (inl, out) = split_labels(recs);
    let mut s: Vec<f64> = recs.iter().map(|r| r.score).collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    let mut cands = vec![s[0]];
    cands.extend(s.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    cands.push(s[s.len() - 1] + 1.0);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for t in cands {
        let f = f1_at(&inl, &out, t);
        if f > best.0 {
            best = (f, t);
        }
    }
    best
}

// ---- synthetic datasets -----------------------------------------------------

fn noise_image(r: &mut impl Rng, h: usize, w: usize, channels: usize) -> Image {
    let data = (0..channels * h * w).map(|_| r.random::<f64>()).collect();
    Image::new(channels, h, w, data).unwrap()
}

/// `root/<class>/<k>.png` for every class, plus an outlier directory.
pub fn write_folder_dataset(root: &Path, classes: &[(&str, usize)], seed: u64) {
    let mut r = rng(seed);
    for &(class, count) in classes {
        let dir = root.join(class);
        fs::create_dir_all(&dir).unwrap();
        for k in 0..count {
            let (h, w) = (r.random_range(20..48), r.random_range(20..48));
            let channels = if k % 2 == 0 { 3 } else { 1 };
            save_png(
                &noise_image(&mut r, h, w, channels),
                &dir.join(format!("{k:03}.png")),
            )
            .unwrap();
        }
    }
}

/// Videos of `frames` grayscale frames each. When `labels` is set, a frame
/// label file is written with every third frame abnormal.
pub fn write_video_dataset(
    root: &Path,
    videos: usize,
    frames: usize,
    size: (usize, usize),
    labels: bool,
    seed: u64,
) {
    let mut r = rng(seed);
    for v in 0..videos {
        let dir = root.join(format!("video{v:02}"));
        fs::create_dir_all(&dir).unwrap();
        let base = noise_image(&mut r, size.0, size.1, 1);
        for f in 0..frames {
            let mut img = base.clone();
            // A bright square drifting to the right produces motion.
            let x0 = (f * 3) % (size.1 - 10);
            for y in 5..15 {
                for x in x0..x0 + 10 {
                    img.data[y * size.1 + x] = 1.0;
                }
            }
            save_png(&img, &dir.join(format!("{f:03}.png"))).unwrap();
        }
        if labels {
            let text: Vec<&str> = (0..frames)
                .map(|f| if f % 3 == 2 { "1" } else { "0" })
                .collect();
            fs::write(dir.join(FRAME_LABELS_FILE), text.join("\n")).unwrap();
        }
    }
}

/// Raw IDX files for a tiny MNIST look-alike: each digit is a bright
/// horizontal bar at a digit-specific row, plus noise.
pub fn write_idx_dataset(dir: &Path, n_train: usize, n_test: usize, seed: u64) {
    fs::create_dir_all(dir).unwrap();
    let mut r = rng(seed);
    let mut write = |stem: &str, n: usize| {
        let labels: Vec<u8> = (0..n).map(|k| (k % 10) as u8).collect();
        let mut img = Vec::with_capacity(16 + n * 784);
        for v in [0x0803u32, n as u32, 28, 28] {
            img.extend(v.to_be_bytes());
        }
        for &l in &labels {
            for y in 0..28 {
                for _ in 0..28 {
                    let bar = y / 2 == 2 + l as usize;
                    img.push(if bar { 230 } else { r.random_range(0..40) });
                }
            }
        }
        let mut lab = Vec::with_capacity(8 + n);
        for v in [0x0801u32, n as u32] {
            lab.extend(v.to_be_bytes());
        }
        lab.extend(&labels);
        fs::write(dir.join(format!("{stem}-images-idx3-ubyte")), img).unwrap();
        fs::write(dir.join(format!("{stem}-labels-idx1-ubyte")), lab).unwrap();
    };
    write("train", n_train);
    write("t10k", n_test);
}

// ---- finite differences -----------------------------------------------------

pub const FD_PROBES: usize = 20;
pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-4;

fn grad_at(grads: &ParamMap, mut index: usize) -> f64 {
    for p in grads.values() {
        if index < p.data.len() {
            return p.data[index];
        }
        index -= p.data.len();
    }
    panic!("index out of range");
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    // Gradients that are numerically zero are compared absolutely.
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central differences of `loss` at `FD_PROBES` random parameters of
/// `model`, against the analytic `grads`. Returns the worst relative error.
/// A probe whose one-sided differences disagree straddles an activation
/// kink, where no derivative exists; it is replaced by a fresh draw.
pub fn fd_check(
    model: &ModelState,
    grads: &ParamMap,
    seed: u64,
    loss: impl Fn(&ModelState) -> f64,
) -> Result<f64, String> {
    if model.num_parameters() > 5000 {
        return Err(format!(
            "{} parameters is not a toy model",
            model.num_parameters()
        ));
    }
    let mut r = rng(seed);
    let base = loss(model);
    let (mut checked, mut kinks, mut worst) = (0, 0, 0.0f64);
    while checked < FD_PROBES {
        let k = r.random_range(0..model.num_parameters());
        let mut plus = model.clone();
        *plus.scalar_mut(k).unwrap() += FD_STEP;
        let mut minus = model.clone();
        *minus.scalar_mut(k).unwrap() -= FD_STEP;
        let (lp, lm) = (loss(&plus), loss(&minus));
        if relative_error((lp - base) / FD_STEP, (base - lm) / FD_STEP) > 1e-3 {
            kinks += 1;
            if kinks > FD_PROBES {
                return Err("too many probes on kinks".into());
            }
            continue;
        }
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        let analytic = grad_at(grads, k);
        let err = relative_error(analytic, numeric);
        if err > FD_TOL {
            return Err(format!(
                "param {k}: analytic {analytic:e}, numeric {numeric:e}, rel {err:e}"
            ));
        }
        worst = worst.max(err);
        checked += 1;
    }
    Ok(worst)
}
