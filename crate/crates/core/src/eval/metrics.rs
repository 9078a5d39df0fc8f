//! Threshold-free and threshold-optimal detection metrics. Outliers are the
//! positive class and an item is flagged when its score is at or above the
//! threshold.

use crate::batch::Label;
use crate::error::{Error, Result};

use super::ScoreRecord;

/// `(score, is_outlier)` ascending, then the outlier and inlier counts.
type Sorted = (Vec<(f64, bool)>, usize, usize);

/// Scores sorted ascending with their labels, after input checks.
fn sorted(records: &[ScoreRecord]) -> Result<Sorted> {
    let mut v = Vec::with_capacity(records.len());
    for r in records {
        if !r.score.is_finite() {
            return Err(Error::Numeric(format!(
                "score of {} is {}",
                r.item_id, r.score
            )));
        }
        v.push((r.score, r.label == Label::Outlier));
    }
    let pos = v.iter().filter(|x| x.1).count();
    let neg = v.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::arg(format!(
            "metrics need both labels ({neg} inliers, {pos} outliers)"
        )));
    }
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok((v, pos, neg))
}

/// Runs of equal scores in an ascending list: `(score, inliers, outliers)`.
fn tie_groups(sorted: &[(f64, bool)]) -> Vec<(f64, usize, usize)> {
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for &(s, out) in sorted {
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                if out {
                    g.2 += 1
                } else {
                    g.1 += 1
                }
            }
            _ => groups.push((s, usize::from(!out), usize::from(out))),
        }
    }
    groups
}

/// Probability that an outlier outscores an inlier, ties counting half
/// (Mann-Whitney statistic with midranks).
pub fn compute_auc(records: &[ScoreRecord]) -> Result<f64> {
    let (v, pos, neg) = sorted(records)?;
    // Count, for every outlier, inliers strictly below plus half the tied ones.
    let mut below = 0usize;
    let mut twice_u = 0u128;
    for (_, n_in, n_out) in tie_groups(&v) {
        twice_u += n_out as u128 * (2 * below + n_in) as u128;
        below += n_in;
    }
    Ok(twice_u as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Equal error rate and the threshold at which it is reached.
///
/// Operating points are visited from threshold `+inf` (FPR 0, FNR 1) down
/// through every distinct score. The first point with FPR ≥ FNR and its
/// predecessor bracket the crossing; the EER is the linear interpolation of
/// the two points to where FPR = FNR, and the returned threshold is the
/// bracketing point's score.
pub fn compute_eer(records: &[ScoreRecord]) -> Result<(f64, f64)> {
    let (v, pos, neg) = sorted(records)?;
    let rates = |fp: usize, tp: usize| (fp as f64 / neg as f64, (pos - tp) as f64 / pos as f64);
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut prev = rates(0, 0);
    for &(s, n_in, n_out) in tie_groups(&v).iter().rev() {
        fp += n_in;
        tp += n_out;
        let cur = rates(fp, tp);
        // FPR >= FNR, decided exactly in integers.
        if fp * pos >= (pos - tp) * neg {
            let (d_prev, d_cur) = (prev.0 - prev.1, cur.0 - cur.1);
            let t = if d_cur == d_prev {
                1.0
            } else {
                -d_prev / (d_cur - d_prev)
            };
            return Ok((prev.0 + t * (cur.0 - prev.0), s));
        }
        prev = cur;
    }
    unreachable!("the lowest threshold has FPR 1 and FNR 0")
}

/// Best F1 over thresholds at the minimum score, every midpoint between
/// consecutive distinct scores and one above the maximum. Ties go to the
/// lowest threshold.
pub fn compute_f1_best(records: &[ScoreRecord]) -> Result<(f64, f64)> {
    let (v, pos, _) = sorted(records)?;
    let groups = tie_groups(&v);
    // Ascending thresholds: everything at or above the current group is
    // flagged.
    let (mut fp, mut tp) = (v.len() - pos, pos);
    let f1 = |tp: usize, fp: usize| {
        if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + (pos - tp)) as f64
        }
    };
    let mut best = (f1(tp, fp), groups[0].0);
    for k in 1..=groups.len() {
        fp -= groups[k - 1].1;
        tp -= groups[k - 1].2;
        let t = match groups.get(k) {
            Some(g) => groups[k - 1].0 + (g.0 - groups[k - 1].0) / 2.0,
            None => groups[k - 1].0 + 1.0,
        };
        let f = f1(tp, fp);
        if f > best.0 {
            best = (f, t);
        }
    }
    Ok(best)
}
