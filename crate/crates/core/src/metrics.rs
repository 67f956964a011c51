//! Ranking and classification metrics. Scores are anomaly scores: higher
//! means more anomalous. Labels are `true` for anomalies.

use crate::error::{Error, Result};

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("score {i} is not finite")));
    }
    Ok(())
}

/// Indices sorted by descending score, ties kept in input order.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Probability that a random anomaly outscores a random normal point, ties
/// counting one half.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("auc_roc needs both classes"));
    }
    // Sweep groups of tied scores from the top; each anomaly in a group beats
    // every normal below the group and ties with the normals inside it.
    let order = descending(scores);
    let mut wins = 0.0;
    let mut normals_above = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut n) = (0usize, 0usize);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        let normals_below = neg - normals_above - n;
        wins += p as f64 * (normals_below as f64 + 0.5 * n as f64);
        normals_above += n;
        i = j;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Area under the precision-recall curve traced by lowering the threshold
/// through each distinct score.
///
/// Consecutive operating points are joined linearly; the curve starts at
/// recall 0 with the precision of the first threshold. A constant score
/// vector therefore yields the prevalence.
pub fn auc_pr(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return Err(Error::UndefinedMetric("auc_pr needs at least one anomaly"));
    }
    let order = descending(scores);
    let mut points: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64));
    }
    let mut area = 0.0;
    let mut prev = (0.0, points[0].1);
    for &(r, p) in &points {
        area += (r - prev.0) * (p + prev.1) / 2.0;
        prev = (r, p);
    }
    Ok(area)
}

/// Support-weighted mean of the per-class F1 scores.
pub fn f1_score(predicted: &[bool], truth: &[bool]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("f1 labels"));
    }
    let n = truth.len() as f64;
    let mut total = 0.0;
    for class in [false, true] {
        let support = truth.iter().filter(|&&t| t == class).count();
        let predicted_count = predicted.iter().filter(|&&p| p == class).count();
        let tp = predicted
            .iter()
            .zip(truth)
            .filter(|&(&p, &t)| p == class && t == class)
            .count();
        let f1 = if tp == 0 {
            0.0
        } else {
            let precision = tp as f64 / predicted_count as f64;
            let recall = tp as f64 / support as f64;
            2.0 * precision * recall / (precision + recall)
        };
        total += support as f64 / n * f1;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roc_examples() {
        assert_eq!(
            auc_roc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap(),
            1.0
        );
        assert_eq!(auc_roc(&[0.2, 0.9], &[true, false]).unwrap(), 0.0);
        assert_eq!(
            auc_roc(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap(),
            0.75
        );
        assert_eq!(auc_roc(&[1.0, 1.0], &[true, false]).unwrap(), 0.5);
        assert!(auc_roc(&[1.0, 2.0], &[true, true]).is_err());
        assert!(auc_roc(&[1.0], &[true, false]).is_err());
    }

    #[test]
    fn pr_examples() {
        assert_eq!(
            auc_pr(&[3.0, 2.0, 1.0], &[true, false, false]).unwrap(),
            1.0
        );
        let prevalence = auc_pr(&[0.5; 5], &[true, false, false, true, false]).unwrap();
        assert!((prevalence - 0.4).abs() < 1e-15);
        let v = auc_pr(&[4.0, 3.0, 2.0, 1.0], &[true, false, true, false]).unwrap();
        assert!((v - 19.0 / 24.0).abs() < 1e-15, "{v}");
        assert!(auc_pr(&[1.0], &[false]).is_err());
    }

    #[test]
    fn f1_examples() {
        let truth = [true, false, false, true];
        assert_eq!(f1_score(&truth, &truth).unwrap(), 1.0);
        let inverted: Vec<bool> = truth.iter().map(|t| !t).collect();
        assert_eq!(f1_score(&inverted, &truth).unwrap(), 0.0);
        let mut t = vec![false; 90];
        t.extend(vec![true; 10]);
        let f = f1_score(&[false; 100], &t).unwrap();
        assert!((f - 0.9 * (2.0 * 0.9 / 1.9)).abs() < 1e-12);
        assert!(f1_score(&[true], &[true, false]).is_err());
    }
}
