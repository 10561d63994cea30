//! Classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::input("metric over an empty set"));
    }
    if a != b {
        return Err(Error::Shape(format!("{a} predictions for {b} labels")));
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> Result<f64> {
    check_aligned(pred.len(), labels.len())?;
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Ranks starting at 1 with ties given their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 averaged.
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve via the rank-sum statistic.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_aligned(scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Counts `[[tn, fp], [fn, tp]]` style entries as `(tp, tn, fp, fn)`.
fn binary_counts(pred: &[usize], labels: &[usize]) -> (f64, f64, f64, f64) {
    let (mut tp, mut tn, mut fp, mut fnn) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &l) in pred.iter().zip(labels) {
        match (p > 0, l > 0) {
            (true, true) => tp += 1.0,
            (false, false) => tn += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fnn += 1.0,
        }
    }
    (tp, tn, fp, fnn)
}

/// F1 of the positive class.
pub fn f1_binary(pred: &[usize], labels: &[usize]) -> Result<f64> {
    check_aligned(pred.len(), labels.len())?;
    let (tp, _, fp, fnn) = binary_counts(pred, labels);
    if tp + fp + fnn == 0.0 {
        return Err(Error::UndefinedMetric("F1 with no positive labels or predictions".into()));
    }
    Ok(2.0 * tp / (2.0 * tp + fp + fnn))
}

pub fn mcc_binary(pred: &[usize], labels: &[usize]) -> Result<f64> {
    check_aligned(pred.len(), labels.len())?;
    let (tp, tn, fp, fnn) = binary_counts(pred, labels);
    let denom = (tp + fp) * (tp + fnn) * (tn + fp) * (tn + fnn);
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("MCC with an empty confusion margin".into()));
    }
    Ok((tp * tn - fp * fnn) / denom.sqrt())
}

/// `k x k` counts indexed `[true][predicted]`.
pub fn confusion_matrix(pred: &[usize], labels: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    check_aligned(pred.len(), labels.len())?;
    let mut m = vec![vec![0usize; k]; k];
    for (&p, &l) in pred.iter().zip(labels) {
        if p >= k || l >= k {
            return Err(Error::input(format!("class index outside 0..{k}")));
        }
        m[l][p] += 1;
    }
    Ok(m)
}

/// Divides each nonempty row by its sum; empty rows stay zero.
pub fn row_normalize(m: &[Vec<usize>]) -> Vec<Vec<f64>> {
    m.iter()
        .map(|row| {
            let s: usize = row.iter().sum();
            row.iter().map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 }).collect()
        })
        .collect()
}

/// Support-weighted mean of the per-class F1 scores. Classes with support
/// but no correct or predicted members contribute F1 = 0.
pub fn weighted_f1(pred: &[usize], labels: &[usize], k: usize) -> Result<f64> {
    let m = confusion_matrix(pred, labels, k)?;
    let n = pred.len() as f64;
    let mut total = 0.0;
    for c in 0..k {
        let support: usize = m[c].iter().sum();
        if support == 0 {
            continue;
        }
        let tp = m[c][c] as f64;
        let predicted: usize = (0..k).map(|r| m[r][c]).sum();
        let f1 = 2.0 * tp / (support as f64 + predicted as f64);
        total += support as f64 / n * f1;
    }
    Ok(total)
}

/// Multiclass (Gorodkin) MCC; reduces to the binary formula for k = 2.
pub fn mcc_multiclass(pred: &[usize], labels: &[usize], k: usize) -> Result<f64> {
    let m = confusion_matrix(pred, labels, k)?;
    let s = pred.len() as f64;
    let c: f64 = (0..k).map(|i| m[i][i] as f64).sum();
    let t: Vec<f64> = (0..k).map(|i| m[i].iter().sum::<usize>() as f64).collect();
    let p: Vec<f64> = (0..k).map(|j| (0..k).map(|i| m[i][j]).sum::<usize>() as f64).collect();
    let tp: f64 = t.iter().zip(&p).map(|(a, b)| a * b).sum();
    let denom = (s * s - p.iter().map(|x| x * x).sum::<f64>()) * (s * s - t.iter().map(|x| x * x).sum::<f64>());
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("MCC with a single predicted or true class".into()));
    }
    Ok((c * s - tp) / denom.sqrt())
}

/// Thresholded scores at `> threshold`.
pub fn threshold(scores: &[f64], threshold: f64) -> Vec<usize> {
    scores.iter().map(|&s| usize::from(s > threshold)).collect()
}

/// The headline scores of one evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub acc: Option<f64>,
    pub auc: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
}

impl Scores {
    /// Binary scores from probabilities (decision threshold 0.5).
    pub fn binary(probs: &[f64], labels: &[usize]) -> Result<Scores> {
        let pred = threshold(probs, 0.5);
        let truth: Vec<bool> = labels.iter().map(|&l| l > 0).collect();
        Ok(Scores {
            acc: Some(accuracy(&pred, labels)?),
            auc: Some(auc(probs, &truth)?),
            f1: Some(f1_binary(&pred, labels)?),
            mcc: Some(mcc_binary(&pred, labels)?),
        })
    }

    pub fn multiclass(pred: &[usize], labels: &[usize], k: usize) -> Result<Scores> {
        Ok(Scores {
            acc: Some(accuracy(pred, labels)?),
            auc: None,
            f1: Some(weighted_f1(pred, labels, k)?),
            mcc: Some(mcc_multiclass(pred, labels, k)?),
        })
    }

    /// Field-wise mean over folds; a field is kept only if every fold has it.
    pub fn mean(folds: &[Scores]) -> Scores {
        let avg = |f: fn(&Scores) -> Option<f64>| -> Option<f64> {
            let v: Option<Vec<f64>> = folds.iter().map(f).collect();
            v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
        };
        Scores { acc: avg(|s| s.acc), auc: avg(|s| s.auc), f1: avg(|s| s.f1), mcc: avg(|s| s.mcc) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.3], &[true, false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        let mcc = mcc_binary(&[1, 0, 1, 1], &[1, 0, 0, 1]).unwrap();
        assert!((mcc - 2.0 / 12f64.sqrt()).abs() < 1e-15);
        assert!((mcc - 0.577).abs() < 1e-3);
        let perfect = [1, 0, 1, 0];
        assert_eq!(f1_binary(&perfect, &perfect).unwrap(), 1.0);
        assert_eq!(mcc_binary(&perfect, &perfect).unwrap(), 1.0);
        assert_eq!(accuracy(&perfect, &perfect).unwrap(), 1.0);
    }

    #[test]
    fn undefined_cases() {
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(mcc_binary(&[0, 0], &[0, 0]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(f1_binary(&[0, 0], &[0, 0]), Err(Error::UndefinedMetric(_))));
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn multiclass_reduces_to_binary() {
        let p = [1, 0, 1, 1, 0, 0, 1];
        let l = [1, 0, 0, 1, 1, 0, 1];
        assert!((mcc_multiclass(&p, &l, 2).unwrap() - mcc_binary(&p, &l).unwrap()).abs() < 1e-12);
        assert_eq!(weighted_f1(&l, &l, 3).unwrap(), 1.0);
    }

    #[test]
    fn confusion_rows() {
        let m = confusion_matrix(&[0, 1, 1, 2], &[0, 1, 2, 2], 3).unwrap();
        let n = row_normalize(&m);
        assert_eq!(n[2], vec![0.0, 0.5, 0.5]);
        for row in &n {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
