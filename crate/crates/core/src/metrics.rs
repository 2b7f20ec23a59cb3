//! ROC curves and AUC.
//!
//! Two independent routes: [`roc_curve`] sweeps thresholds and integrates by
//! trapezoid; [`auc_pairwise`] counts correctly-ordered positive/negative
//! pairs (the Mann-Whitney U statistic, ties half-credited). They must agree
//! to 1e-12 and cross-check each other.

use thiserror::Error;

/// ROC curve points plus AUC for one experiment cell.
///
/// `thresholds` is descending with a leading +infinity sentinel; a sample is
/// predicted positive at a threshold when `score >= threshold`, so the curve
/// runs from (0,0) to (1,1).
#[derive(Debug, Clone)]
pub struct RocResult {
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("AUC undefined: labels contain a single class")]
    SingleClass,
    #[error("scores and labels lengths differ: {scores} vs {labels}")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite score at index {index}")]
    NonFiniteScore { index: usize },
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore { index });
    }
    let n_pos = labels.iter().filter(|&&l| l != 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    Ok((n_pos, n_neg))
}

/// ROC curve by descending threshold sweep, AUC by trapezoid.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocResult, MetricsError> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));

    let mut thresholds = vec![f64::INFINITY];
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    let mut tp = 0usize;
    let mut fp = 0usize;

    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        // consume the whole tie group so tied scores form one curve segment
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(s);
        tpr.push(tp as f64 / n_pos as f64);
        fpr.push(fp as f64 / n_neg as f64);
    }

    let mut auc = 0.0;
    for k in 1..tpr.len() {
        auc += (fpr[k] - fpr[k - 1]) * (tpr[k] + tpr[k - 1]) / 2.0;
    }

    Ok(RocResult { thresholds, tpr, fpr, auc, n_pos, n_neg })
}

/// AUC as the Mann-Whitney U statistic: the fraction of positive/negative
/// pairs ranked correctly, ties worth one half. Quadratic on purpose; this
/// is the oracle for [`roc_curve`], not a fast path.
pub fn auc_pairwise(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    let mut credit = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] == 0 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            if si > sj {
                credit += 1.0;
            } else if si == sj {
                credit += 0.5;
            }
        }
    }
    Ok(credit / (n_pos as f64 * n_neg as f64))
}

/// CSV dump `threshold,fpr,tpr` (the sentinel threshold prints as `inf`).
pub fn roc_csv_string(roc: &RocResult) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for k in 0..roc.thresholds.len() {
        out.push_str(&format!("{},{},{}\n", roc.thresholds[k], roc.fpr[k], roc.tpr[k]));
    }
    out
}
