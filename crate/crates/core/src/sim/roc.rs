//! Receiver operating characteristic over occupancy scores.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::env::Occupancy;

/// Target detection rate for the false-alarm summary.
pub const TARGET_TPR: f64 = 0.95;

#[derive(Clone, Debug, PartialEq)]
pub struct RocResult {
    /// Decision thresholds, decreasing; the first entry is `+inf` (nothing
    /// classified occupied). A point is called occupied when `score >= threshold`.
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    /// Trapezoidal area under the curve.
    pub auc: f64,
    /// Smallest false-positive rate reaching a detection rate of 0.95.
    pub fpr_at_tpr_095: f64,
}

/// Sweeps the threshold over the distinct scores, highest first.
pub fn roc<T: Scalar>(scores: &[T], labels: &[Occupancy]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    let scores: Vec<f64> = scores.iter().map(|s| s.to_f64_lossy()).collect();
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("score is NaN"));
    }
    let positives = labels.iter().filter(|&&l| l == Occupancy::Occupied).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedRoc(format!(
            "{positives} positive and {negatives} negative labels"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));

    let (p, n) = (positives as f64, negatives as f64);
    let mut thresholds = vec![f64::INFINITY];
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            match labels[order[i]] {
                Occupancy::Occupied => tp += 1,
                Occupancy::Free => fp += 1,
            }
            i += 1;
        }
        thresholds.push(s);
        tpr.push(tp as f64 / p);
        fpr.push(fp as f64 / n);
    }

    let auc = tpr
        .windows(2)
        .zip(fpr.windows(2))
        .map(|(t, f)| (f[1] - f[0]) * (t[0] + t[1]) * 0.5)
        .sum();
    let fpr_at_tpr_095 = tpr
        .iter()
        .zip(&fpr)
        .find(|(&t, _)| t >= TARGET_TPR)
        .map(|(_, &f)| f)
        .unwrap_or(1.0);
    Ok(RocResult {
        thresholds,
        tpr,
        fpr,
        auc,
        fpr_at_tpr_095,
    })
}

impl RocResult {
    /// CSV with header `threshold,tpr,fpr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,tpr,fpr\n");
        for ((t, tp), fp) in self.thresholds.iter().zip(&self.tpr).zip(&self.fpr) {
            out.push_str(&format!("{t},{tp},{fp}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Occupancy::{Free as N, Occupied as Y};

    #[test]
    fn perfect_separation() {
        let r = roc(&[0.9, 0.8, 0.2, 0.1], &[Y, Y, N, N]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.fpr_at_tpr_095, 0.0);
    }

    #[test]
    fn constant_scores_are_chance() {
        let r = roc(&[0.5; 6], &[Y, N, Y, N, N, Y]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.fpr_at_tpr_095, 1.0);
    }

    #[test]
    fn toy_set() {
        // pairs: (0.9>0.8) (0.9>0.1) (0.7<0.8) (0.7>0.1) -> 3/4
        let r = roc(&[0.9, 0.8, 0.7, 0.1], &[Y, N, Y, N]).unwrap();
        assert!((r.auc - 0.75).abs() < 1e-15);
        assert_eq!(r.thresholds.len(), 5);
        assert_eq!(r.fpr_at_tpr_095, 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(roc(&[0.1, 0.2], &[Y, Y]), Err(Error::UndefinedRoc(_))));
        assert!(roc(&[0.1], &[Y, N]).is_err());
        assert!(roc(&[f64::NAN, 0.2], &[Y, N]).is_err());
    }

    #[test]
    fn csv_header() {
        let r = roc(&[0.9f32, 0.1], &[Y, N]).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("threshold,tpr,fpr\ninf,0,0\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
