//! Multi-class matching metrics from a confusion matrix.
//!
//! Macro averages always divide by the class count: a class absent
//! from the predictions contributes precision 0 and a class absent
//! from the truth contributes recall 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accuracy and macro-averaged precision/recall/F1 with the underlying
/// counts. `confusion[t][p]` counts samples of true class `t`
/// predicted as `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<usize>>,
    pub z: usize,
    pub total: usize,
}

pub fn metrics(predicted: &[usize], truth: &[usize], z: usize) -> Result<MetricReport> {
    if predicted.len() != truth.len() {
        return Err(Error::Input(format!(
            "{} predictions against {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Input("no samples".into()));
    }
    if z < 2 {
        return Err(Error::Config(format!("class count {z} < 2")));
    }
    let mut confusion = vec![vec![0usize; z]; z];
    for (p, t) in predicted.iter().zip(truth) {
        if *p >= z || *t >= z {
            return Err(Error::Label(format!(
                "label out of range: predicted {p}, true {t}, z {z}"
            )));
        }
        confusion[*t][*p] += 1;
    }
    let total = predicted.len();
    let correct: usize = (0..z).map(|k| confusion[k][k]).sum();

    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    for k in 0..z {
        let tp = confusion[k][k] as f64;
        let predicted_k: usize = (0..z).map(|t| confusion[t][k]).sum();
        let actual_k: usize = confusion[k].iter().sum();
        let precision = if predicted_k == 0 {
            0.0
        } else {
            tp / predicted_k as f64
        };
        let recall = if actual_k == 0 { 0.0 } else { tp / actual_k as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        precision_sum += precision;
        recall_sum += recall;
        f1_sum += f1;
    }

    Ok(MetricReport {
        accuracy: correct as f64 / total as f64,
        macro_precision: precision_sum / z as f64,
        macro_recall: recall_sum / z as f64,
        macro_f1: f1_sum / z as f64,
        confusion,
        z,
        total,
    })
}
