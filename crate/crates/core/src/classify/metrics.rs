use serde::{Deserialize, Serialize};

use super::{ClassifyError, Dataset, LrModel, Split};
use crate::model::Task;

/// One operating point of a one-vs-rest precision/recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub classes: Vec<String>,
    pub n_test: usize,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub weighted_precision: f64,
    pub precision: Vec<f64>,
    /// Classes never predicted; their precision is reported as 0.
    pub precision_undefined: Vec<bool>,
    pub recall: Vec<f64>,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<usize>>,
    pub pr_curves: Vec<Vec<PrPoint>>,
}

/// Precision/recall at every distinct score, highest threshold first.
pub fn pr_curve(scores: &[f64], positive: &[bool]) -> Vec<PrPoint> {
    let total_pos = positive.iter().filter(|&&p| p).count();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut out = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    for (rank, &i) in order.iter().enumerate() {
        seen += 1;
        if positive[i] {
            tp += 1;
        }
        let last_of_tie = order.get(rank + 1).map_or(true, |&j| scores[j] != scores[i]);
        if last_of_tie {
            out.push(PrPoint {
                threshold: scores[i],
                recall: if total_pos == 0 { 0.0 } else { tp as f64 / total_pos as f64 },
                precision: tp as f64 / seen as f64,
            });
        }
    }
    out
}

/// Report from true and predicted class indices plus per-class probabilities.
pub fn evaluate_predictions(task: Task, truth: &[usize], predicted: &[usize], probabilities: &[Vec<f64>]) -> EvalReport {
    let k = task.n_classes();
    let mut confusion = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[t][p] += 1;
    }
    let n = truth.len();
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    let support: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
    let predicted_count: Vec<usize> = (0..k).map(|c| confusion.iter().map(|row| row[c]).sum()).collect();
    let precision: Vec<f64> = (0..k)
        .map(|c| if predicted_count[c] == 0 { 0.0 } else { confusion[c][c] as f64 / predicted_count[c] as f64 })
        .collect();
    let recall: Vec<f64> =
        (0..k).map(|c| if support[c] == 0 { 0.0 } else { confusion[c][c] as f64 / support[c] as f64 }).collect();
    let weighted_precision = if n == 0 {
        0.0
    } else {
        (0..k).map(|c| precision[c] * support[c] as f64).sum::<f64>() / n as f64
    };
    let pr_curves = (0..k)
        .map(|c| {
            let scores: Vec<f64> = probabilities.iter().map(|p| p[c]).collect();
            let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
            pr_curve(&scores, &positive)
        })
        .collect();
    EvalReport {
        task,
        classes: task.labels().iter().map(|l| l.name().to_string()).collect(),
        n_test: n,
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        macro_precision: precision.iter().sum::<f64>() / k as f64,
        weighted_precision,
        precision_undefined: predicted_count.iter().map(|&c| c == 0).collect(),
        precision,
        recall,
        confusion,
        pr_curves,
    }
}

pub fn evaluate(model: &LrModel, data: &Dataset) -> Result<EvalReport, ClassifyError> {
    let test: Vec<_> = data.split(Split::Test).collect();
    if test.is_empty() {
        return Err(ClassifyError::EmptySplit(Split::Test));
    }
    let probabilities: Vec<Vec<f64>> = test.iter().map(|s| model.predict_proba(&s.features)).collect();
    let predicted: Vec<usize> = test.iter().map(|s| model.predict(&s.features)).collect();
    let truth: Vec<usize> = test.iter().map(|s| s.label).collect();
    Ok(evaluate_predictions(data.task, &truth, &predicted, &probabilities))
}
