//! Window classification with multinomial logistic regression.

mod logreg;
mod metrics;
mod task;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Task, TraceWindow, WindowError};

pub use logreg::{objective_and_gradient, train_lr, LrModel, ModelFormatError, TrainConfig, TrainReport};
pub use metrics::{evaluate, evaluate_predictions, pr_curve, EvalReport, PrPoint};
pub use task::{
    feature_dim, feature_scale, run_task, run_task_observed, GroupAccuracy, SplitRule, TaskOutcome, TaskProtocol, TrialSpec,
    WindowEntry,
};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("training split holds {0} class(es); at least 2 are needed")]
    Degenerate(usize),
    #[error("feature length {found} does not match the dataset's {expected}")]
    FeatureDim { expected: usize, found: usize },
    #[error("window label belongs to task {found:?}, dataset is {expected:?}")]
    TaskMismatch { expected: Task, found: Task },
    #[error("no samples in the {0:?} split")]
    EmptySplit(Split),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error("simulation failed: {0}")]
    Simulation(String),
}

/// Row-major concatenation of a window's traces.
pub fn flatten(window: &TraceWindow) -> Result<Vec<f64>, ClassifyError> {
    let len = window.trace_len();
    let mut out = Vec::with_capacity(len * window.window_size());
    for (index, t) in window.traces.iter().enumerate() {
        if t.len() != len {
            return Err(WindowError::Ragged { index, expected: len, found: t.len() }.into());
        }
        out.extend_from_slice(&t.samples);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct Sample {
    /// Stored in single precision; flattened obstacle windows are large.
    pub features: Vec<f32>,
    pub label: usize,
    pub split: Split,
    /// Trial the window was cut from.
    pub trial: u64,
    /// Free-form grouping used for per-group accuracy, e.g. obstacle height.
    pub group: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub task: Task,
    pub feature_dim: usize,
    pub samples: Vec<Sample>,
    pub seed: u64,
}

impl Dataset {
    pub fn new(task: Task, feature_dim: usize, seed: u64) -> Self {
        Self { task, feature_dim, samples: Vec::new(), seed }
    }

    pub fn n_classes(&self) -> usize {
        self.task.n_classes()
    }

    /// Adds a window, multiplying every sample by `scale`.
    pub fn push_window(
        &mut self,
        window: &TraceWindow,
        scale: f64,
        split: Split,
        trial: u64,
        group: impl Into<String>,
    ) -> Result<(), ClassifyError> {
        if window.label.task() != self.task {
            return Err(ClassifyError::TaskMismatch { expected: self.task, found: window.label.task() });
        }
        let features: Vec<f32> = flatten(window)?.into_iter().map(|v| (v * scale) as f32).collect();
        self.push(features, window.label.index(), split, trial, group)
    }

    pub fn push(
        &mut self,
        features: Vec<f32>,
        label: usize,
        split: Split,
        trial: u64,
        group: impl Into<String>,
    ) -> Result<(), ClassifyError> {
        if features.len() != self.feature_dim {
            return Err(ClassifyError::FeatureDim { expected: self.feature_dim, found: features.len() });
        }
        self.samples.push(Sample { features, label, split, trial, group: group.into() });
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Trials contributing windows to both splits.
    pub fn shared_trials(&self) -> Vec<u64> {
        let train: std::collections::BTreeSet<u64> = self.split(Split::Train).map(|s| s.trial).collect();
        let test: std::collections::BTreeSet<u64> = self.split(Split::Test).map(|s| s.trial).collect();
        train.intersection(&test).copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClassLabel, Stage, Terrain, Trace};

    fn window(traces: Vec<Vec<f64>>) -> TraceWindow {
        let traces = traces
            .into_iter()
            .map(|samples| Trace { stage: Stage::Shifted2000, t_ex_ms: 0.0, samples })
            .collect();
        TraceWindow::new(traces, ClassLabel::Terrain(Terrain::Soft), 0).unwrap()
    }

    #[test]
    fn flatten_is_row_major() {
        let w = window(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        assert_eq!(flatten(&w).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn flatten_rejects_ragged_windows() {
        let mut w = window(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        w.traces[1].samples.pop();
        assert!(matches!(flatten(&w), Err(ClassifyError::Window(WindowError::Ragged { .. }))));
    }

    #[test]
    fn flattened_sizes() {
        assert_eq!(flatten(&window(vec![vec![0.0; 2000]; 5])).unwrap().len(), 10_000);
        let traces = (0..90).map(|_| Trace { stage: Stage::Baselined1750, t_ex_ms: 0.0, samples: vec![0.0; 1750] });
        let w = TraceWindow::new(traces.collect(), ClassLabel::Obstacle(crate::model::ObstacleShape::Flat), 0).unwrap();
        assert_eq!(flatten(&w).unwrap().len(), 157_500);
    }

    #[test]
    fn dataset_checks_task_and_dim() {
        let mut d = Dataset::new(Task::ObstacleShape, 6, 0);
        let w = window(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        assert!(matches!(d.push_window(&w, 1.0, Split::Train, 0, ""), Err(ClassifyError::TaskMismatch { .. })));
        let mut d = Dataset::new(Task::Terrain, 5, 0);
        assert!(matches!(d.push_window(&w, 1.0, Split::Train, 0, ""), Err(ClassifyError::FeatureDim { .. })));
    }
}
