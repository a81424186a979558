use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate, train_lr, ClassifyError, Dataset, EvalReport, LrModel, Split, TrainConfig, TrainReport};
use crate::acoustics::{simulate_trial, AcousticParams};
use crate::dsp::{make_windows, PipelineConfig};
use crate::model::{ExperimentLog, SensorGeometry, Task, ADC_MAX};
use crate::scene::ScenePlan;

/// One simulated trial and the split its windows go to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub scene: ScenePlan,
    pub seed: u64,
    pub duration_ms: f64,
    pub split: Split,
    /// Reporting group, e.g. the obstacle height.
    pub group: String,
}

/// How windows are assigned to the train and test splits.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SplitRule {
    /// Every window follows the split of its trial.
    #[default]
    ByTrial,
    /// Windows are shuffled and `test_fraction` of them held out,
    /// regardless of the trial they come from.
    RandomWindows { test_fraction: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskProtocol {
    pub task: Task,
    pub geometry: SensorGeometry,
    /// Per-trial seeds replace `rng_seed`.
    pub acoustics: AcousticParams,
    pub pipeline: PipelineConfig,
    pub training: TrainConfig,
    #[serde(default)]
    pub split_rule: SplitRule,
    pub trials: Vec<TrialSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub group: String,
    pub windows: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub report: EvalReport,
    pub model: LrModel,
    pub training: TrainReport,
    /// Test accuracy per trial group.
    pub groups: Vec<GroupAccuracy>,
    pub train_windows: usize,
    pub train_accuracy: f64,
    pub test_windows: usize,
    pub skipped_windows: usize,
    /// Every window in the dataset, in sample order.
    pub windows: Vec<WindowEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub trial: usize,
    pub first_cycle: usize,
    pub t_ex_start_ms: f64,
    pub t_ex_end_ms: f64,
    pub label: String,
    pub split: Split,
    pub group: String,
}

/// Feature scale applied to a task's traces: raw ADC counts become percent
/// of full scale, baselined traces are already normalized.
pub fn feature_scale(task: Task) -> f64 {
    match task {
        Task::Terrain => 100.0 / f64::from(ADC_MAX),
        Task::ObstacleShape => 1.0,
    }
}

pub fn feature_dim(task: Task, cfg: &PipelineConfig) -> usize {
    match task {
        Task::Terrain => cfg.terrain_window * cfg.shifted_length,
        Task::ObstacleShape => cfg.obstacle_window * cfg.keep_length,
    }
}

/// Simulate, window, train on the train split and evaluate on the test split.
pub fn run_task(protocol: &TaskProtocol) -> Result<TaskOutcome, ClassifyError> {
    run_task_observed(protocol, |_, _| {})
}

/// [`run_task`], handing each simulated log to `observe` with its trial index.
pub fn run_task_observed<F>(protocol: &TaskProtocol, mut observe: F) -> Result<TaskOutcome, ClassifyError>
where
    F: FnMut(usize, &ExperimentLog),
{
    let task = protocol.task;
    let mut windows = Vec::new();
    let mut data = Dataset::new(task, feature_dim(task, &protocol.pipeline), protocol.acoustics.rng_seed);
    let mut skipped = 0;
    for (i, trial) in protocol.trials.iter().enumerate() {
        let params = protocol.acoustics.clone().with_seed(trial.seed);
        let sim = simulate_trial(&trial.scene, &protocol.geometry, &params, trial.duration_ms)
            .map_err(|e| ClassifyError::Simulation(e.to_string()))?;
        observe(i, &sim.log);
        let windowing = make_windows(&sim.log, task, &protocol.pipeline);
        skipped += windowing.skipped.len();
        for w in &windowing.windows {
            data.push_window(w, feature_scale(task), trial.split, i as u64, trial.group.clone())?;
            windows.push(WindowEntry {
                trial: i,
                first_cycle: w.first_cycle,
                t_ex_start_ms: w.t_ex_span.0,
                t_ex_end_ms: w.t_ex_span.1,
                label: w.label.name().to_string(),
                split: trial.split,
                group: trial.group.clone(),
            });
        }
    }
    if let SplitRule::RandomWindows { test_fraction, seed } = protocol.split_rule {
        let mut order: Vec<usize> = (0..data.samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (test_fraction.clamp(0.0, 1.0) * order.len() as f64).round() as usize;
        for (rank, &i) in order.iter().enumerate() {
            data.samples[i].split = if rank < n_test { Split::Test } else { Split::Train };
            windows[i].split = data.samples[i].split;
        }
    }
    let (model, training) = train_lr(&data, &protocol.training)?;
    let report = evaluate(&model, &data)?;

    let mut groups: Vec<GroupAccuracy> = Vec::new();
    for s in data.split(Split::Test) {
        let hit = usize::from(model.predict(&s.features) == s.label);
        match groups.iter_mut().find(|g| g.group == s.group) {
            Some(g) => {
                g.accuracy += hit as f64;
                g.windows += 1;
            }
            None => groups.push(GroupAccuracy { group: s.group.clone(), windows: 1, accuracy: hit as f64 }),
        }
    }
    groups.iter_mut().for_each(|g| g.accuracy /= g.windows as f64);
    let train: Vec<_> = data.split(Split::Train).collect();
    let train_hits = train.iter().filter(|s| model.predict(&s.features) == s.label).count();
    Ok(TaskOutcome {
        report,
        model,
        training,
        groups,
        train_windows: train.len(),
        train_accuracy: train_hits as f64 / train.len().max(1) as f64,
        test_windows: data.split(Split::Test).count(),
        skipped_windows: skipped,
        windows,
    })
}
