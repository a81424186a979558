//! Experiment runner: a JSON config names one of the three protocols
//! (terrain, obstacle shape, obstacle height), which expands into seeded
//! trials that are simulated, written to disk and analysed.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustics::{simulate_trial, AcousticParams};
use crate::classify::{
    run_task_observed, ClassifyError, EvalReport, GroupAccuracy, Split, SplitRule, TaskOutcome, TaskProtocol,
    TrainConfig, TrialSpec, WindowEntry,
};
use crate::dsp::{PeakParams, PipelineConfig};
use crate::localize::{analyze_collision, percentile, HeightEstimate};
use crate::model::{FlagKind, SensorGeometry, Task, Terrain, PREAMBLE_MS};
use crate::scene::{wrap_angle, ObstacleKind, ObstacleSpec, ScenePlan, TerrainSpec};
use crate::telemetry::{save_log, TelemetryError, TrialFormat};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error at `{path}` (line {line}, column {column}): {message}")]
    Config { path: String, line: usize, column: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("simulation: {0}")]
    Simulation(String),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("trial file {path}: {source}")]
    TrialFile { path: PathBuf, source: TelemetryError },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

/// Initial wheel angles: trial `i` starts near `(i mod n)·step`, jittered
/// uniformly by up to `spread` either way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThetaGrid {
    pub step_deg: f64,
    pub spread_deg: f64,
}

impl Default for ThetaGrid {
    fn default() -> Self {
        Self { step_deg: 30.0, spread_deg: 20.0 }
    }
}

impl ThetaGrid {
    pub fn sample<R: Rng>(&self, i: usize, rng: &mut R) -> f64 {
        let n = (360.0 / self.step_deg).round().max(1.0) as usize;
        let jitter = if self.spread_deg > 0.0 { rng.random_range(-self.spread_deg..=self.spread_deg) } else { 0.0 };
        wrap_angle(((i % n) as f64 * self.step_deg + jitter).to_radians())
    }
}

fn d_trials_per_surface() -> usize {
    10
}
fn d_terrain_length() -> f64 {
    1.5
}
fn d_terrain_start() -> f64 {
    0.5
}
fn d_test_fraction() -> f64 {
    0.3
}
fn d_train_per_shape() -> usize {
    134
}
fn d_test_per_height() -> usize {
    20
}
fn d_train_height() -> f64 {
    0.025
}
fn d_test_heights() -> Vec<f64> {
    vec![0.010, 0.015, 0.020, 0.025]
}
fn d_obstacle_position() -> f64 {
    0.5
}
fn d_short_trials() -> usize {
    43
}
fn d_tall_trials() -> usize {
    12
}
fn d_short_height() -> f64 {
    0.025
}
fn d_tall_height() -> f64 {
    0.07
}
fn d_position_range() -> [f64; 2] {
    [0.5, 0.9]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Protocol {
    /// Wood for the first `terrain_start_m`, then the surface under test;
    /// windows are split at random.
    Terrain {
        #[serde(default = "d_trials_per_surface")]
        trials_per_surface: usize,
        #[serde(default = "d_terrain_length")]
        trial_length_m: f64,
        #[serde(default = "d_terrain_start")]
        terrain_start_m: f64,
        #[serde(default = "d_test_fraction")]
        test_fraction: f64,
    },
    /// Train on both shapes at one height, test on every listed height.
    Obstacle {
        #[serde(default = "d_train_per_shape")]
        train_trials_per_shape: usize,
        #[serde(default = "d_test_per_height")]
        test_trials_per_height: usize,
        #[serde(default = "d_train_height")]
        train_height_m: f64,
        #[serde(default = "d_test_heights")]
        test_heights_m: Vec<f64>,
        #[serde(default = "d_obstacle_position")]
        obstacle_position_m: f64,
    },
    /// Short and tall blocks placed uniformly within `position_range_m`.
    Height {
        #[serde(default = "d_short_trials")]
        short_trials: usize,
        #[serde(default = "d_tall_trials")]
        tall_trials: usize,
        #[serde(default = "d_short_height")]
        short_height_m: f64,
        #[serde(default = "d_tall_height")]
        tall_height_m: f64,
        #[serde(default = "d_position_range")]
        position_range_m: [f64; 2],
    },
}

impl Protocol {
    pub fn terrain() -> Self {
        serde_json::from_str(r#"{"terrain":{}}"#).expect("defaults")
    }

    pub fn obstacle() -> Self {
        serde_json::from_str(r#"{"obstacle":{}}"#).expect("defaults")
    }

    pub fn height() -> Self {
        serde_json::from_str(r#"{"height":{}}"#).expect("defaults")
    }

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Terrain { .. } => "terrain",
            Protocol::Obstacle { .. } => "obstacle",
            Protocol::Height { .. } => "height",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub seed: u64,
    #[serde(default)]
    pub theta_grid: ThetaGrid,
    /// Use noise- and clutter-free acoustics. Ignored when `acoustics` is set.
    #[serde(default)]
    pub clean: bool,
    #[serde(default)]
    pub acoustics: Option<AcousticParams>,
    #[serde(default)]
    pub geometry: SensorGeometry,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub peaks: PeakParams,
    #[serde(default = "d_trial_format")]
    pub trial_format: TrialFormat,
}

fn d_trial_format() -> TrialFormat {
    TrialFormat::Binary
}

impl ExperimentConfig {
    pub fn new(protocol: Protocol, seed: u64) -> Self {
        Self {
            protocol,
            seed,
            theta_grid: ThetaGrid::default(),
            clean: false,
            acoustics: None,
            geometry: SensorGeometry::default(),
            pipeline: PipelineConfig::default(),
            training: TrainConfig::default(),
            peaks: PeakParams::default(),
            trial_format: TrialFormat::Binary,
        }
    }

    pub fn acoustic_params(&self) -> AcousticParams {
        match (&self.acoustics, self.clean) {
            (Some(a), _) => a.clone(),
            (None, true) => AcousticParams::noise_free(),
            (None, false) => AcousticParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Invalid(m));
        self.geometry.validate().map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        self.acoustic_params().validate().map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        if !(self.theta_grid.step_deg > 0.0) || !(self.theta_grid.spread_deg >= 0.0) {
            return bad(format!("theta grid {:?}", self.theta_grid));
        }
        match &self.protocol {
            Protocol::Terrain { trials_per_surface, trial_length_m, terrain_start_m, test_fraction } => {
                if *trials_per_surface == 0 {
                    return bad("trials_per_surface must be positive".into());
                }
                if !(*terrain_start_m >= 0.0 && terrain_start_m < trial_length_m) {
                    return bad(format!("terrain start {terrain_start_m} m outside a {trial_length_m} m trial"));
                }
                if !(0.0 < *test_fraction && *test_fraction < 1.0) {
                    return bad(format!("test_fraction {test_fraction} must lie in (0, 1)"));
                }
            }
            Protocol::Obstacle { train_trials_per_shape, test_heights_m, train_height_m, .. } => {
                if *train_trials_per_shape == 0 {
                    return bad("train_trials_per_shape must be positive".into());
                }
                if test_heights_m.iter().chain([train_height_m]).any(|h| !(*h > 0.0)) {
                    return bad("obstacle heights must be positive".into());
                }
            }
            Protocol::Height { short_height_m, tall_height_m, position_range_m: [lo, hi], .. } => {
                if !(*short_height_m > 0.0 && *tall_height_m > 0.0) {
                    return bad("block heights must be positive".into());
                }
                if !(*lo > 0.0 && lo <= hi) {
                    return bad(format!("position range [{lo}, {hi}]"));
                }
            }
        }
        Ok(())
    }
}

/// Parses a config, reporting the failing field path and position.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ExperimentError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ExperimentError::Config { path, line: inner.line(), column: inner.column(), message: inner.to_string() }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    parse_config(&fs::read_to_string(path).map_err(io_err(path))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrial {
    pub name: String,
    pub spec: TrialSpec,
    /// True obstacle height, when there is one.
    pub height_m: Option<f64>,
}

fn travel_ms(distance: f64, geom: &SensorGeometry) -> f64 {
    distance / (geom.angular_speed * geom.wheel_radius) * 1000.0
}

fn mm(h: f64) -> String {
    format!("{}", (h * 1000.0 * 10.0).round() / 10.0)
}

/// Expands the config into trials. Trial seeds and placements come from one
/// stream seeded by `cfg.seed`.
pub fn plan(cfg: &ExperimentConfig) -> Vec<PlannedTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let g = &cfg.geometry;
    let mut out = Vec::new();
    match &cfg.protocol {
        Protocol::Terrain { trials_per_surface, trial_length_m, terrain_start_m, .. } => {
            for t in Terrain::ALL {
                for i in 0..*trials_per_surface {
                    let theta = cfg.theta_grid.sample(i, &mut rng);
                    let terrain = if t == Terrain::Wood { TerrainSpec::wood() } else { TerrainSpec::new(t, *terrain_start_m) };
                    let scene = ScenePlan::flat(*trial_length_m).with_terrain(terrain).with_initial_angle(theta);
                    let duration_ms = PREAMBLE_MS + travel_ms(trial_length_m - 0.2, g);
                    out.push(PlannedTrial {
                        name: format!("terrain-{}-{i:03}", t.name()),
                        spec: TrialSpec { scene, seed: rng.random(), duration_ms, split: Split::Train, group: t.name().into() },
                        height_m: None,
                    });
                }
            }
        }
        Protocol::Obstacle {
            train_trials_per_shape,
            test_trials_per_height,
            train_height_m,
            test_heights_m,
            obstacle_position_m: x,
        } => {
            let shapes = [ObstacleKind::SemiCircle, ObstacleKind::Triangle];
            let mut push = |shape: ObstacleKind, h: f64, split: Split, i: usize, rng: &mut ChaCha8Rng| {
                let theta = cfg.theta_grid.sample(i, rng);
                let scene =
                    ScenePlan::flat(x + 0.6).with_obstacle(ObstacleSpec::new(shape, h, *x)).with_initial_angle(theta);
                let tag = match split {
                    Split::Train => "train",
                    Split::Test => "test",
                };
                let shape_name = match shape {
                    ObstacleKind::SemiCircle => "semicircle",
                    ObstacleKind::Triangle => "triangle",
                    ObstacleKind::Rectangle => "rectangle",
                };
                let group = match split {
                    Split::Train => "train".to_string(),
                    Split::Test => format!("{}mm", mm(h)),
                };
                out.push(PlannedTrial {
                    name: format!("obstacle-{tag}-{shape_name}-{}mm-{i:03}", mm(h)),
                    spec: TrialSpec {
                        scene,
                        seed: rng.random(),
                        duration_ms: PREAMBLE_MS + travel_ms(*x, g) + 5000.0,
                        split,
                        group,
                    },
                    height_m: Some(h),
                });
            };
            for i in 0..*train_trials_per_shape {
                for shape in shapes {
                    push(shape, *train_height_m, Split::Train, i, &mut rng);
                }
            }
            for &h in test_heights_m {
                for i in 0..*test_trials_per_height {
                    for shape in shapes {
                        push(shape, h, Split::Test, i, &mut rng);
                    }
                }
            }
        }
        Protocol::Height { short_trials, tall_trials, short_height_m, tall_height_m, position_range_m: [lo, hi] } => {
            for (group, h, n) in [("short", *short_height_m, *short_trials), ("tall", *tall_height_m, *tall_trials)] {
                for i in 0..n {
                    let theta = cfg.theta_grid.sample(i, &mut rng);
                    let x = if hi > lo { rng.random_range(*lo..*hi) } else { *lo };
                    let scene =
                        ScenePlan::flat(x + 0.6).with_obstacle(ObstacleSpec::block(h, x, g)).with_initial_angle(theta);
                    out.push(PlannedTrial {
                        name: format!("height-{group}-{i:03}"),
                        spec: TrialSpec {
                            scene,
                            seed: rng.random(),
                            duration_ms: PREAMBLE_MS + travel_ms(x, g) + 3000.0,
                            split: Split::Test,
                            group: group.into(),
                        },
                        height_m: Some(h),
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub iterations: usize,
    pub converged: bool,
    pub grad_inf_norm: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub report: EvalReport,
    pub groups: Vec<GroupAccuracy>,
    pub training: TrainingSummary,
    pub train_windows: usize,
    pub train_accuracy: f64,
    pub test_windows: usize,
    pub skipped_windows: usize,
}

impl ClassificationSummary {
    fn of(o: &TaskOutcome) -> Self {
        Self {
            report: o.report.clone(),
            groups: o.groups.clone(),
            training: TrainingSummary {
                iterations: o.training.iterations,
                converged: o.training.converged,
                grad_inf_norm: o.training.grad_inf_norm,
                final_loss: o.training.losses.last().copied().unwrap_or(f64::NAN),
            },
            train_windows: o.train_windows,
            train_accuracy: o.train_accuracy,
            test_windows: o.test_windows,
            skipped_windows: o.skipped_windows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightRecord {
    pub trial: String,
    pub group: String,
    pub true_height_m: f64,
    pub collision_t_ex_ms: Option<f64>,
    pub estimate: Option<HeightEstimate>,
    pub error: Option<String>,
}

/// Five-number summary of one group's estimates, in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub group: String,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn box_stats(records: &[HeightRecord]) -> Vec<BoxStats> {
    let mut groups: Vec<&str> = Vec::new();
    for r in records {
        if !groups.contains(&r.group.as_str()) {
            groups.push(&r.group);
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let v: Vec<f64> = records
                .iter()
                .filter(|r| r.group == g)
                .filter_map(|r| r.estimate.as_ref().map(|e| e.height_m))
                .collect();
            let q = |p| percentile(&v, p).unwrap_or(f64::NAN);
            BoxStats { group: g.to_string(), n: v.len(), min: q(0.0), q1: q(25.0), median: q(50.0), q3: q(75.0), max: q(100.0) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentOutcome {
    Classification(Box<ClassificationSummary>),
    Height { records: Vec<HeightRecord>, boxes: Vec<BoxStats> },
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub trials: Vec<PlannedTrial>,
    pub outcome: ExperimentOutcome,
    /// Present for classification protocols.
    pub task: Option<TaskOutcome>,
    pub files: Vec<PathBuf>,
}

/// Runs the experiment in memory; with `out_dir` every trial file and
/// artifact is also written there.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentRun, ExperimentError> {
    cfg.validate()?;
    let trials = plan(cfg);
    let trial_dir = out_dir.map(|d| d.join("trials"));
    if let Some(d) = &trial_dir {
        fs::create_dir_all(d).map_err(io_err(d))?;
    }
    let mut files = Vec::new();
    let mut write_trial = |i: usize, log: &crate::model::ExperimentLog| -> Result<(), ExperimentError> {
        if let Some(d) = &trial_dir {
            let path = d.join(format!("{}.{}", trials[i].name, cfg.trial_format.extension()));
            save_log(&path, log).map_err(|source| ExperimentError::TrialFile { path: path.clone(), source })?;
            files.push(path);
        }
        Ok(())
    };

    let (outcome, task) = match &cfg.protocol {
        Protocol::Terrain { .. } | Protocol::Obstacle { .. } => {
            let (task, split_rule) = match cfg.protocol {
                Protocol::Terrain { test_fraction, .. } => {
                    (Task::Terrain, SplitRule::RandomWindows { test_fraction, seed: cfg.seed ^ 0x5eed })
                }
                _ => (Task::ObstacleShape, SplitRule::ByTrial),
            };
            let protocol = TaskProtocol {
                task,
                geometry: cfg.geometry,
                acoustics: cfg.acoustic_params(),
                pipeline: cfg.pipeline,
                training: cfg.training,
                split_rule,
                trials: trials.iter().map(|t| t.spec.clone()).collect(),
            };
            let mut first_err = None;
            let outcome = run_task_observed(&protocol, |i, log| {
                if first_err.is_none() {
                    first_err = write_trial(i, log).err();
                }
            })?;
            if let Some(e) = first_err {
                return Err(e);
            }
            (ExperimentOutcome::Classification(Box::new(ClassificationSummary::of(&outcome))), Some(outcome))
        }
        Protocol::Height { .. } => {
            let base = cfg.acoustic_params();
            let mut records = Vec::with_capacity(trials.len());
            for (i, t) in trials.iter().enumerate() {
                let sim = simulate_trial(&t.spec.scene, &cfg.geometry, &base.clone().with_seed(t.spec.seed), t.spec.duration_ms)
                    .map_err(|e| ExperimentError::Simulation(e.to_string()))?;
                write_trial(i, &sim.log)?;
                let flag = sim.log.first_flag(FlagKind::ContactStart).map(|f| f.t_ex_ms);
                let result = match flag {
                    Some(t_ex) => analyze_collision(&sim.log, t_ex, &cfg.peaks, &cfg.geometry).estimate.map_err(|e| e.to_string()),
                    None => Err("no contact flag".to_string()),
                };
                let (estimate, error) = match result {
                    Ok(e) => (Some(e), None),
                    Err(e) => (None, Some(e)),
                };
                records.push(HeightRecord {
                    trial: t.name.clone(),
                    group: t.spec.group.clone(),
                    true_height_m: t.height_m.unwrap_or(f64::NAN),
                    collision_t_ex_ms: flag,
                    estimate,
                    error,
                });
            }
            let boxes = box_stats(&records);
            (ExperimentOutcome::Height { records, boxes }, None)
        }
    };

    if let Some(dir) = out_dir {
        write_artifacts(dir, cfg, &outcome, task.as_ref(), &mut files)?;
    }
    Ok(ExperimentRun { trials, outcome, task, files })
}

fn write_file(dir: &Path, name: &str, contents: &[u8], files: &mut Vec<PathBuf>) -> Result<(), ExperimentError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))?;
    files.push(path);
    Ok(())
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

pub fn confusion_csv(report: &EvalReport) -> String {
    let mut s = String::from("true\\predicted");
    for c in &report.classes {
        let _ = write!(s, ",{c}");
    }
    s.push('\n');
    for (c, row) in report.classes.iter().zip(&report.confusion) {
        s.push_str(c);
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn pr_csv(report: &EvalReport) -> String {
    let mut s = String::from("class,threshold,recall,precision\n");
    for (c, curve) in report.classes.iter().zip(&report.pr_curves) {
        for p in curve {
            let _ = writeln!(s, "{c},{},{},{}", p.threshold, p.recall, p.precision);
        }
    }
    s
}

pub fn windows_csv(windows: &[WindowEntry], trials: &[PlannedTrial]) -> String {
    let mut s = String::from("trial,first_cycle,t_ex_start_ms,t_ex_end_ms,label,split,group\n");
    for w in windows {
        let split = match w.split {
            Split::Train => "train",
            Split::Test => "test",
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{split},{}",
            trials[w.trial].name, w.first_cycle, w.t_ex_start_ms, w.t_ex_end_ms, w.label, w.group
        );
    }
    s
}

pub fn boxplot_csv(boxes: &[BoxStats]) -> String {
    let mut s = String::from("group,n,min_m,q1_m,median_m,q3_m,max_m\n");
    for b in boxes {
        let _ = writeln!(s, "{},{},{},{},{},{},{}", b.group, b.n, b.min, b.q1, b.median, b.q3, b.max);
    }
    s
}

fn write_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    outcome: &ExperimentOutcome,
    task: Option<&TaskOutcome>,
    files: &mut Vec<PathBuf>,
) -> Result<(), ExperimentError> {
    write_file(dir, "config.json", &json_bytes(cfg), files)?;
    match outcome {
        ExperimentOutcome::Classification(summary) => {
            write_file(dir, "report.json", &json_bytes(summary), files)?;
            write_file(dir, "confusion.csv", confusion_csv(&summary.report).as_bytes(), files)?;
            write_file(dir, "pr.csv", pr_csv(&summary.report).as_bytes(), files)?;
            if let Some(t) = task {
                write_file(dir, "windows.csv", windows_csv(&t.windows, &plan(cfg)).as_bytes(), files)?;
                let path = dir.join("model.awlr");
                t.model.save(&path).map_err(io_err(&path))?;
                files.push(path);
            }
        }
        ExperimentOutcome::Height { records, boxes } => {
            write_file(dir, "heights.json", &json_bytes(records), files)?;
            write_file(dir, "boxplot.csv", boxplot_csv(boxes).as_bytes(), files)?;
        }
    }
    Ok(())
}
