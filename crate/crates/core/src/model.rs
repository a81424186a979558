//! Domain types and unit conventions shared across the toolkit.
//!
//! Conventions: lengths in metres, angles in radians, time in milliseconds,
//! amplitudes as raw ADC counts (0..=4096 spans 0..1.8 V).

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustics::AcousticParams;
use crate::scene::ScenePlan;

/// ADC sampling rate of the rangefinder envelope.
pub const SAMPLE_RATE_HZ: f64 = 200_000.0;
/// Samples recorded per ranging cycle.
pub const RAW_CYCLE_LEN: usize = 4000;
/// Length of a send-pulse aligned trace.
pub const SHIFTED_LEN: usize = 2000;
/// Largest legal ADC reading.
pub const ADC_MAX: u16 = 4096;
/// Voltage represented by `ADC_MAX`.
pub const ADC_FULL_SCALE_VOLTS: f64 = 1.8;
/// Ranging cycles are triggered at 20 Hz.
pub const TRIGGER_PERIOD_MS: f64 = 50.0;
/// Upper bound of the delay between trigger and send pulse.
pub const MAX_TRIGGER_DELAY_MS: f64 = 7.5;
/// Every trial starts with this long a stationary sequence.
pub const PREAMBLE_MS: f64 = 10_000.0;

/// Ranging time of sample `index`, in ms.
pub fn ranging_time_of_sample(index: usize, sample_rate: f64) -> f64 {
    index as f64 / sample_rate * 1000.0
}

/// Converts an ADC count to volts. Display only; everything else works in counts.
pub fn adc_to_volts(count: u16) -> f64 {
    f64::from(count) * ADC_FULL_SCALE_VOLTS / f64::from(ADC_MAX)
}

pub fn rpm_to_rad_per_s(rpm: f64) -> f64 {
    rpm * 2.0 * PI / 60.0
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("waveguide length must be positive (inner {inner} m + outer {outer} m)")]
    NonPositiveLength { inner: f64, outer: f64 },
    #[error("speed of sound must be positive, got {0} m/s")]
    NonPositiveSpeedOfSound(f64),
    #[error("pulse frequency must be positive, got {0} Hz")]
    NonPositiveFrequency(f64),
    #[error("pulse must contain at least one cycle")]
    ZeroPulseCycles,
    #[error("angular speed must be positive, got {0} rad/s")]
    NonPositiveAngularSpeed(f64),
    #[error("wheel diameter {diameter} m is not twice the radius {radius} m")]
    DiameterRadiusMismatch { diameter: f64, radius: f64 },
    #[error("outer waveguide length {outer} m does not wrap the circumference {circumference} m")]
    OuterLengthMismatch { outer: f64, circumference: f64 },
}

/// Wheel and waveguide dimensions together with the acoustic constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub wheel_diameter: f64,
    pub wheel_radius: f64,
    /// Dead-zone length inside the hub.
    pub inner_length: f64,
    /// Length wrapped around the wheel.
    pub outer_length: f64,
    pub speed_of_sound: f64,
    pub pulse_frequency: f64,
    pub pulse_cycles: u32,
    pub angular_speed: f64,
}

impl SensorGeometry {
    pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
    pub const DEFAULT_PULSE_FREQUENCY: f64 = 42_000.0;
    pub const DEFAULT_PULSE_CYCLES: u32 = 8;
    pub const DEFAULT_RPM: f64 = 6.0;

    /// Waveguide wrapped once around a wheel of the given diameter.
    pub fn wrapped(wheel_diameter: f64, inner_length: f64) -> Self {
        Self {
            wheel_diameter,
            wheel_radius: wheel_diameter / 2.0,
            inner_length,
            outer_length: PI * wheel_diameter,
            speed_of_sound: Self::DEFAULT_SPEED_OF_SOUND,
            pulse_frequency: Self::DEFAULT_PULSE_FREQUENCY,
            pulse_cycles: Self::DEFAULT_PULSE_CYCLES,
            angular_speed: rpm_to_rad_per_s(Self::DEFAULT_RPM),
        }
    }

    /// The 27 cm prototype wheel with a 15 cm dead zone, driven at 6 RPM.
    pub fn prototype() -> Self {
        Self::wrapped(0.27, 0.15)
    }

    pub fn with_speed_of_sound(mut self, c: f64) -> Self {
        self.speed_of_sound = c;
        self
    }

    pub fn with_angular_speed(mut self, omega: f64) -> Self {
        self.angular_speed = omega;
        self
    }

    pub fn with_pulse(mut self, frequency: f64, cycles: u32) -> Self {
        self.pulse_frequency = frequency;
        self.pulse_cycles = cycles;
        self
    }

    pub fn total_length(&self) -> f64 {
        self.inner_length + self.outer_length
    }

    pub fn wavelength(&self) -> f64 {
        self.speed_of_sound / self.pulse_frequency
    }

    /// Send-pulse duration expressed in ADC samples.
    pub fn pulse_width_samples(&self) -> f64 {
        f64::from(self.pulse_cycles) / self.pulse_frequency * SAMPLE_RATE_HZ
    }

    /// Ranging time (ms) below which returns originate inside the hub.
    pub fn dead_zone_ms(&self) -> f64 {
        2.0 * self.inner_length / self.speed_of_sound * 1000.0
    }

    /// Ranging time (ms) of a reflection at perimeter angle `theta`.
    pub fn time_of_flight_ms(&self, theta: f64) -> f64 {
        2.0 * (self.inner_length + theta * self.wheel_diameter / 2.0) / self.speed_of_sound * 1000.0
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let total = self.total_length();
        if !(total > 0.0) || self.inner_length < 0.0 || self.outer_length < 0.0 {
            return Err(GeometryError::NonPositiveLength {
                inner: self.inner_length,
                outer: self.outer_length,
            });
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(GeometryError::NonPositiveSpeedOfSound(self.speed_of_sound));
        }
        if !(self.pulse_frequency > 0.0) {
            return Err(GeometryError::NonPositiveFrequency(self.pulse_frequency));
        }
        if self.pulse_cycles == 0 {
            return Err(GeometryError::ZeroPulseCycles);
        }
        if !(self.angular_speed > 0.0) {
            return Err(GeometryError::NonPositiveAngularSpeed(self.angular_speed));
        }
        let tol = 1e-9 * self.wheel_diameter.abs().max(1.0);
        if (self.wheel_diameter - 2.0 * self.wheel_radius).abs() > tol {
            return Err(GeometryError::DiameterRadiusMismatch {
                diameter: self.wheel_diameter,
                radius: self.wheel_radius,
            });
        }
        let circumference = PI * self.wheel_diameter;
        if (self.outer_length - circumference).abs() > tol {
            return Err(GeometryError::OuterLengthMismatch {
                outer: self.outer_length,
                circumference,
            });
        }
        Ok(())
    }
}

impl Default for SensorGeometry {
    fn default() -> Self {
        Self::prototype()
    }
}

/// One send/receive acoustic trace as logged by the sensor node.
///
/// Samples are raw ADC counts at [`SAMPLE_RATE_HZ`]; the ranging time of
/// sample `i` is derived from its index and never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangingCycle {
    pub t_ex_ms: f64,
    pub wheel_angle: f64,
    pub samples: Vec<u16>,
}

impl RangingCycle {
    pub fn mean_amplitude(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|&s| f64::from(s)).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    ContactStart,
    ContactEnd,
}

/// Contact event in experiment time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub t_ex_ms: f64,
    pub kind: FlagKind,
}

/// A recorded (or simulated) trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentLog {
    pub geometry: SensorGeometry,
    pub scene: ScenePlan,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acoustics: Option<AcousticParams>,
    pub cycles: Vec<RangingCycle>,
    pub flags: Vec<Flag>,
}

impl ExperimentLog {
    /// Mean amplitude over every sample of the trial; used as padding value.
    pub fn mean_amplitude(&self) -> f64 {
        let (sum, n) = self.cycles.iter().fold((0.0, 0usize), |(s, n), c| {
            (s + c.samples.iter().map(|&v| f64::from(v)).sum::<f64>(), n + c.samples.len())
        });
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn first_flag(&self, kind: FlagKind) -> Option<&Flag> {
        self.flags.iter().find(|f| f.kind == kind)
    }

    /// Index of the first cycle at or after `t_ex_ms`.
    pub fn cycle_index_at(&self, t_ex_ms: f64) -> Option<usize> {
        self.cycles.iter().position(|c| c.t_ex_ms >= t_ex_ms)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    SampleCount { expected: usize, found: usize },
    SampleRange { sample: usize, value: u16 },
    NonMonotonicTime { previous_ms: f64, current_ms: f64 },
    TriggerSpacing { delta_ms: f64 },
    FlagOrder { previous_ms: f64, current_ms: f64 },
    Geometry(GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Offending cycle (or flag) index, if the violation is tied to one.
    pub index: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = self.index.map(|i| format!("cycle {i}: ")).unwrap_or_default();
        match &self.kind {
            ViolationKind::SampleCount { expected, found } => {
                write!(f, "{at}sample-count: expected {expected}, found {found}")
            }
            ViolationKind::SampleRange { sample, value } => {
                write!(f, "{at}sample-range: sample {sample} = {value} exceeds {ADC_MAX}")
            }
            ViolationKind::NonMonotonicTime { previous_ms, current_ms } => write!(
                f,
                "{at}monotonicity: t_ex {current_ms} ms does not follow {previous_ms} ms"
            ),
            ViolationKind::TriggerSpacing { delta_ms } => {
                write!(f, "{at}trigger-spacing: {delta_ms} ms between cycles")
            }
            ViolationKind::FlagOrder { previous_ms, current_ms } => {
                write!(f, "flag {at}flag-order: {current_ms} ms before {previous_ms} ms")
            }
            ViolationKind::Geometry(e) => write!(f, "geometry: {e}"),
        }
    }
}

/// Checks the log against the raw-cycle invariants. Never aborts; every
/// problem found is reported.
pub fn validate_log(log: &ExperimentLog) -> Vec<Violation> {
    let mut out = Vec::new();
    if let Err(e) = log.geometry.validate() {
        out.push(Violation { index: None, kind: ViolationKind::Geometry(e) });
    }
    let mut prev: Option<f64> = None;
    for (i, cycle) in log.cycles.iter().enumerate() {
        if cycle.samples.len() != RAW_CYCLE_LEN {
            out.push(Violation {
                index: Some(i),
                kind: ViolationKind::SampleCount { expected: RAW_CYCLE_LEN, found: cycle.samples.len() },
            });
        }
        // Values at exactly ADC_MAX are clipped readings and accepted.
        if let Some((sample, &value)) = cycle.samples.iter().enumerate().find(|(_, &v)| v > ADC_MAX) {
            out.push(Violation { index: Some(i), kind: ViolationKind::SampleRange { sample, value } });
        }
        if let Some(p) = prev {
            let delta = cycle.t_ex_ms - p;
            if delta <= 0.0 {
                out.push(Violation {
                    index: Some(i),
                    kind: ViolationKind::NonMonotonicTime { previous_ms: p, current_ms: cycle.t_ex_ms },
                });
            } else if (delta - TRIGGER_PERIOD_MS).abs() > MAX_TRIGGER_DELAY_MS {
                out.push(Violation { index: Some(i), kind: ViolationKind::TriggerSpacing { delta_ms: delta } });
            }
        }
        prev = Some(cycle.t_ex_ms);
    }
    for (i, pair) in log.flags.windows(2).enumerate() {
        if pair[1].t_ex_ms < pair[0].t_ex_ms {
            out.push(Violation {
                index: Some(i + 1),
                kind: ViolationKind::FlagOrder { previous_ms: pair[0].t_ex_ms, current_ms: pair[1].t_ex_ms },
            });
        }
    }
    out
}

/// Processing stage of a trace; each stage has its own nominal length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Raw,
    Shifted2000,
    Baselined1750,
}

impl Stage {
    pub fn nominal_len(self) -> usize {
        match self {
            Stage::Raw => RAW_CYCLE_LEN,
            Stage::Shifted2000 => SHIFTED_LEN,
            Stage::Baselined1750 => 1750,
        }
    }
}

/// A trace at a known pipeline stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub stage: Stage,
    pub t_ex_ms: f64,
    pub samples: Vec<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Terrain {
    Wood,
    Outdoor,
    Soft,
    Ribbed,
    #[serde(rename = "NFM")]
    Nfm,
}

impl Terrain {
    pub const ALL: [Terrain; 5] = [Terrain::Wood, Terrain::Outdoor, Terrain::Soft, Terrain::Ribbed, Terrain::Nfm];

    pub fn name(self) -> &'static str {
        match self {
            Terrain::Wood => "Wood",
            Terrain::Outdoor => "Outdoor",
            Terrain::Soft => "Soft",
            Terrain::Ribbed => "Ribbed",
            Terrain::Nfm => "NFM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObstacleShape {
    Flat,
    SemiCircle,
    Triangle,
}

impl ObstacleShape {
    pub const ALL: [ObstacleShape; 3] = [ObstacleShape::Flat, ObstacleShape::SemiCircle, ObstacleShape::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            ObstacleShape::Flat => "Flat",
            ObstacleShape::SemiCircle => "SemiCircle",
            ObstacleShape::Triangle => "Triangle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Terrain,
    ObstacleShape,
}

impl Task {
    pub fn labels(self) -> Vec<ClassLabel> {
        match self {
            Task::Terrain => Terrain::ALL.iter().map(|&t| ClassLabel::Terrain(t)).collect(),
            Task::ObstacleShape => ObstacleShape::ALL.iter().map(|&s| ClassLabel::Obstacle(s)).collect(),
        }
    }

    pub fn n_classes(self) -> usize {
        match self {
            Task::Terrain => Terrain::ALL.len(),
            Task::ObstacleShape => ObstacleShape::ALL.len(),
        }
    }
}

/// A class label; the variant fixes which task it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Terrain(Terrain),
    Obstacle(ObstacleShape),
}

impl ClassLabel {
    pub fn task(self) -> Task {
        match self {
            ClassLabel::Terrain(_) => Task::Terrain,
            ClassLabel::Obstacle(_) => Task::ObstacleShape,
        }
    }

    /// Position of the label within its task's label list.
    pub fn index(self) -> usize {
        match self {
            ClassLabel::Terrain(t) => Terrain::ALL.iter().position(|&x| x == t).unwrap_or(0),
            ClassLabel::Obstacle(s) => ObstacleShape::ALL.iter().position(|&x| x == s).unwrap_or(0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Terrain(t) => t.name(),
            ClassLabel::Obstacle(s) => s.name(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindowError {
    #[error("a window needs at least one trace")]
    Empty,
    #[error("trace {index} has {found} samples, expected {expected}")]
    Ragged { index: usize, expected: usize, found: usize },
    #[error("trace {index} is at stage {found:?}, expected {expected:?}")]
    MixedStages { index: usize, expected: Stage, found: Stage },
}

/// N consecutive processed traces with one label; the classifier's input unit.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceWindow {
    pub traces: Vec<Trace>,
    pub label: ClassLabel,
    pub t_ex_span: (f64, f64),
    /// Index of the first trace within its trial.
    pub first_cycle: usize,
}

impl TraceWindow {
    pub fn new(traces: Vec<Trace>, label: ClassLabel, first_cycle: usize) -> Result<Self, WindowError> {
        let first = traces.first().ok_or(WindowError::Empty)?;
        let (len, stage) = (first.len(), first.stage);
        for (index, t) in traces.iter().enumerate() {
            if t.stage != stage {
                return Err(WindowError::MixedStages { index, expected: stage, found: t.stage });
            }
            if t.len() != len {
                return Err(WindowError::Ragged { index, expected: len, found: t.len() });
            }
        }
        let span = (first.t_ex_ms, traces.last().map_or(first.t_ex_ms, |t| t.t_ex_ms));
        Ok(Self { traces, label, t_ex_span: span, first_cycle })
    }

    pub fn window_size(&self) -> usize {
        self.traces.len()
    }

    pub fn trace_len(&self) -> usize {
        self.traces.first().map_or(0, Trace::len)
    }
}
