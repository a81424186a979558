//! Synthesis of raw ranging cycles from contact states.
//!
//! Every pulse (send, reflection, clutter) shares one half-sine envelope of
//! `n_cycles / f` seconds. Reflections are centred at the time of flight of
//! their contact measured from the start of the send pulse.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ExperimentLog, Flag, RangingCycle, SensorGeometry, ADC_MAX, MAX_TRIGGER_DELAY_MS, RAW_CYCLE_LEN, SAMPLE_RATE_HZ,
    SHIFTED_LEN,
};
use crate::scene::{self, ContactState, ObstacleKind, ScenePlan, SceneError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcousticError {
    #[error("acoustic parameter `{name}` must be finite and non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("trigger jitter bound {0} ms exceeds {MAX_TRIGGER_DELAY_MS} ms")]
    Jitter(f64),
    #[error("reference indentation depth must be positive, got {0}")]
    DepthRef(f64),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcousticParams {
    /// Quiescent ADC level.
    pub baseline: f64,
    pub send_pulse_amplitude: f64,
    /// Reflection amplitude of a fully indented, non-absorbing contact (`g0`).
    pub reflection_gain: f64,
    /// Indentation at which the reflection saturates.
    pub depth_ref: f64,
    /// Exponential loss along the tube, per metre of travel.
    pub attenuation_coeff: f64,
    pub noise_std: f64,
    /// Mean number of spurious resonance peaks per cycle.
    pub clutter_rate: f64,
    pub trigger_jitter_max_ms: f64,
    /// Amplitude of the trailing echo off a triangular obstacle, relative to
    /// its primary reflection.
    pub secondary_echo_ratio: f64,
    pub rng_seed: u64,
}

impl Default for AcousticParams {
    fn default() -> Self {
        Self {
            baseline: 400.0,
            send_pulse_amplitude: 3000.0,
            reflection_gain: 1500.0,
            depth_ref: 0.006,
            attenuation_coeff: 0.05,
            noise_std: 12.0,
            clutter_rate: 0.1,
            trigger_jitter_max_ms: MAX_TRIGGER_DELAY_MS,
            secondary_echo_ratio: 0.5,
            rng_seed: 0,
        }
    }
}

impl AcousticParams {
    /// Defaults without noise or clutter; trigger jitter is kept.
    pub fn noise_free() -> Self {
        Self { noise_std: 0.0, clutter_rate: 0.0, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), AcousticError> {
        let fields = [
            ("baseline", self.baseline),
            ("send_pulse_amplitude", self.send_pulse_amplitude),
            ("reflection_gain", self.reflection_gain),
            ("attenuation_coeff", self.attenuation_coeff),
            ("noise_std", self.noise_std),
            ("clutter_rate", self.clutter_rate),
            ("trigger_jitter_max_ms", self.trigger_jitter_max_ms),
            ("secondary_echo_ratio", self.secondary_echo_ratio),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                return Err(AcousticError::Negative { name, value });
            }
        }
        if self.trigger_jitter_max_ms > MAX_TRIGGER_DELAY_MS {
            return Err(AcousticError::Jitter(self.trigger_jitter_max_ms));
        }
        if !(self.depth_ref > 0.0) {
            return Err(AcousticError::DepthRef(self.depth_ref));
        }
        Ok(())
    }

    pub fn reflection_amplitude(&self, depth: f64, absorption: f64) -> f64 {
        self.reflection_gain * (depth / self.depth_ref).clamp(0.0, 1.0) * (1.0 - absorption.clamp(0.0, 1.0))
    }

    /// Amplitude of a contact's reflection at perimeter angle `theta`.
    pub fn echo_amplitude(&self, depth: f64, absorption: f64, theta: f64, geom: &SensorGeometry) -> f64 {
        let x = scene::contact_angle_to_perimeter_distance(theta, geom);
        self.reflection_amplitude(depth, absorption) * (-self.attenuation_coeff * 2.0 * x).exp()
    }
}

/// Ground truth the wire format does not carry.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleTruth {
    pub trigger_delay_ms: f64,
    /// Raw sample index at which the send pulse starts.
    pub onset_sample: usize,
    /// Raw sample positions of the reflection centres that fit in the record.
    pub echo_centers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedCycle {
    pub cycle: RangingCycle,
    pub truth: CycleTruth,
}

/// Seeded generator of ranging cycles; draws are consumed in cycle order.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    params: AcousticParams,
    geom: SensorGeometry,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    clutter: Option<Poisson<f64>>,
}

impl Synthesizer {
    pub fn new(params: AcousticParams, geom: SensorGeometry) -> Result<Self, AcousticError> {
        params.validate()?;
        geom.validate().map_err(SceneError::from)?;
        let noise = (params.noise_std > 0.0).then(|| Normal::new(0.0, params.noise_std).expect("validated std"));
        let clutter = (params.clutter_rate > 0.0).then(|| Poisson::new(params.clutter_rate).expect("validated rate"));
        let rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
        Ok(Self { params, geom, rng, noise, clutter })
    }

    pub fn params(&self) -> &AcousticParams {
        &self.params
    }

    pub fn synthesize(&mut self, state: &ContactState) -> SynthesizedCycle {
        let p = &self.params;
        let width = self.geom.pulse_width_samples();
        let delay_ms = if p.trigger_jitter_max_ms > 0.0 { self.rng.random_range(0.0..p.trigger_jitter_max_ms) } else { 0.0 };
        let onset = (delay_ms * SAMPLE_RATE_HZ / 1000.0).round() as usize;

        let mut signal = vec![p.baseline; RAW_CYCLE_LEN];
        add_pulse(&mut signal, onset as f64 + width / 2.0, width, p.send_pulse_amplitude);

        let mut echo_centers = Vec::new();
        let mut emit = |signal: &mut [f64], centre: f64, amplitude: f64| {
            if centre + width / 2.0 < RAW_CYCLE_LEN as f64 {
                add_pulse(signal, centre, width, amplitude);
                echo_centers.push(centre);
            }
        };
        for c in &state.contacts {
            let tof = self.geom.time_of_flight_ms(c.theta) * SAMPLE_RATE_HZ / 1000.0;
            let centre = onset as f64 + tof;
            let amplitude = p.echo_amplitude(c.indentation_depth, c.absorption, c.theta, &self.geom);
            emit(&mut signal, centre, amplitude);
            if c.shape == Some(ObstacleKind::Triangle) && p.secondary_echo_ratio > 0.0 {
                emit(&mut signal, centre + width, amplitude * p.secondary_echo_ratio);
            }
        }

        if let Some(clutter) = self.clutter {
            let n = clutter.sample(&mut self.rng) as usize;
            for _ in 0..n {
                let at = onset as f64 + self.rng.random_range(0.0..SHIFTED_LEN as f64);
                let amplitude = self.rng.random_range(0.1..0.9) * p.reflection_gain;
                if at + width / 2.0 < RAW_CYCLE_LEN as f64 {
                    add_pulse(&mut signal, at, width, amplitude);
                }
            }
        }
        if let Some(noise) = self.noise {
            for v in signal.iter_mut() {
                *v += noise.sample(&mut self.rng);
            }
        }
        let samples = signal.iter().map(|v| v.round().clamp(0.0, f64::from(ADC_MAX)) as u16).collect();
        SynthesizedCycle {
            cycle: RangingCycle { t_ex_ms: state.t_ex_ms, wheel_angle: scene::wrap_angle(state.rotation), samples },
            truth: CycleTruth { trigger_delay_ms: delay_ms, onset_sample: onset, echo_centers },
        }
    }
}

/// Adds a half-sine envelope of `width` samples centred at `centre`.
fn add_pulse(signal: &mut [f64], centre: f64, width: f64, amplitude: f64) {
    let start = centre - width / 2.0;
    let first = start.ceil().max(0.0) as usize;
    let last = ((start + width).floor() as usize).min(signal.len().saturating_sub(1));
    for (k, v) in signal.iter_mut().enumerate().take(last + 1).skip(first) {
        let u = (k as f64 - start) / width;
        if (0.0..=1.0).contains(&u) {
            *v += amplitude * (PI * u).sin();
        }
    }
}

/// One cycle from a fresh generator seeded with `params.rng_seed`.
pub fn synthesize_cycle(
    state: &ContactState,
    params: &AcousticParams,
    geom: &SensorGeometry,
) -> Result<RangingCycle, AcousticError> {
    Ok(Synthesizer::new(params.clone(), *geom)?.synthesize(state).cycle)
}

/// A synthesized trial together with its per-cycle ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrial {
    pub log: ExperimentLog,
    pub truth: Vec<CycleTruth>,
}

pub fn synthesize_trial(
    states: &[ContactState],
    flags: &[Flag],
    scene: &ScenePlan,
    params: &AcousticParams,
    geom: &SensorGeometry,
) -> Result<SimulatedTrial, AcousticError> {
    let mut synth = Synthesizer::new(params.clone(), *geom)?;
    let (cycles, truth) = states
        .iter()
        .map(|s| {
            let out = synth.synthesize(s);
            (out.cycle, out.truth)
        })
        .unzip();
    Ok(SimulatedTrial {
        log: ExperimentLog {
            geometry: *geom,
            scene: scene.clone(),
            seed: params.rng_seed,
            acoustics: Some(params.clone()),
            cycles,
            flags: flags.to_vec(),
        },
        truth,
    })
}

/// Kinematics followed by synthesis, for `duration_ms` of experiment time.
pub fn simulate_trial(
    scene: &ScenePlan,
    geom: &SensorGeometry,
    params: &AcousticParams,
    duration_ms: f64,
) -> Result<SimulatedTrial, AcousticError> {
    let kin = scene::run_trial(scene, geom, duration_ms)?;
    synthesize_trial(&kin.states, &kin.flags, scene, params, geom)
}
