//! Contact localization from return-peak ranging times and obstacle height
//! from the jump in contact angle at a collision.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{align_and_trim, ema_filter, find_peaks, normalize_by_max, DspError, PeakParams, PeakSet};
use crate::model::{ExperimentLog, SensorGeometry, SAMPLE_RATE_HZ};

/// Half-width of the experiment-time window around the collision flag.
pub const COLLISION_WINDOW_MS: f64 = 500.0;
const UPPER_PERCENTILE: f64 = 80.0;
const LOWER_PERCENTILE: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizeError {
    #[error("ranging time {t_r_ms} ms lies inside the {dead_zone_ms} ms dead zone")]
    DeadZone { t_r_ms: f64, dead_zone_ms: f64 },
    #[error("contact-angle change {0} rad is not positive")]
    NonPositive(f64),
    #[error("contact-angle change {0} rad is not below 2π")]
    OutOfRange(f64),
    #[error("need at least 2 return peaks in the collision window, found {found}")]
    InsufficientPeaks { found: usize },
}

/// Contact angle of a return peak at ranging time `t_r_ms`.
pub fn peak_time_to_theta(t_r_ms: f64, geom: &SensorGeometry) -> Result<f64, LocalizeError> {
    let dead_zone_ms = geom.dead_zone_ms();
    // Allow the boundary itself despite rounding in the dead-zone time.
    if t_r_ms < dead_zone_ms * (1.0 - 1e-12) {
        return Err(LocalizeError::DeadZone { t_r_ms, dead_zone_ms });
    }
    let theta = (geom.speed_of_sound * t_r_ms / 1000.0 / 2.0 - geom.inner_length) * 2.0 / geom.wheel_diameter;
    Ok(theta.max(0.0))
}

pub fn delta_theta_from_delta_t(delta_t_ms: f64, geom: &SensorGeometry) -> Result<f64, LocalizeError> {
    let dtheta = geom.speed_of_sound * delta_t_ms / 1000.0 / geom.wheel_diameter;
    if !(dtheta > 0.0) {
        return Err(LocalizeError::NonPositive(dtheta));
    }
    if dtheta >= TAU {
        return Err(LocalizeError::OutOfRange(dtheta));
    }
    Ok(dtheta)
}

/// Height of the step whose top edge subtends `delta_theta` with the
/// ground contact on a rigid wheel.
pub fn height_from_delta_theta(delta_theta: f64, geom: &SensorGeometry) -> Result<f64, LocalizeError> {
    if !(delta_theta > 0.0) {
        return Err(LocalizeError::NonPositive(delta_theta));
    }
    if delta_theta >= TAU {
        return Err(LocalizeError::OutOfRange(delta_theta));
    }
    Ok(geom.wheel_diameter * (delta_theta / 2.0).sin().powi(2))
}

/// Percentile of unsorted data by linear interpolation between order
/// statistics.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightEstimate {
    pub delta_t_c_ms: f64,
    pub delta_theta: f64,
    pub height_m: f64,
    pub window_t_ex_ms: (f64, f64),
    pub epsilon_ms: f64,
    pub pooled_peaks: usize,
}

/// Estimate together with the per-cycle peaks it was pooled from.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightAnalysis {
    pub estimate: Result<HeightEstimate, LocalizeError>,
    pub cycle_peaks: Vec<PeakSet>,
    /// Cycles in the window that could not be processed.
    pub skipped_cycles: Vec<(usize, DspError)>,
}

/// Return peaks of one raw cycle past the dead zone.
///
/// The aligned trace has its median removed, the part past the dead zone is
/// normalized by its maximum and smoothed before peak isolation.
pub fn cycle_peaks(
    log: &ExperimentLog,
    index: usize,
    trial_mean: f64,
    params: &PeakParams,
) -> Result<PeakSet, DspError> {
    let geom = &log.geometry;
    let shifted = align_and_trim(&log.cycles[index], trial_mean)?;
    let offset = (geom.dead_zone_ms() / 1000.0 * SAMPLE_RATE_HZ).ceil() as usize;
    let mut sorted = shifted.samples.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[sorted.len() / 2];
    let mut tail: Vec<f64> = shifted.samples.iter().skip(offset).map(|v| (v - floor).max(0.0)).collect();
    normalize_by_max(&mut tail)?;
    let smoothed = ema_filter(&tail, params.ema_alpha);
    let mut peaks = find_peaks(&smoothed, params);
    peaks.iter_mut().for_each(|p| p.index += offset);
    Ok(PeakSet::from_peaks(&peaks, index))
}

/// Pools return peaks of every cycle within ±500 ms of `collision_t_ex_ms`
/// and converts the 80th-minus-20th percentile spread into a height.
pub fn analyze_collision(
    log: &ExperimentLog,
    collision_t_ex_ms: f64,
    params: &PeakParams,
    geom: &SensorGeometry,
) -> HeightAnalysis {
    let window = (collision_t_ex_ms - COLLISION_WINDOW_MS, collision_t_ex_ms + COLLISION_WINDOW_MS);
    let mean = log.mean_amplitude();
    let mut cycle_peaks_out = Vec::new();
    let mut skipped = Vec::new();
    for (i, c) in log.cycles.iter().enumerate() {
        if c.t_ex_ms < window.0 || c.t_ex_ms > window.1 {
            continue;
        }
        match cycle_peaks(log, i, mean, params) {
            Ok(p) => cycle_peaks_out.push(p),
            Err(e) => skipped.push((i, e)),
        }
    }
    let times: Vec<f64> = cycle_peaks_out.iter().flat_map(|p| p.times().collect::<Vec<_>>()).collect();
    let estimate = estimate_from_peak_times(&times, geom).map(|(dt, dtheta, h)| HeightEstimate {
        delta_t_c_ms: dt,
        delta_theta: dtheta,
        height_m: h,
        window_t_ex_ms: window,
        epsilon_ms: COLLISION_WINDOW_MS,
        pooled_peaks: times.len(),
    });
    HeightAnalysis { estimate, cycle_peaks: cycle_peaks_out, skipped_cycles: skipped }
}

pub fn estimate_height(
    log: &ExperimentLog,
    collision_t_ex_ms: f64,
    params: &PeakParams,
    geom: &SensorGeometry,
) -> Result<HeightEstimate, LocalizeError> {
    analyze_collision(log, collision_t_ex_ms, params, geom).estimate
}

/// `(Δt_c, Δθ, h)` from pooled peak ranging times in ms.
pub fn estimate_from_peak_times(times: &[f64], geom: &SensorGeometry) -> Result<(f64, f64, f64), LocalizeError> {
    if times.len() < 2 {
        return Err(LocalizeError::InsufficientPeaks { found: times.len() });
    }
    let hi = percentile(times, UPPER_PERCENTILE).unwrap_or(0.0);
    let lo = percentile(times, LOWER_PERCENTILE).unwrap_or(0.0);
    let dt = hi - lo;
    let dtheta = delta_theta_from_delta_t(dt, geom)?;
    Ok((dt, dtheta, height_from_delta_theta(dtheta, geom)?))
}
