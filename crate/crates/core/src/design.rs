//! Closed-form design trade-offs: query time, ranging cycles per wheel
//! rotation, and the minimum resolvable separation of two indentations.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SensorGeometry;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("invalid geometry: waveguide length {length} m, speed of sound {speed_of_sound} m/s")]
    InvalidGeometry { length: f64, speed_of_sound: f64 },
    #[error("angular speed must be positive, got {0} rad/s")]
    InvalidSpeed(f64),
    #[error("pulse frequency must be positive and the pulse at least one cycle (f = {frequency} Hz, n = {cycles})")]
    InvalidFrequency { frequency: f64, cycles: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub query_time_ms: f64,
    pub cycles_per_rotation: f64,
    pub min_separation_m: f64,
    pub wavelength_m: f64,
    pub pulse_cycles: u32,
}

/// Round-trip time of the pulse through the whole waveguide, in ms.
pub fn query_time(geom: &SensorGeometry) -> Result<f64, DesignError> {
    let length = geom.total_length();
    if !(length > 0.0) || !(geom.speed_of_sound > 0.0) {
        return Err(DesignError::InvalidGeometry { length, speed_of_sound: geom.speed_of_sound });
    }
    Ok(2.0 * length / geom.speed_of_sound * 1000.0)
}

/// Ranging cycles acquired per wheel rotation.
pub fn cycles_per_rotation(geom: &SensorGeometry) -> Result<f64, DesignError> {
    if !(geom.angular_speed > 0.0) {
        return Err(DesignError::InvalidSpeed(geom.angular_speed));
    }
    let path = 2.0 * PI * geom.wheel_radius + geom.inner_length;
    if !(path > 0.0) || !(geom.speed_of_sound > 0.0) {
        return Err(DesignError::InvalidGeometry { length: path, speed_of_sound: geom.speed_of_sound });
    }
    Ok(PI * geom.speed_of_sound / (geom.angular_speed * path))
}

/// Smallest separation (m) at which two indentations give distinct returns.
pub fn min_separation(geom: &SensorGeometry) -> Result<f64, DesignError> {
    if !(geom.pulse_frequency > 0.0) || geom.pulse_cycles == 0 {
        return Err(DesignError::InvalidFrequency { frequency: geom.pulse_frequency, cycles: geom.pulse_cycles });
    }
    Ok(f64::from(geom.pulse_cycles) * geom.wavelength() / 2.0)
}

pub fn report(geom: &SensorGeometry) -> Result<DesignReport, DesignError> {
    Ok(DesignReport {
        query_time_ms: query_time(geom)?,
        cycles_per_rotation: cycles_per_rotation(geom)?,
        min_separation_m: min_separation(geom)?,
        wavelength_m: geom.wavelength(),
        pulse_cycles: geom.pulse_cycles,
    })
}

impl fmt::Display for DesignReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22}{:>12.4} ms", "query time", self.query_time_ms)?;
        writeln!(f, "{:<22}{:>12.1}", "cycles per rotation", self.cycles_per_rotation)?;
        writeln!(f, "{:<22}{:>12.3} mm", "min separation", self.min_separation_m * 1000.0)?;
        writeln!(f, "{:<22}{:>12.3} mm", "wavelength", self.wavelength_m * 1000.0)?;
        write!(f, "{:<22}{:>12}", "pulse cycles", self.pulse_cycles)
    }
}
